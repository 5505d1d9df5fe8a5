"""Brute-force optimum over the binaries of a formulation, and random instances.

The oracle walks the binaries of the very model the branch and bound sees,
in id order, solving the LP with the prefix fixed. Subtrees whose prefix is
already LP-infeasible are cut; nothing is cut on objective grounds, so every
feasible complete assignment is visited and priced. LPs go to HiGHS by
default, which keeps the oracle independent of the in-house simplex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import (
    FrequencyLevel, MachineModel, MessageEdge, ProcessorSpec, Task, TaskGraph, validate_graph,
)
from .milp import MilpModel
from .solver import FEAS_TOL, OPT_TOL, solve_lp_arrays
from .switch import build_switch_milp
from .workload import build_workload_milp

MAX_BINARIES = 20


class OracleRefusal(RuntimeError):
    def __init__(self, formulation: str, binaries: int, limit: int):
        self.binaries = binaries
        self.limit = limit
        super().__init__(f"{formulation} model has {binaries} binaries; "
                         f"the oracle enumerates at most {limit}")


class OracleDisagreement(AssertionError):
    pass


@dataclass
class OracleResult:
    energy: float
    witness: np.ndarray | None
    model: MilpModel
    leaves: int
    lps: int

    @property
    def feasible(self) -> bool:
        return self.witness is not None


def enumerate_optimum(model: MilpModel, prune: bool = True,
                      max_binaries: int = MAX_BINARIES, engine: str = "highs") -> OracleResult:
    """Minimum of the model over every binary assignment (LP per assignment)."""
    c, A, senses, b, lb0, ub0, binary = model.arrays()
    bins = np.flatnonzero(binary)
    if len(bins) > max_binaries:
        raise OracleRefusal(model.name, len(bins), max_binaries)
    arrays = (c, A, senses, b)
    best, witness = math.inf, None
    leaves = lps = 0
    lb, ub = lb0.copy(), ub0.copy()

    def visit(depth: int):
        nonlocal best, witness, leaves, lps
        if depth == len(bins) or prune:
            res = solve_lp_arrays(arrays, lb, ub, engine, FEAS_TOL, OPT_TOL)
            lps += 1
            if res.status != "optimal":
                return
            if depth == len(bins):
                leaves += 1
                if res.objective < best:
                    best, witness = res.objective, res.x
                return
        j = bins[depth]
        for v in (0.0, 1.0):
            lb[j] = ub[j] = v
            visit(depth + 1)
        lb[j], ub[j] = lb0[j], ub0[j]

    visit(0)
    energy = best + model.objective.const if witness is not None else math.inf
    return OracleResult(energy, witness, model, leaves, lps)


def brute_force_optimum(graph: TaskGraph, machine: MachineModel, x: float,
                        formulation: str = "workload", slots: int | None = None,
                        prune: bool = True, max_binaries: int = MAX_BINARIES,
                        rel_tol: float = 1e-6, engine: str = "highs") -> OracleResult:
    """Enumerated optimum of the chosen formulation; ``both`` also cross-checks.

    An infeasible instance gives ``energy = inf`` and no witness.
    """
    if formulation not in ("workload", "switch", "both"):
        raise ValueError(f"unknown formulation {formulation!r}")
    results = {}
    if formulation in ("workload", "both"):
        results["workload"] = build_workload_milp(graph, machine, x)
    if formulation in ("switch", "both"):
        results["switch"] = build_switch_milp(graph, machine, x, slots)
    for name, model in results.items():
        if model.n_binary > max_binaries:
            raise OracleRefusal(name, model.n_binary, max_binaries)
    out = {name: enumerate_optimum(model, prune, max_binaries, engine)
           for name, model in results.items()}
    if formulation == "both":
        a, b = out["workload"].energy, out["switch"].energy
        if not (a == b or abs(a - b) <= rel_tol * max(abs(a), abs(b), 1.0)):
            raise OracleDisagreement(f"workload optimum {a} differs from switch optimum {b}")
        return out["workload"]
    return out[formulation]


# ---------------------------------------------------------------- instances


@dataclass(frozen=True)
class Dims:
    procs: int = 1
    cores: int = 2
    tasks_per_core: int = 2
    freqs: int = 2
    edge_density: float = 0.5
    threshold: float = 0.05


def random_instance(seed: int, dims: Dims = Dims()) -> tuple[TaskGraph, MachineModel]:
    """Small reproducible instance with monotone exec and power tables.

    Messages only run from a task to a later position on another core, which
    keeps the precedence relation acyclic.
    """
    rng = np.random.default_rng(seed)
    fmin, fmax = 1.2e9, 2.4e9
    nominal = [fmax] if dims.freqs == 1 else list(np.linspace(fmin, fmax, dims.freqs))
    freqs = [FrequencyLevel(k, float(v)) for k, v in enumerate(nominal)]
    ratio = [float(v) / fmin for v in nominal]
    procs = [ProcessorSpec(p, tuple(range(p * dims.cores, (p + 1) * dims.cores)))
             for p in range(dims.procs)]
    idle = {k: float(round(1.0 + 0.5 * r * r, 6)) for k, r in enumerate(ratio)}
    machine = MachineModel(tuple(procs), tuple(freqs), dims.threshold, idle_power=idle)
    tasks = []
    for core in range(dims.procs * dims.cores):
        for pos in range(dims.tasks_per_core):
            base = rng.uniform(0.5, 2.0)
            beta = rng.uniform(0.6, 1.0)
            static = rng.uniform(2.0, 5.0)
            dyn = rng.uniform(5.0, 15.0)
            exec_ = {k: float(round(base * r ** -beta, 6)) for k, r in enumerate(ratio)}
            power = {k: float(round(static + dyn * r ** 3, 6)) for k, r in enumerate(ratio)}
            tasks.append(Task(f"T{core}_{pos}", core, exec=exec_, power=power, seq=pos))
    edges = []
    by_pos = {(t.core, t.seq): t for t in tasks}
    ncores = dims.procs * dims.cores
    for a in tasks:
        for core in range(ncores):
            if core == a.core:
                continue
            for pos in range(max(a.seq + 1, 1), dims.tasks_per_core):
                if rng.random() < dims.edge_density:
                    edges.append(MessageEdge(a.id, by_pos[(core, pos)].id,
                                             float(round(rng.uniform(0.0, 0.3), 6))))
    graph = TaskGraph(tuple(tasks), tuple(edges))
    report = validate_graph(graph, machine)
    assert report.ok, str(report)
    return graph, machine


@dataclass(frozen=True)
class SuiteCase:
    seed: int
    graph: TaskGraph
    machine: MachineModel
    x: float
    dims: Dims


SUITE_SHAPES = ((1, 1, 1), (1, 1, 2), (1, 1, 3), (1, 2, 1), (2, 1, 1), (2, 1, 2))


def oracle_suite(n: int = 50, start: int = 0, max_binaries: int = MAX_BINARIES,
                 freqs: int = 2) -> list[SuiteCase]:
    """Seeded desk-scale instances whose workload model fits the oracle budget.

    Shapes cycle over at most two processors, two cores and three tasks per
    core; edge density, dwell threshold and loss budget ``x`` are drawn per
    seed. Seeds whose workload model has more than ``max_binaries`` binaries
    are skipped, so the suite is the first ``n`` seeds that fit.
    """
    from .workload import count_workloads

    out = []
    seed = start
    while len(out) < n:
        rng = np.random.default_rng(10_000 + seed)
        procs, cores, tasks = SUITE_SHAPES[seed % len(SUITE_SHAPES)]
        dims = Dims(procs, cores, tasks, freqs, float(rng.choice([0.0, 0.3, 0.6])),
                    float(round(rng.uniform(0.02, 0.3), 3)))
        x = float(rng.choice([0.0, 10.0, 20.0, 50.0, 100.0]))
        graph, machine = random_instance(seed, dims)
        if sum(count_workloads(graph, machine).values()) * (freqs + 1) <= max_binaries:
            out.append(SuiteCase(seed, graph, machine, x, dims))
        seed += 1
    return out
