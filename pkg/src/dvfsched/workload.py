"""Workload formulation: one shared frequency plan per tuple of parallel tasks.

A workload is one task per core of a processor such that no two members are
ordered by precedence, so they may run at the same time. Each workload gets
its own per-frequency durations ``tW^f``; a task's time at frequency ``f`` is
the sum over the workloads it belongs to. The dwell threshold applies to each
``tW^f``, and ``dW = max(0, eW - bW)`` forces workloads that cannot happen to
length zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import MachineModel, TaskGraph, insert_slack_tasks
from .milp import MilpModel, Var, add_indicator_nonzero, add_positive_part, lsum
from .shared import emit_shared, new_model
from .simulator import Schedule, Segment, TaskAssignment

DEFAULT_CAP = 200_000
DECODE_TOL = 1e-9


class WorkloadBlowUp(RuntimeError):
    """Raised instead of building a model whose workload variables exceed the cap."""

    def __init__(self, counts: dict[int, int], variables: int, cap: int, exact: bool):
        self.counts = counts
        self.variables = variables
        self.cap = cap
        self.exact = exact
        rel = "" if exact else ">= "
        total = sum(counts.values())
        super().__init__(
            f"workload blow-up: {rel}{total} workloads {counts} need {rel}{variables} "
            f"variables, cap is {cap}")


class DecodeError(RuntimeError):
    pass


@dataclass(frozen=True)
class Workload:
    processor: int
    members: tuple[str, ...]


@dataclass
class WorkloadVars:
    begin: Var
    end: Var
    dur: Var
    t: dict[int, Var]
    used: dict[int, Var]
    gamma: Var


def vars_per_workload(machine: MachineModel) -> int:
    """bW, eW, dW, gamma plus tW and its indicator per frequency."""
    return 2 * len(machine.freq_ids) + 4


def _processor_cores(graph: TaskGraph, machine: MachineModel, pid: int) -> list[int]:
    present = set(graph.cores)
    return [c for c in machine.processor(pid).cores if c in present]


def _related(graph: TaskGraph) -> list[int]:
    """Bitset per task of every task ordered with it (either direction)."""
    reach = graph.reach
    rel = list(reach)
    for i, bits in enumerate(reach):
        j = bits
        while j:
            low = j & -j
            rel[low.bit_length() - 1] |= 1 << i
            j ^= low
    return rel


def _isolated(graph: TaskGraph, cores: list[int], rel: list[int]) -> list[bool]:
    """Cores none of whose tasks is ordered with a task of another core listed."""
    idx = graph.index
    masks = {c: sum(1 << idx[t.id] for t in graph.core_sequence(c)) for c in cores}
    out = []
    for c in cores:
        others = sum(masks[o] for o in cores if o != c)
        out.append(all(rel[idx[t.id]] & others == 0 for t in graph.core_sequence(c)))
    return out


def enumerate_workloads(graph: TaskGraph, machine: MachineModel, processor: int) -> list[Workload]:
    """All tuples of pairwise unordered tasks, one per core, in lexicographic order."""
    graph = insert_slack_tasks(graph, machine)
    cores = _processor_cores(graph, machine, processor)
    if not cores:
        return []
    rel = _related(graph)
    idx = graph.index
    seqs = [graph.core_sequence(c) for c in cores]
    out: list[Workload] = []
    chosen: list[str] = []

    def dfs(depth: int, forbidden: int):
        if depth == len(seqs):
            out.append(Workload(processor, tuple(chosen)))
            return
        for t in seqs[depth]:
            i = idx[t.id]
            if forbidden >> i & 1:
                continue
            chosen.append(t.id)
            dfs(depth + 1, forbidden | rel[i])
            chosen.pop()

    dfs(0, 0)
    return out


def _count(graph: TaskGraph, machine: MachineModel,
           limit: int | None) -> tuple[dict[int, int], bool]:
    graph = insert_slack_tasks(graph, machine)
    rel = _related(graph) if graph.tasks else []
    idx = graph.index
    counts: dict[int, int] = {}
    total = 0
    for p in machine.processors:
        cores = _processor_cores(graph, machine, p.id)
        if not cores:
            counts[p.id] = 0
            continue
        iso = _isolated(graph, cores, rel)
        factor = math.prod(len(graph.core_sequence(c)) for c, k in zip(cores, iso) if k)
        seqs = [[idx[t.id] for t in graph.core_sequence(c)]
                for c, k in zip(cores, iso) if not k]
        budget = None if limit is None else (limit - total) // factor + 1
        found = 0

        def dfs(depth: int, forbidden: int) -> bool:
            nonlocal found
            if depth == len(seqs):
                found += 1
                return budget is not None and found >= budget
            for i in seqs[depth]:
                if not forbidden >> i & 1 and dfs(depth + 1, forbidden | rel[i]):
                    return True
            return False

        if seqs:
            stopped = dfs(0, 0)
        else:
            # every core isolated: the product is exact, nothing to search
            found, stopped = 1, False
        counts[p.id] = found * factor
        total += counts[p.id]
        if limit is not None and total > limit:
            return counts, not stopped and p is machine.processors[-1]
    return counts, True


def count_workloads(graph: TaskGraph, machine: MachineModel,
                    limit: int | None = None) -> dict[int, int]:
    """Workload count per processor without building anything.

    Cores unrelated to every other core of the processor contribute a plain
    product factor. With ``limit`` the search stops once the running total
    passes it, so the counts are then lower bounds.
    """
    return _count(graph, machine, limit)[0]


def check_workload_cap(graph: TaskGraph, machine: MachineModel,
                       cap: int = DEFAULT_CAP) -> dict[int, int]:
    """Exact counts, or :class:`WorkloadBlowUp` once the variables would pass ``cap``."""
    per = vars_per_workload(machine)
    counts, exact = _count(graph, machine, cap // per)
    total = sum(counts.values())
    if total * per > cap:
        raise WorkloadBlowUp(counts, total * per, cap, exact)
    return counts


def build_workload_milp(graph: TaskGraph, machine: MachineModel, x: float,
                        cap: int = DEFAULT_CAP, big_M: float | None = None) -> MilpModel:
    """Shared rows plus per-workload bounding, dwell and duration rows."""
    model, graph, exec_time = new_model(graph, machine, x, "workload", big_M)
    counts = check_workload_cap(graph, machine, cap)
    tv = emit_shared(model, graph, machine, exec_time, x)
    th = machine.threshold_th
    workloads: list[Workload] = []
    wvars: list[WorkloadVars] = []
    share: dict[str, dict[int, list[Var]]] = {t.id: {f: [] for f in machine.freq_ids}
                                              for t in graph.tasks}
    horizon = model.meta["deadline"]
    for p in machine.processors:
        for w in enumerate_workloads(graph, machine, p.id):
            k = len(workloads)
            tag = f"W{k}"
            bw = model.add_var(f"bW.{tag}", ub=horizon)
            ew = model.add_var(f"eW.{tag}", ub=horizon)
            dw = model.add_var(f"dW.{tag}", ub=horizon)
            tw = {f: model.add_var(f"tW.{tag}.f{f}", ub=horizon) for f in machine.freq_ids}
            for m in w.members:
                model.ge(bw, tv.begin[m], f"wbeg.{tag}.{m}")
                model.le(ew, tv.end[m], f"wend.{tag}.{m}")
            model.eq(dw, lsum(tw.values()), f"wdur.{tag}")
            used = {f: add_indicator_nonzero(model, tw[f], th, f"tWbar.{tag}.f{f}")
                    for f in machine.freq_ids}
            _, gamma = add_positive_part(model, ew, bw, f"gamma.{tag}", z=dw)
            for m in w.members:
                for f in machine.freq_ids:
                    share[m][f].append(tw[f])
            workloads.append(w)
            wvars.append(WorkloadVars(bw, ew, dw, tw, used, gamma))
    for t in graph.tasks:
        for f in machine.freq_ids:
            model.eq(tv.t[t.id][f], lsum(share[t.id][f]), f"couple.{t.id}.f{f}")
    model.meta.update(formulation="workload", graph=graph, machine=machine,
                      workloads=workloads, workload_vars=wvars, workload_counts=counts)
    return model


def incompatible_pairs(model: MilpModel) -> list[tuple[int, int]]:
    """Workload index pairs whose members are ordered in opposite directions.

    If on one core a member of ``W`` precedes the member of ``W'`` while on
    another core the member of ``W'`` precedes that of ``W``, the two cannot
    both take time.
    """
    graph: TaskGraph = model.meta["graph"]
    wls: list[Workload] = model.meta["workloads"]
    out = []
    for a in range(len(wls)):
        for b in range(a + 1, len(wls)):
            wa, wb = wls[a], wls[b]
            if wa.processor != wb.processor:
                continue
            pairs = list(zip(wa.members, wb.members))
            fwd = any(graph.precedes(u, v) for u, v in pairs)
            bwd = any(graph.precedes(v, u) for u, v in pairs)
            if fwd and bwd:
                out.append((a, b))
    return out


def _task_assignments(model: MilpModel, x) -> dict[str, TaskAssignment]:
    tv = model.meta["task_vars"]
    return {
        tid: TaskAssignment(float(x[tv.begin[tid].id]), float(x[tv.end[tid].id]),
                            {f: float(x[v.id]) for f, v in tv.t[tid].items()})
        for tid in tv.begin
    }


def decode_workload_solution(model: MilpModel, x) -> Schedule:
    """Timeline per processor: workloads by start time, frequencies ascending."""
    x = np.asarray(x, dtype=float)
    machine: MachineModel = model.meta["machine"]
    graph: TaskGraph = model.meta["graph"]
    total = float(x[model.meta["task_vars"].total_time.id])
    procs: dict[int, list[Segment]] = {}
    for p in machine.processors:
        items = [(float(x[wv.begin.id]), k, wv) for k, (w, wv) in
                 enumerate(zip(model.meta["workloads"], model.meta["workload_vars"]))
                 if w.processor == p.id and x[wv.dur.id] > DECODE_TOL]
        items.sort(key=lambda it: (it[0], it[1]))
        segs: list[Segment] = []
        cursor = 0.0
        for start, _, wv in items:
            if start > cursor + 1e-7:
                raise DecodeError(f"processor {p.id}: gap in workload cover at t={cursor:.9g}")
            cursor = max(cursor, start)
            for f in machine.freq_ids:
                d = float(x[wv.t[f].id])
                if d > DECODE_TOL:
                    segs.append(Segment(cursor, f))
                    cursor += d
        if cursor < total - 1e-7 and items:
            raise DecodeError(f"processor {p.id}: workloads cover only {cursor:.9g} of {total:.9g}")
        procs[p.id] = _merge(segs) or [Segment(0.0, machine.f_max)]
    sched = Schedule(procs, total, _task_assignments(model, x))
    _check_against_timeline(sched, graph, machine)
    return sched


def _merge(segs: list[Segment]) -> list[Segment]:
    out: list[Segment] = []
    for s in segs:
        if out and out[-1].freq == s.freq:
            continue
        out.append(s)
    return out


def _check_against_timeline(sched: Schedule, graph: TaskGraph, machine: MachineModel,
                            tol: float = DECODE_TOL) -> None:
    """Per-task time at each frequency read off the timeline must match the point."""
    graph = insert_slack_tasks(graph, machine)
    proc_of = machine.core_to_processor
    scale = max(1.0, sched.horizon)
    for tid, a in sched.tasks.items():
        spans = sched.spans(proc_of[graph.task(tid).core])
        for f in machine.freq_ids:
            got = sum(max(0.0, min(a.end, e) - max(a.begin, s)) for s, e, g in spans if g == f)
            if abs(got - a.time_at[f]) > tol * scale:
                raise DecodeError(
                    f"task {tid}: timeline gives {got:.12g}s at f{f}, solution has "
                    f"{a.time_at[f]:.12g}s")


def diagnostics(graph: TaskGraph, machine: MachineModel) -> list[dict[str, int]]:
    counts = count_workloads(graph, machine)
    per_bin = len(machine.freq_ids) + 1
    return [{"processor": p, "workloads": n, "binaries": n * per_bin} for p, n in counts.items()]


def workload_durations(model: MilpModel, x) -> np.ndarray:
    return np.array([x[wv.dur.id] for wv in model.meta["workload_vars"]], dtype=float)
