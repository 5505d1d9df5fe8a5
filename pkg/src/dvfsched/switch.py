"""Frequency-switch formulation: explicit switch instants per processor.

Each processor owns ``m`` slots. Slot ``j`` runs frequency ``j mod |F|``
(ascending cycle) between the instants ``c_j`` and ``c_{j+1}``, with
``c_0 = 0`` and the last slot closing at ``total_Time``. A slot either has
zero length or lasts at least the dwell threshold. For every task and slot
the overlap ``d`` of the task interval with the slot is linearised through
max/min/or encodings, and a task's time at ``f`` is the sum of its overlaps
with the slots running ``f``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import MachineModel, TaskGraph, insert_slack_tasks
from .milp import (
    MilpModel, ModelError, Var, add_geq_indicator, add_max, add_min, add_or, lsum,
)
from .shared import emit_shared, new_model, shared_size
from .simulator import TIME_TOL, Schedule, Segment
from .workload import DecodeError, _check_against_timeline, _processor_cores, _task_assignments

BINARIES_PER_PAIR = 5
CONTINUOUS_PER_PAIR = 5
ROWS_PER_PAIR = 22


@dataclass
class SlotVars:
    instants: list[Var]
    dwell: list[Var]
    freqs: list[int]


@dataclass(frozen=True)
class SwitchSize:
    continuous: int
    binary: int
    task_binaries: int
    slot_binaries: int
    rows: int

    def as_dict(self) -> dict[str, int]:
        return {"continuous": self.continuous, "binaries": self.binary,
                "task_binaries": self.task_binaries, "slot_binaries": self.slot_binaries,
                "rows": self.rows}


def slot_frequency(machine: MachineModel, j: int) -> int:
    ids = machine.freq_ids
    return ids[j % len(ids)]


def _tasks_per_processor(graph: TaskGraph, machine: MachineModel) -> dict[int, list[str]]:
    return {p.id: [t.id for c in _processor_cores(graph, machine, p.id)
                   for t in graph.core_sequence(c)]
            for p in machine.processors}


def default_slots(graph: TaskGraph, machine: MachineModel) -> int:
    """``|F|`` times the longest core sequence, doubled."""
    graph = insert_slack_tasks(graph, machine)
    longest = max((len(graph.core_sequence(c)) for c in graph.cores), default=1)
    return len(machine.freq_ids) * longest * 2


def adequate_slots(graph: TaskGraph, machine: MachineModel) -> int:
    """Slots enough to replay any workload schedule.

    On a processor with ``k`` busy cores the member tuple changes at most
    ``sum(len) - (k - 1)`` times, and each piece needs at most one ascending
    pass over the frequencies.
    """
    graph = insert_slack_tasks(graph, machine)
    pieces = 1
    for p in machine.processors:
        cores = _processor_cores(graph, machine, p.id)
        if cores:
            pieces = max(pieces, sum(len(graph.core_sequence(c)) for c in cores) - len(cores) + 1)
    return len(machine.freq_ids) * pieces


def estimate_switch_model_size(graph: TaskGraph, machine: MachineModel, m: int) -> SwitchSize:
    """Variable and row counts of :func:`build_switch_milp` without building it."""
    graph = insert_slack_tasks(graph, machine)
    per_proc = _tasks_per_processor(graph, machine)
    n = sum(len(v) for v in per_proc.values())
    procs = len(machine.processors)
    nf = len(machine.freq_ids)
    shared_vars, shared_rows = shared_size(graph, machine)
    task_bin = BINARIES_PER_PAIR * n * m
    slot_bin = procs * m
    continuous = shared_vars + procs * m + CONTINUOUS_PER_PAIR * n * m
    rows = shared_rows + procs * (1 + m + 2 * m) + ROWS_PER_PAIR * n * m + n * nf
    return SwitchSize(continuous, task_bin + slot_bin, task_bin, slot_bin, rows)


def build_switch_milp(graph: TaskGraph, machine: MachineModel, x: float,
                      m: int | None = None, big_M: float | None = None) -> MilpModel:
    model, graph, exec_time = new_model(graph, machine, x, "switch", big_M)
    if m is None:
        m = default_slots(graph, machine)
    if m < len(machine.freq_ids):
        raise ModelError(f"slot count {m} is below the number of frequencies "
                         f"{len(machine.freq_ids)}")
    tv = emit_shared(model, graph, machine, exec_time, x)
    M, th = model.big_M, machine.threshold_th
    horizon = model.meta["deadline"]
    slots: dict[int, SlotVars] = {}
    pieces: dict[str, list[Var]] = {}
    per_proc = _tasks_per_processor(graph, machine)
    for p in machine.processors:
        c = [model.add_var(f"c.p{p.id}.s0", ub=0.0)]
        c += [model.add_var(f"c.p{p.id}.s{j}", ub=horizon) for j in range(1, m)]
        model.eq(c[0], 0.0, f"c.p{p.id}.origin")
        ends = c[1:] + [tv.total_time]
        zeta = []
        for j in range(m):
            if j + 1 < m:
                model.ge(c[j + 1], c[j], f"order.p{p.id}.s{j}")
            else:
                model.ge(tv.total_time, c[j], f"order.p{p.id}.s{j}")
            z = model.add_binary(f"zeta.p{p.id}.s{j}")
            span = ends[j] - c[j]
            model.ge(span, th * z, f"dwell.p{p.id}.s{j}")
            model.le(span, M * z, f"active.p{p.id}.s{j}")
            zeta.append(z)
        slots[p.id] = SlotVars(c, zeta, [slot_frequency(machine, j) for j in range(m)])
        for tid in per_proc[p.id]:
            b, e = tv.begin[tid], tv.end[tid]
            ds = []
            for j in range(m):
                tag = f"{tid}.s{j}"
                y = add_max(model, b, c[j], f"y.{tag}").value
                z = add_min(model, e, ends[j], f"z.{tag}").value
                psi = add_geq_indicator(model, b, ends[j], f"psi.{tag}")
                phi = add_geq_indicator(model, c[j], e, f"phi.{tag}")
                rho = add_or(model, psi, phi, f"rho.{tag}")
                d = model.add_var(f"d.{tag}", ub=horizon)
                model.le(z - y, d, f"d.lo.{tag}")
                model.le(d, M * (1 - rho), f"d.off.{tag}")
                model.le(z - y + d, 2 * (z - y) + M * rho, f"d.on.{tag}")
                ds.append(d)
            pieces[tid] = ds
            for f in machine.freq_ids:
                model.eq(tv.t[tid][f],
                         lsum(d for j, d in enumerate(ds) if slots[p.id].freqs[j] == f),
                         f"couple.{tid}.f{f}")
    model.meta.update(formulation="switch", graph=graph, machine=machine, slots=slots,
                      slot_count=m, pieces=pieces)
    return model


def decode_switch_solution(model: MilpModel, x) -> Schedule:
    """Read the switch instants as the timeline; zero-length slots are dropped."""
    x = np.asarray(x, dtype=float)
    machine: MachineModel = model.meta["machine"]
    graph: TaskGraph = model.meta["graph"]
    total = float(x[model.meta["task_vars"].total_time.id])
    procs: dict[int, list[Segment]] = {}
    for pid, sv in model.meta["slots"].items():
        inst = [float(x[v.id]) for v in sv.instants] + [total]
        if any(b < a - 1e-7 for a, b in zip(inst, inst[1:])):
            raise DecodeError(f"processor {pid}: switch instants decrease")
        segs: list[Segment] = []
        for j, f in enumerate(sv.freqs):
            if inst[j + 1] - inst[j] > TIME_TOL:
                if not segs or segs[-1].freq != f:
                    segs.append(Segment(inst[j], f))
        segs = segs or [Segment(0.0, machine.f_max)]
        segs[0] = Segment(0.0, segs[0].freq)
        procs[pid] = segs
    sched = Schedule(procs, total, _task_assignments(model, x))
    _check_against_timeline(sched, graph, machine)
    return sched
