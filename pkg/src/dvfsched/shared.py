"""Rows common to both formulations: precedence, slack, durations, deadline
and the energy objective."""

from __future__ import annotations

from dataclasses import dataclass, field

from .graph import (
    MachineModel, TaskGraph, TaskKind, deadline, max_frequency_makespan,
    power_table, insert_slack_tasks, require_valid,
)
from .milp import LinExpr, MilpModel, Var, lsum


@dataclass
class TaskVars:
    """Variable handles per task id.

    ``t[task][f]`` is the time spent at frequency ``f`` (``tT`` for compute
    tasks, ``tTs`` for slack); ``delta`` exists for compute tasks only.
    """

    begin: dict[str, Var] = field(default_factory=dict)
    end: dict[str, Var] = field(default_factory=dict)
    t: dict[str, dict[int, Var]] = field(default_factory=dict)
    delta: dict[str, dict[int, Var]] = field(default_factory=dict)
    total_time: Var | None = None


def default_big_M(graph: TaskGraph, machine: MachineModel, x: float) -> float:
    """Twice the deadline: every time variable lives in ``[0, deadline]``."""
    d = deadline(max_frequency_makespan(graph, machine), x)
    return 2.0 * max(d, machine.threshold_th, 1e-9)


def new_model(graph: TaskGraph, machine: MachineModel, x: float, name: str,
              big_M: float | None = None) -> tuple[MilpModel, TaskGraph, float]:
    """Validated, slack-complete graph plus an empty model sized for it."""
    require_valid(graph, machine)
    graph = insert_slack_tasks(graph, machine)
    exec_time = max_frequency_makespan(graph, machine)
    if big_M is None:
        big_M = default_big_M(graph, machine, x)
    model = MilpModel(big_M=big_M, name=name)
    model.meta.update(exec_time=exec_time, x=x, deadline=deadline(exec_time, x))
    return model, graph, exec_time


def create_task_vars(model: MilpModel, graph: TaskGraph, machine: MachineModel) -> TaskVars:
    horizon = model.meta.get("deadline", model.big_M)
    tv = TaskVars()
    for t in graph.tasks:
        tv.begin[t.id] = model.add_var(f"bT.{t.id}", ub=horizon)
        tv.end[t.id] = model.add_var(f"eT.{t.id}", ub=horizon)
        tv.t[t.id] = {f: model.add_var(f"tT.{t.id}.f{f}", ub=horizon) for f in machine.freq_ids}
        if t.kind is TaskKind.COMPUTE:
            tv.delta[t.id] = {f: model.add_var(f"delta.{t.id}.f{f}", ub=1.0)
                              for f in machine.freq_ids}
    # no schedule beats the all-max makespan, so exec_Time is a valid lower bound
    floor = min(model.meta.get("exec_time", 0.0), horizon)
    tv.total_time = model.add_var("total_Time", lb=floor, ub=horizon)
    model.meta["task_vars"] = tv
    return tv


def emit_precedence(model: MilpModel, graph: TaskGraph, tv: TaskVars) -> list[int]:
    """Start of the program, successor rules and message arrival rows."""
    rows = []
    for core in graph.cores:
        seq = graph.core_sequence(core)
        rows.append(model.eq(tv.begin[seq[0].id], 0.0, f"start.{seq[0].id}"))
        for a, b in zip(seq, seq[1:]):
            rows.append(model.eq(tv.begin[b.id], tv.end[a.id], f"succ.{a.id}.{b.id}"))
    for t in graph.tasks:
        if t.kind is not TaskKind.SLACK:
            continue
        for e in graph.slack_messages(t.id):
            rows.append(model.ge(tv.end[t.id], tv.end[e.from_task] + e.transmission,
                                 f"recv.{t.id}.{e.from_task}"))
        rows.append(model.ge(tv.end[t.id], tv.begin[t.id], f"slack.{t.id}"))
    return rows


def emit_duration_and_completion(model: MilpModel, graph: TaskGraph,
                                 machine: MachineModel, tv: TaskVars) -> list[int]:
    rows = []
    for t in graph.tasks:
        ts = tv.t[t.id]
        rows.append(model.eq(tv.end[t.id] - tv.begin[t.id], lsum(ts.values()), f"dur.{t.id}"))
        if t.kind is TaskKind.COMPUTE:
            ds = tv.delta[t.id]
            for f in machine.freq_ids:
                rows.append(model.eq(ts[f], t.exec[f] * ds[f], f"frac.{t.id}.f{f}"))
            rows.append(model.eq(lsum(ds.values()), 1.0, f"done.{t.id}"))
    return rows


def emit_deadline(model: MilpModel, graph: TaskGraph, tv: TaskVars,
                  exec_time: float, x: float) -> list[int]:
    """Barrier end equality (chained core to core), total_Time and deadline."""
    barriers = [graph.core_sequence(c)[-1] for c in graph.cores]
    rows = []
    for a, b in zip(barriers, barriers[1:]):
        rows.append(model.eq(tv.end[a.id], tv.end[b.id], f"barrier.{a.core}.{b.core}"))
    if barriers:
        rows.append(model.eq(tv.total_time, tv.end[barriers[0].id], "total_Time.def"))
    else:
        rows.append(model.eq(tv.total_time, 0.0, "total_Time.def"))
    rows.append(model.le(tv.total_time, deadline(exec_time, x), "deadline"))
    return rows


def emit_objective(model: MilpModel, graph: TaskGraph, machine: MachineModel,
                   tv: TaskVars) -> LinExpr:
    """Energy: time at each frequency times the task (or idle) power there."""
    terms = []
    for t in graph.tasks:
        power = power_table(t, graph, machine)
        terms.extend(power[f] * tv.t[t.id][f] for f in machine.freq_ids)
    obj = lsum(terms)
    model.minimize(obj)
    return obj


def emit_shared(model: MilpModel, graph: TaskGraph, machine: MachineModel,
                exec_time: float, x: float) -> TaskVars:
    tv = create_task_vars(model, graph, machine)
    emit_precedence(model, graph, tv)
    emit_duration_and_completion(model, graph, machine, tv)
    emit_deadline(model, graph, tv, exec_time, x)
    emit_objective(model, graph, machine, tv)
    return tv


def shared_size(graph: TaskGraph, machine: MachineModel) -> tuple[int, int]:
    """(variables, rows) that :func:`emit_shared` adds for a slack-complete graph."""
    nf = len(machine.freq_ids)
    n = len(graph.tasks)
    compute = len(graph.compute_tasks)
    variables = n * (2 + nf) + compute * nf + 1
    rows = len(graph.cores) + sum(len(graph.core_sequence(c)) - 1 for c in graph.cores)
    for t in graph.tasks:
        if t.kind is TaskKind.SLACK:
            rows += len(graph.slack_messages(t.id)) + 1
    rows += n + compute * (nf + 1)
    rows += max(len(graph.cores) - 1, 0) + 2
    return variables, rows
