"""Discrete-event execution of a task graph under frequency timelines.

A compute task progresses at rate ``1 / exec[f]`` while its processor runs
at frequency ``f`` and finishes when its progress reaches one. Slack tasks
end when every awaited message has arrived (and not before a planned
release time, if the schedule carries one); barrier slack tasks end when
every core has reached the barrier.
"""

from __future__ import annotations

import csv
import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .graph import (
    GraphError, MachineModel, TaskGraph, TaskKind, ValidationReport, deadline,
    insert_slack_tasks, power_table,
)

TIME_TOL = 1e-9


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Segment:
    start: float
    freq: int


@dataclass(frozen=True)
class TaskAssignment:
    begin: float
    end: float
    time_at: dict[int, float]


@dataclass
class Schedule:
    """Piecewise-constant frequency per processor on ``[0, horizon]``.

    ``tasks`` optionally records the per-task plan the schedule was decoded
    from; for slack tasks its ``end`` is used as a release time by
    :func:`simulate`.
    """

    processors: dict[int, list[Segment]]
    horizon: float
    tasks: dict[str, TaskAssignment] = field(default_factory=dict)

    def spans(self, pid: int) -> list[tuple[float, float, int]]:
        segs = self.processors.get(pid, [])
        out = []
        for k, s in enumerate(segs):
            end = segs[k + 1].start if k + 1 < len(segs) else self.horizon
            out.append((s.start, end, s.freq))
        return out

    def merged_spans(self, pid: int) -> list[tuple[float, float, int]]:
        out: list[list] = []
        for a, b, f in self.spans(pid):
            if b - a <= TIME_TOL:
                continue
            if out and out[-1][2] == f and abs(out[-1][1] - a) <= TIME_TOL:
                out[-1][1] = b
            else:
                out.append([a, b, f])
        return [tuple(s) for s in out]

    def to_dict(self) -> dict[str, Any]:
        pids = sorted(self.processors)
        out: dict[str, Any] = {
            "processors": [
                {"segments": [{"t": s.start, "f": s.freq} for s in self.processors[p]]}
                for p in pids
            ],
            "horizon": self.horizon,
        }
        if self.tasks:
            out["tasks"] = {
                tid: {"bT": a.begin, "eT": a.end,
                      "tT": {str(f): v for f, v in a.time_at.items()}}
                for tid, a in self.tasks.items()
            }
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Schedule":
        allowed = {"processors", "horizon", "tasks"}
        if not isinstance(data, dict) or set(data) - allowed:
            raise GraphError(f"schedule: unknown fields {sorted(set(data) - allowed)}")
        procs = {}
        for pid, p in enumerate(data["processors"]):
            procs[pid] = [Segment(float(s["t"]), int(s["f"])) for s in p["segments"]]
        tasks = {
            tid: TaskAssignment(float(a["bT"]), float(a["eT"]),
                                {int(f): float(v) for f, v in a.get("tT", {}).items()})
            for tid, a in data.get("tasks", {}).items()
        }
        return cls(procs, float(data["horizon"]), tasks)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "Schedule":
        return cls.from_dict(json.loads(Path(path).read_text()))


def constant_schedule(machine: MachineModel, freq: int, horizon: float) -> Schedule:
    return Schedule({p.id: [Segment(0.0, freq)] for p in machine.processors}, horizon)


def all_max_schedule(machine: MachineModel, horizon: float = math.inf) -> Schedule:
    return constant_schedule(machine, machine.f_max, horizon)


@dataclass
class Timeline:
    begin: dict[str, float]
    end: dict[str, float]
    time_at: dict[str, dict[int, float]]
    total_time: float

    def slack_intervals(self, graph: TaskGraph) -> list[tuple[str, float, float]]:
        """Realised ``(id, begin, end)`` of every slack and barrier slack task."""
        graph = insert_slack_tasks(graph)
        return [(t.id, self.begin[t.id], self.end[t.id]) for t in graph.tasks if t.is_slack]


def _overlaps(spans, a: float, b: float, freqs) -> dict[int, float]:
    out = {f: 0.0 for f in freqs}
    for s, e, f in spans:
        lo, hi = max(a, s), min(b, e)
        if hi > lo:
            out[f] += hi - lo
    return out


def _advance(spans, start: float, exec_map: dict[int, float]) -> float:
    """Time at which a task started at ``start`` accumulates unit progress."""
    remaining = 1.0
    for s, e, f in spans:
        if e <= start:
            continue
        a = max(s, start)
        avail = (e - a) / exec_map[f]
        if remaining <= avail:
            return a + remaining * exec_map[f]
        remaining -= avail
    if remaining <= 1e-12:
        return spans[-1][1] if spans else start
    raise SimulationError("unfinished tasks: schedule horizon too short")


def simulate(graph: TaskGraph, machine: MachineModel, schedule: Schedule) -> Timeline:
    graph = insert_slack_tasks(graph, machine)
    spans = {p.id: schedule.spans(p.id) for p in machine.processors}
    proc_of = machine.core_to_processor
    begin: dict[str, float] = {}
    end: dict[str, float] = {}
    pending: dict[str, int] = {}
    arrived: dict[str, float] = {}
    at_barrier: dict[int, float] = {}
    cores = graph.cores
    heap: list[tuple[float, int, str]] = []
    counter = 0

    def release(task_id: str) -> float:
        planned = schedule.tasks.get(task_id)
        return planned.end if planned is not None else -math.inf

    def start(task_id: str, t: float):
        nonlocal counter
        task = graph.task(task_id)
        begin[task_id] = t
        if task.kind is TaskKind.COMPUTE:
            if not spans[proc_of[task.core]]:
                raise SimulationError(f"no frequency timeline for processor of task {task_id}")
            finish = _advance(spans[proc_of[task.core]], t, task.exec)
            counter += 1
            heapq.heappush(heap, (finish, counter, task_id))
        elif task.kind is TaskKind.SLACK:
            msgs = graph.slack_messages(task_id)
            pending[task_id] = sum(1 for e in msgs if e.from_task not in end)
            arrived[task_id] = max([t, release(task_id)] + [
                end[e.from_task] + e.transmission for e in msgs if e.from_task in end
            ])
            if pending[task_id] == 0:
                counter += 1
                heapq.heappush(heap, (arrived[task_id], counter, task_id))
        else:
            at_barrier[task.core] = t
            if len(at_barrier) == len(cores):
                rel = max([*at_barrier.values()] + [release(graph.core_sequence(c)[-1].id)
                                                    for c in cores])
                for c in cores:
                    counter += 1
                    heapq.heappush(heap, (rel, counter, graph.core_sequence(c)[-1].id))

    for c in cores:
        start(graph.core_sequence(c)[0].id, 0.0)
    now = 0.0
    while heap:
        now, _, tid = heapq.heappop(heap)
        end[tid] = now
        nxt = graph.following(tid)
        if nxt is not None:
            start(nxt.id, now)
        for e in graph.edges:
            if e.from_task != tid:
                continue
            slack = graph.previous(e.to_task)
            if slack is None or slack.id not in pending or pending[slack.id] == 0:
                # sender finished before the receiver reached its slack; start() sees it
                continue
            pending[slack.id] -= 1
            arrived[slack.id] = max(arrived[slack.id], now + e.transmission)
            if pending[slack.id] == 0:
                counter += 1
                heapq.heappush(heap, (arrived[slack.id], counter, slack.id))
    unfinished = [t.id for t in graph.tasks if t.id not in end]
    if unfinished:
        raise SimulationError(f"unfinished tasks: {unfinished[:5]}")
    total = max((end[graph.core_sequence(c)[-1].id] for c in cores), default=0.0)
    if total > schedule.horizon + TIME_TOL:
        raise SimulationError(
            f"unfinished tasks: execution ends at {total:.9g} after horizon {schedule.horizon:.9g}")
    time_at = {}
    for t in graph.tasks:
        sp = spans[proc_of[t.core]]
        time_at[t.id] = _overlaps(sp, begin[t.id], end[t.id], machine.freq_ids)
    return Timeline(begin, end, time_at, total)


def energy(timeline: Timeline, graph: TaskGraph,
           machine: MachineModel) -> tuple[float, dict[str, float]]:
    """Total and per-task energy (J); slack is charged at idle power."""
    graph = insert_slack_tasks(graph, machine)
    per_task = {}
    for t in graph.tasks:
        power = power_table(t, graph, machine)
        per_task[t.id] = sum(timeline.time_at[t.id][f] * power[f] for f in machine.freq_ids)
    return sum(per_task.values()), per_task


def check_schedule(schedule: Schedule, machine: MachineModel, x: float,
                   exec_time: float, tol: float = TIME_TOL) -> ValidationReport:
    report = ValidationReport()
    th = machine.threshold_th
    freqs = set(machine.freq_ids)
    for pid, segs in schedule.processors.items():
        if pid not in {p.id for p in machine.processors}:
            report.add(f"schedule names unknown processor {pid}")
            continue
        if segs and abs(segs[0].start) > tol:
            report.add(f"processor {pid}: timeline starts at {segs[0].start} instead of 0")
        for a, b in zip(segs, segs[1:]):
            if b.start < a.start - tol:
                report.add(f"processor {pid}: segments out of order at t={b.start}")
        for s in segs:
            if s.freq not in freqs:
                report.add(f"processor {pid}: unknown frequency {s.freq}")
        for a, b, f in schedule.merged_spans(pid):
            if b - a < th - tol:
                report.add(
                    f"processor {pid}: dwell {b - a:.6g}s at frequency {f} "
                    f"from t={a:.6g} is below threshold {th}")
    limit = deadline(exec_time, x)
    if schedule.horizon > limit + tol:
        report.add(f"horizon {schedule.horizon:.9g} exceeds deadline {limit:.9g}")
    return report


def write_gantt(path: str | Path, timeline: Timeline, graph: TaskGraph,
                machine: MachineModel, schedule: Schedule) -> None:
    graph = insert_slack_tasks(graph, machine)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["task", "core", "kind", "start", "end", "segments"])
        for t in graph.tasks:
            a, b = timeline.begin[t.id], timeline.end[t.id]
            pieces = []
            for s, e, f in schedule.spans(machine.core_to_processor[t.core]):
                lo, hi = max(a, s), min(b, e)
                if hi - lo > TIME_TOL:
                    pieces.append(f"f{f}:{lo:.9g}-{hi:.9g}")
            w.writerow([t.id, t.core, t.kind.value, f"{a:.9g}", f"{b:.9g}", ";".join(pieces)])
