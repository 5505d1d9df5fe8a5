"""Machine model and MPI-style task graphs.

A program is a set of per-core task sequences. Tasks on one core run in a
total order; a message edge ``from -> to`` means that ``to`` is created by
the reception of a message sent at the end of ``from``. The task that ends
with the reception is the core predecessor of ``to``; the idle interval
between its end and the message arrival is modelled by a slack pseudo-task
inserted right after it. Every core also ends with a barrier slack task that
models the final global synchronisation.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping

ANY_SOURCE = "*"
SLACK_PREFIX = "Ts_"
BARRIER_PREFIX = "Tb_"


class GraphError(ValueError):
    """Raised for structurally unusable graphs or malformed input files."""


class TaskKind(str, enum.Enum):
    COMPUTE = "compute"
    SLACK = "slack"
    BARRIER_SLACK = "barrier_slack"


@dataclass(frozen=True)
class FrequencyLevel:
    id: int
    nominal: float | None = None


@dataclass(frozen=True)
class ProcessorSpec:
    id: int
    cores: tuple[int, ...]


@dataclass(frozen=True)
class MachineModel:
    """Processors, their cores, the discrete frequency levels and ``Th``.

    ``idle_power`` optionally gives the per-frequency power charged while a
    core sits in a slack task. When it is missing the idle power at frequency
    ``f`` is ``idle_factor`` times the smallest compute power at ``f`` among
    the tasks of the same processor.
    """

    processors: tuple[ProcessorSpec, ...]
    frequencies: tuple[FrequencyLevel, ...]
    threshold_th: float
    idle_power: Mapping[int, float] | None = None
    idle_factor: float = 0.5

    def __post_init__(self):
        ids = [f.id for f in self.frequencies]
        if ids != list(range(len(ids))) or not ids:
            raise GraphError("frequency ids must be 0..|F|-1 in order")
        if not self.threshold_th > 0:
            raise GraphError("threshold_th must be positive")
        seen = set()
        for proc in self.processors:
            for core in proc.cores:
                if core in seen:
                    raise GraphError(f"core {core} belongs to several processors")
                seen.add(core)
        if self.idle_power is not None:
            missing = set(ids) - set(self.idle_power)
            if missing:
                raise GraphError(f"idle_power misses frequencies {sorted(missing)}")
        if self.idle_factor < 0:
            raise GraphError("idle_factor must be non-negative")

    @property
    def freq_ids(self) -> list[int]:
        return [f.id for f in self.frequencies]

    @property
    def f_max(self) -> int:
        return self.frequencies[-1].id

    @cached_property
    def core_to_processor(self) -> dict[int, int]:
        return {c: p.id for p in self.processors for c in p.cores}

    @property
    def cores(self) -> list[int]:
        return [c for p in self.processors for c in p.cores]

    def processor(self, pid: int) -> ProcessorSpec:
        for p in self.processors:
            if p.id == pid:
                return p
        raise KeyError(pid)


@dataclass(frozen=True)
class Task:
    id: str
    core: int
    kind: TaskKind = TaskKind.COMPUTE
    exec: Mapping[int, float] = field(default_factory=dict)
    power: Mapping[int, float] = field(default_factory=dict)
    seq: int = 0

    @property
    def is_slack(self) -> bool:
        return self.kind is not TaskKind.COMPUTE


@dataclass(frozen=True)
class MessageEdge:
    from_task: str
    to_task: str
    transmission: float = 0.0


@dataclass
class ValidationReport:
    issues: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def add(self, msg: str):
        self.issues.append(msg)

    def __contains__(self, text: str) -> bool:
        return any(text in issue for issue in self.issues)

    def __str__(self):
        return "ok" if self.ok else "\n".join(self.issues)


@dataclass(frozen=True)
class TaskGraph:
    """Per-core ordered tasks plus message edges.

    ``tasks`` is kept sorted by ``(core, seq)``; ``index`` maps task ids to
    positions in that tuple, which is also the numbering used for the
    reachability bitsets.
    """

    tasks: tuple[Task, ...]
    edges: tuple[MessageEdge, ...] = ()

    def __post_init__(self):
        ordered = tuple(sorted(self.tasks, key=lambda t: (t.core, t.seq)))
        object.__setattr__(self, "tasks", ordered)
        object.__setattr__(self, "edges", tuple(self.edges))

    @cached_property
    def index(self) -> dict[str, int]:
        return {t.id: i for i, t in enumerate(self.tasks)}

    def task(self, tid: str) -> Task:
        return self.tasks[self.index[tid]]

    @cached_property
    def cores(self) -> list[int]:
        return sorted({t.core for t in self.tasks})

    @cached_property
    def _by_core(self) -> dict[int, tuple[Task, ...]]:
        out: dict[int, list[Task]] = {}
        for t in self.tasks:
            out.setdefault(t.core, []).append(t)
        return {c: tuple(ts) for c, ts in out.items()}

    def core_sequence(self, core: int) -> tuple[Task, ...]:
        return self._by_core.get(core, ())

    @property
    def compute_tasks(self) -> list[Task]:
        return [t for t in self.tasks if t.kind is TaskKind.COMPUTE]

    @property
    def has_slack(self) -> bool:
        return any(t.is_slack for t in self.tasks)

    @cached_property
    def _position(self) -> dict[str, int]:
        return {t.id: k for ts in self._by_core.values() for k, t in enumerate(ts)}

    def previous(self, tid: str) -> Task | None:
        seq = self.core_sequence(self.task(tid).core)
        pos = self._position[tid]
        return seq[pos - 1] if pos > 0 else None

    def following(self, tid: str) -> Task | None:
        seq = self.core_sequence(self.task(tid).core)
        pos = self._position[tid]
        return seq[pos + 1] if pos + 1 < len(seq) else None

    @cached_property
    def incoming(self) -> dict[str, list[MessageEdge]]:
        """Message edges grouped by the task they create (``to_task``)."""
        out: dict[str, list[MessageEdge]] = {}
        for e in self.edges:
            out.setdefault(e.to_task, []).append(e)
        return out

    def slack_messages(self, slack_id: str) -> list[MessageEdge]:
        """Edges whose arrival the given slack task waits for."""
        nxt = self.following(slack_id)
        if nxt is None:
            return []
        return self.incoming.get(nxt.id, [])

    def direct_successors(self) -> list[list[int]]:
        succ: list[list[int]] = [[] for _ in self.tasks]
        for ts in self._by_core.values():
            for a, b in zip(ts, ts[1:]):
                succ[self.index[a.id]].append(self.index[b.id])
        for e in self.edges:
            if e.from_task in self.index and e.to_task in self.index:
                succ[self.index[e.from_task]].append(self.index[e.to_task])
        return succ

    def topological_order(self, timing: bool = False) -> list[int] | None:
        """Kahn ordering of task indices, ``None`` if the relation has a cycle.

        With ``timing`` each sender is also placed before the slack task that
        waits for its message, which is the order end times resolve in.
        """
        succ = self.direct_successors()
        if timing:
            for e in self.edges:
                prev = self.previous(e.to_task) if e.to_task in self.index else None
                if prev is not None and prev.is_slack and e.from_task in self.index:
                    succ[self.index[e.from_task]].append(self.index[prev.id])
        indeg = [0] * len(self.tasks)
        for outs in succ:
            for j in outs:
                indeg[j] += 1
        ready = [i for i, d in enumerate(indeg) if d == 0]
        order = []
        while ready:
            i = ready.pop()
            order.append(i)
            for j in succ[i]:
                indeg[j] -= 1
                if indeg[j] == 0:
                    ready.append(j)
        return order if len(order) == len(self.tasks) else None

    @cached_property
    def reach(self) -> list[int]:
        """Bitset per task of all tasks it transitively precedes.

        ``a`` precedes ``b`` when ``eT_a <= bT_b`` holds in every execution:
        intra-core order and message edges, closed transitively.
        """
        order = self.topological_order()
        if order is None:
            raise GraphError("precedence relation has a cycle")
        succ = self.direct_successors()
        reach = [0] * len(self.tasks)
        for i in reversed(order):
            bits = 0
            for j in succ[i]:
                bits |= (1 << j) | reach[j]
            reach[i] = bits
        return reach

    def precedes(self, a: str, b: str) -> bool:
        return bool(self.reach[self.index[a]] >> self.index[b] & 1)

    def ordered(self, a: str, b: str) -> bool:
        return self.precedes(a, b) or self.precedes(b, a)


# ---------------------------------------------------------------- validation


def validate_graph(graph: TaskGraph, machine: MachineModel) -> ValidationReport:
    """Collect every violation of the execution-model assumptions."""
    report = ValidationReport()
    freqs = machine.freq_ids
    known_cores = set(machine.cores)
    seen: set[str] = set()
    for t in graph.tasks:
        if t.id in seen:
            report.add(f"duplicate task id {t.id!r}")
        seen.add(t.id)
        if t.core not in known_cores:
            report.add(f"task {t.id!r} on unknown core {t.core}")
        if t.kind is TaskKind.COMPUTE:
            for f in freqs:
                if f not in t.exec:
                    report.add(f"task {t.id!r}: missing exec entry for frequency {f}")
                elif not t.exec[f] > 0:
                    report.add(f"task {t.id!r}: non-positive exec at frequency {f}")
                if f not in t.power:
                    report.add(f"task {t.id!r}: missing power entry for frequency {f}")
                elif not t.power[f] > 0:
                    report.add(f"task {t.id!r}: non-positive power at frequency {f}")
            extra = set(t.exec) - set(freqs)
            if extra:
                report.add(f"task {t.id!r}: exec entries for unknown frequencies {sorted(extra)}")
            if all(f in t.exec for f in freqs):
                for lo, hi in zip(freqs, freqs[1:]):
                    if t.exec[hi] > t.exec[lo]:
                        report.add(
                            f"task {t.id!r}: exec increases from frequency {lo} to {hi}"
                        )
        else:
            if t.exec:
                report.add(f"slack task {t.id!r} must not carry exec entries")
    for core in graph.cores:
        seqs = [t.seq for t in graph.core_sequence(core)]
        if len(set(seqs)) != len(seqs):
            report.add(f"core {core}: tasks share a seq position")

    for e in graph.edges:
        if e.from_task == ANY_SOURCE:
            report.add(
                f"edge into {e.to_task!r}: non-deterministic reception (any source)"
            )
            continue
        if e.from_task not in graph.index or e.to_task not in graph.index:
            report.add(f"edge {e.from_task!r}->{e.to_task!r} references unknown task")
            continue
        src, dst = graph.task(e.from_task), graph.task(e.to_task)
        if src.core == dst.core:
            report.add(f"edge {e.from_task!r}->{e.to_task!r} stays on core {src.core}")
        if dst.is_slack or src.is_slack:
            report.add(f"edge {e.from_task!r}->{e.to_task!r} touches a slack task")
        if not e.transmission >= 0 or math.isinf(e.transmission):
            report.add(f"edge {e.from_task!r}->{e.to_task!r}: transmission must be finite and >= 0")
        prev = graph.previous(e.to_task)
        if prev is None:
            report.add(f"edge {e.from_task!r}->{e.to_task!r} targets the first task of core {dst.core}")
    if not any(e.from_task == ANY_SOURCE for e in graph.edges) and all(
        e.from_task in graph.index and e.to_task in graph.index for e in graph.edges
    ):
        if graph.topological_order() is None:
            report.add("precedence relation contains a cycle")
    if graph.has_slack:
        try:
            _expected_layout(graph)
        except GraphError as exc:
            report.add(str(exc))
    return report


def require_valid(graph: TaskGraph, machine: MachineModel) -> None:
    report = validate_graph(graph, machine)
    if not report.ok:
        raise GraphError("invalid task graph:\n" + str(report))


# ---------------------------------------------------------------- slack


def _expected_layout(graph: TaskGraph) -> dict[int, list[tuple[str, TaskKind, str | None]]]:
    """Per core, the canonical (id, kind, anchor) sequence after slack insertion.

    Raises GraphError if existing slack tasks disagree with that layout.
    """
    layout = {}
    for core in graph.cores:
        compute = [t for t in graph.core_sequence(core) if t.kind is TaskKind.COMPUTE]
        seq: list[tuple[str, TaskKind, str | None]] = []
        for k, t in enumerate(compute):
            seq.append((t.id, TaskKind.COMPUTE, None))
            nxt = compute[k + 1] if k + 1 < len(compute) else None
            if nxt is not None and nxt.id in graph.incoming:
                seq.append((SLACK_PREFIX + t.id, TaskKind.SLACK, t.id))
        seq.append((f"{BARRIER_PREFIX}{core}", TaskKind.BARRIER_SLACK, None))
        layout[core] = seq
        existing = [t for t in graph.core_sequence(core)]
        if any(t.is_slack for t in existing):
            got = [(t.id, t.kind) for t in existing]
            want = [(i, k) for i, k, _ in seq]
            if got != want:
                raise GraphError(f"core {core}: slack tasks are misplaced")
    return layout


def insert_slack_tasks(graph: TaskGraph, machine: MachineModel | None = None) -> TaskGraph:
    """Insert ``Ts_i`` after every receiving task and a barrier slack per core.

    With a machine model the slack tasks get their idle power filled in.
    Calling it on a graph that already carries correctly placed slack returns
    the graph unchanged.
    """
    if graph.has_slack:
        _expected_layout(graph)
        return graph
    layout = _expected_layout(graph)
    tasks: list[Task] = []
    for core, seq in layout.items():
        idle = idle_power(machine, graph, core) if machine is not None else {}
        for pos, (tid, kind, _) in enumerate(seq):
            if kind is TaskKind.COMPUTE:
                tasks.append(replace(graph.task(tid), seq=pos))
            else:
                if tid in graph.index:
                    raise GraphError(f"task id {tid!r} collides with a synthesized slack id")
                tasks.append(Task(tid, core, kind, {}, dict(idle), pos))
    return TaskGraph(tuple(tasks), graph.edges)


def idle_power(machine: MachineModel, graph: TaskGraph, core: int) -> dict[int, float]:
    if machine.idle_power is not None:
        return {f: float(machine.idle_power[f]) for f in machine.freq_ids}
    pid = machine.core_to_processor.get(core)
    same_proc = [
        t for t in graph.compute_tasks
        if machine.core_to_processor.get(t.core) == pid
    ] or graph.compute_tasks
    if not same_proc:
        return {f: 0.0 for f in machine.freq_ids}
    return {
        f: machine.idle_factor * min(t.power[f] for t in same_proc)
        for f in machine.freq_ids
    }


def power_table(task: Task, graph: TaskGraph, machine: MachineModel) -> dict[int, float]:
    """Per-frequency power of a task; slack without explicit power gets idle power."""
    if task.power:
        return {f: float(task.power[f]) for f in machine.freq_ids}
    return idle_power(machine, graph, task.core)


# ---------------------------------------------------------------- timing


def max_frequency_makespan(graph: TaskGraph, machine: MachineModel) -> float:
    """Makespan with every processor pinned at the highest frequency.

    Longest-path evaluation over the task DAG: sender successors start at the
    sender's end, slack ends at the latest of its start and every awaited
    arrival, and the barrier releases when every core arrived.
    """
    graph = insert_slack_tasks(graph)
    fmax = machine.f_max
    order = graph.topological_order(timing=True)
    if order is None:
        raise GraphError("precedence relation has a cycle")
    begin: dict[str, float] = {}
    end: dict[str, float] = {}
    for i in order:
        t = graph.tasks[i]
        if t.kind is TaskKind.BARRIER_SLACK:
            continue
        prev = graph.previous(t.id)
        begin[t.id] = end[prev.id] if prev is not None else 0.0
        if t.kind is TaskKind.COMPUTE:
            end[t.id] = begin[t.id] + t.exec[fmax]
        else:
            arrivals = [end[e.from_task] + e.transmission for e in graph.slack_messages(t.id)]
            end[t.id] = max([begin[t.id], *arrivals])
    finish = 0.0
    for core in graph.cores:
        seq = graph.core_sequence(core)
        if len(seq) > 1:
            finish = max(finish, end[seq[-2].id])
    return finish


def deadline(exec_time: float, x: float) -> float:
    """Latest admissible finish time for a performance-loss budget of x percent."""
    if x < 0:
        raise ValueError("performance loss percentage x must be >= 0")
    return exec_time + exec_time * x / 100.0


# ---------------------------------------------------------------- JSON I/O

_MACHINE_KEYS = {"frequencies", "threshold_th", "processors", "idle_power", "idle_factor"}
_GRAPH_KEYS = {"tasks", "edges"}
_TASK_KEYS = {"id", "core", "exec", "power", "kind"}
_EDGE_KEYS = {"from", "to", "m"}


def _fmap(raw: Mapping[str, Any], what: str) -> dict[int, float]:
    try:
        return {int(k): float(v) for k, v in raw.items()}
    except (TypeError, ValueError, AttributeError) as exc:
        raise GraphError(f"{what}: expected an object of frequency id -> number") from exc


def _reject_unknown(obj: Mapping, allowed: set[str], where: str):
    if not isinstance(obj, Mapping):
        raise GraphError(f"{where}: expected a JSON object")
    extra = set(obj) - allowed
    if extra:
        raise GraphError(f"{where}: unknown fields {sorted(extra)}")


def machine_from_dict(data: Mapping[str, Any]) -> MachineModel:
    _reject_unknown(data, _MACHINE_KEYS | _GRAPH_KEYS, "machine")
    try:
        freqs = tuple(
            FrequencyLevel(i, None if v is None else float(v))
            for i, v in enumerate(data["frequencies"])
        )
        procs = []
        for pid, p in enumerate(data["processors"]):
            _reject_unknown(p, {"cores"}, f"processor {pid}")
            procs.append(ProcessorSpec(pid, tuple(int(c) for c in p["cores"])))
        th = float(data["threshold_th"])
    except KeyError as exc:
        raise GraphError(f"machine: missing field {exc.args[0]!r}") from exc
    idle = data.get("idle_power")
    return MachineModel(
        tuple(procs), freqs, th,
        None if idle is None else _fmap(idle, "idle_power"),
        float(data.get("idle_factor", 0.5)),
    )


def graph_from_dict(data: Mapping[str, Any]) -> TaskGraph:
    _reject_unknown(data, _MACHINE_KEYS | _GRAPH_KEYS, "graph")
    tasks = []
    counters: dict[int, int] = {}
    for k, raw in enumerate(data.get("tasks", [])):
        _reject_unknown(raw, _TASK_KEYS, f"task #{k}")
        try:
            core = int(raw["core"])
            kind = TaskKind(raw.get("kind", "compute"))
            tid = str(raw["id"])
        except KeyError as exc:
            raise GraphError(f"task #{k}: missing field {exc.args[0]!r}") from exc
        except ValueError as exc:
            raise GraphError(f"task #{k}: {exc}") from exc
        seq = counters.get(core, 0)
        counters[core] = seq + 1
        tasks.append(Task(
            tid, core, kind,
            _fmap(raw.get("exec", {}), f"task {tid} exec"),
            _fmap(raw.get("power", {}), f"task {tid} power"),
            seq,
        ))
    edges = []
    for k, raw in enumerate(data.get("edges", [])):
        _reject_unknown(raw, _EDGE_KEYS, f"edge #{k}")
        try:
            edges.append(MessageEdge(str(raw["from"]), str(raw["to"]), float(raw.get("m", 0.0))))
        except KeyError as exc:
            raise GraphError(f"edge #{k}: missing field {exc.args[0]!r}") from exc
    return TaskGraph(tuple(tasks), tuple(edges))


def machine_to_dict(machine: MachineModel) -> dict[str, Any]:
    out: dict[str, Any] = {
        "frequencies": [f.nominal for f in machine.frequencies],
        "threshold_th": machine.threshold_th,
        "processors": [{"cores": list(p.cores)} for p in machine.processors],
    }
    if machine.idle_power is not None:
        out["idle_power"] = {str(f): w for f, w in machine.idle_power.items()}
    if machine.idle_factor != 0.5:
        out["idle_factor"] = machine.idle_factor
    return out


def graph_to_dict(graph: TaskGraph) -> dict[str, Any]:
    tasks = []
    for t in graph.tasks:
        entry: dict[str, Any] = {"id": t.id, "core": t.core}
        if t.kind is not TaskKind.COMPUTE:
            entry["kind"] = t.kind.value
        if t.exec:
            entry["exec"] = {str(f): v for f, v in t.exec.items()}
        if t.power:
            entry["power"] = {str(f): v for f, v in t.power.items()}
        tasks.append(entry)
    edges = [{"from": e.from_task, "to": e.to_task, "m": e.transmission} for e in graph.edges]
    return {"tasks": tasks, "edges": edges}


def load_instance(*paths: str | Path) -> tuple[TaskGraph, MachineModel]:
    """Read a combined file, or a graph file and a machine file, in any order."""
    merged: dict[str, Any] = {}
    for path in paths:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise GraphError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise GraphError(f"{path}: expected a JSON object")
        clash = set(merged) & set(data)
        if clash:
            raise GraphError(f"{path}: fields {sorted(clash)} given twice")
        merged.update(data)
    _reject_unknown(merged, _MACHINE_KEYS | _GRAPH_KEYS, "instance")
    machine = machine_from_dict({k: v for k, v in merged.items() if k in _MACHINE_KEYS})
    graph = graph_from_dict({k: v for k, v in merged.items() if k in _GRAPH_KEYS})
    return graph, machine


def dump_instance(graph: TaskGraph, machine: MachineModel,
                  graph_path: str | Path, machine_path: str | Path | None = None) -> None:
    """Write the instance; a single path gets the combined document."""
    gdict = graph_to_dict(graph)
    mdict = machine_to_dict(machine)
    if machine_path is None:
        Path(graph_path).write_text(json.dumps(mdict | gdict, indent=2))
    else:
        Path(graph_path).write_text(json.dumps(gdict, indent=2))
        Path(machine_path).write_text(json.dumps(mdict, indent=2))

