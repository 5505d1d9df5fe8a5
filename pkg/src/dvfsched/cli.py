"""``dvfsched`` command line: validate, build, solve, simulate, gen, report.

Exit codes are stable and listed in :data:`EXIT_CODES`.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Any

from .graph import (
    GraphError, deadline, dump_instance, insert_slack_tasks, load_instance,
    max_frequency_makespan, validate_graph,
)
from .milp import ModelError
from .oracle import Dims, random_instance
from .simulator import Schedule, SimulationError, check_schedule, energy, simulate, write_gantt
from .solver import export_lp, solve_milp
from .switch import (
    build_switch_milp, decode_switch_solution, default_slots, estimate_switch_model_size,
)
from .workload import (
    DEFAULT_CAP, DecodeError, WorkloadBlowUp, build_workload_milp, decode_workload_solution,
    diagnostics,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_INVALID_GRAPH = 3
EXIT_BLOWUP = 4
EXIT_INFEASIBLE = 5
EXIT_LIMIT = 6
EXIT_DECODE = 7
EXIT_INVALID_SCHEDULE = 8
EXIT_IO = 9

EXIT_CODES = {
    EXIT_OK: "success",
    EXIT_ERROR: "unexpected error",
    EXIT_USAGE: "bad command line",
    EXIT_INVALID_GRAPH: "invalid task graph or machine file",
    EXIT_BLOWUP: "workload blow-up (variable cap exceeded)",
    EXIT_INFEASIBLE: "model infeasible",
    EXIT_LIMIT: "time or node limit reached",
    EXIT_DECODE: "solution could not be decoded to a schedule",
    EXIT_INVALID_SCHEDULE: "schedule fails simulation or validity checks",
    EXIT_IO: "file could not be read or written",
}


class CliError(Exception):
    def __init__(self, code: int, message: str, payload: dict[str, Any] | None = None):
        super().__init__(message)
        self.code = code
        self.payload = payload or {}


def _emit(args, payload: dict[str, Any], text: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(text)


def _load(args):
    graph, machine = load_instance(*args.files)
    report = validate_graph(graph, machine)
    if not report.ok:
        raise CliError(EXIT_INVALID_GRAPH, f"invalid instance: {report.issues[0]}",
                       {"issues": report.issues})
    return graph, machine


def _build(args, graph, machine):
    if args.formulation == "workload":
        return build_workload_milp(graph, machine, args.x, cap=args.cap)
    return build_switch_milp(graph, machine, args.x, args.slots)


def _size_info(args, graph, machine, model=None) -> dict[str, Any]:
    if args.formulation == "workload":
        diag = diagnostics(graph, machine)
        return {"workload_count": sum(d["workloads"] for d in diag), "processors": diag,
                "model": model.summary() if model is not None else None}
    m = args.slots or default_slots(graph, machine)
    size = estimate_switch_model_size(graph, machine, m)
    return {"binary_count": size.binary, "slots": m, **size.as_dict()}


# ---------------------------------------------------------------- commands


def cmd_validate(args) -> int:
    graph, machine = load_instance(*args.files)
    report = validate_graph(graph, machine)
    payload: dict[str, Any] = {"ok": report.ok, "issues": report.issues}
    if report.ok:
        full = insert_slack_tasks(graph, machine)
        payload.update(tasks=len(full.tasks), edges=len(full.edges),
                       exec_time_s=max_frequency_makespan(full, machine))
    _emit(args, payload, "ok" if report.ok else str(report))
    return EXIT_OK if report.ok else EXIT_INVALID_GRAPH


def cmd_build(args) -> int:
    graph, machine = _load(args)
    model = _build(args, graph, machine)
    if args.out:
        export_lp(model, args.out)
    info = _size_info(args, graph, machine, model)
    info["model"] = model.summary()
    lines = [f"{k}: {v}" for k, v in info.items() if k not in ("processors", "model")]
    lines += [f"{k}: {v}" for k, v in model.summary().items()]
    _emit(args, info, "\n".join(lines))
    return EXIT_OK


def _report(graph, machine, schedule: Schedule, x: float) -> dict[str, Any]:
    timeline = simulate(graph, machine, schedule)
    total, per_task = energy(timeline, graph, machine)
    exec_time = max_frequency_makespan(graph, machine)
    checks = check_schedule(schedule, machine, x, exec_time)
    return {
        "total_energy_J": total,
        "total_time_s": timeline.total_time,
        "deadline_s": deadline(exec_time, x),
        "exec_time_s": exec_time,
        "per_task": {tid: {"energy_J": e, "begin": timeline.begin[tid],
                           "end": timeline.end[tid]} for tid, e in per_task.items()},
        "valid": checks.ok,
        "issues": checks.issues,
    }, timeline


def cmd_solve(args) -> int:
    graph, machine = _load(args)
    model = _build(args, graph, machine)
    res = solve_milp(model, time_limit=args.time_limit, node_limit=args.node_limit,
                     engine=args.engine)
    if res.status == "infeasible":
        raise CliError(EXIT_INFEASIBLE, "model is infeasible", {"status": res.status})
    if res.x is None:
        code = EXIT_LIMIT if res.status == "limit" else EXIT_ERROR
        raise CliError(code, f"no solution found (status {res.status})", {"status": res.status})
    decode = decode_workload_solution if args.formulation == "workload" else decode_switch_solution
    try:
        schedule = decode(model, res.x)
    except DecodeError as exc:
        raise CliError(EXIT_DECODE, str(exc)) from exc
    if args.out:
        schedule.save(args.out)
    payload, timeline = _report(graph, machine, schedule, args.x)
    if args.gantt:
        write_gantt(args.gantt, timeline, graph, machine, schedule)
    payload.update(status=res.status, objective_J=res.objective, bound_J=res.bound,
                   nodes=res.nodes, wall_time_s=res.wall_time,
                   **{k: v for k, v in _size_info(args, graph, machine, model).items()
                      if k in ("workload_count", "binary_count")})
    text = (f"status: {res.status}\nenergy: {res.objective:.9g} J\n"
            f"time: {payload['total_time_s']:.9g} s (deadline {payload['deadline_s']:.9g} s)")
    _emit(args, payload, text)
    if not payload["valid"]:
        return EXIT_INVALID_SCHEDULE
    return EXIT_LIMIT if res.status == "limit" else EXIT_OK


def cmd_simulate(args) -> int:
    graph, machine = _load(args)
    schedule = Schedule.load(args.schedule)
    payload, timeline = _report(graph, machine, schedule, args.x)
    if args.gantt:
        write_gantt(args.gantt, timeline, graph, machine, schedule)
    text = (f"energy: {payload['total_energy_J']:.9g} J\n"
            f"time: {payload['total_time_s']:.9g} s\n"
            + ("valid" if payload["valid"] else "\n".join(payload["issues"])))
    _emit(args, payload, text)
    return EXIT_OK if payload["valid"] else EXIT_INVALID_SCHEDULE


def cmd_report(args) -> int:
    graph, machine = _load(args)
    schedule = Schedule.load(args.schedule)
    payload, _ = _report(graph, machine, schedule, args.x)
    payload.update({k: v for k, v in _size_info(args, graph, machine).items()
                    if k in ("workload_count", "binary_count")})
    text = "\n".join(f"{k}: {v}" for k, v in payload.items() if k != "per_task")
    _emit(args, payload, text)
    return EXIT_OK if payload["valid"] else EXIT_INVALID_SCHEDULE


def cmd_gen(args) -> int:
    dims = Dims(args.procs, args.cores, args.tasks, args.freqs, args.density, args.threshold)
    graph, machine = random_instance(args.seed, dims)
    dump_instance(graph, machine, args.out_graph, args.out_machine)
    payload = {"graph": args.out_graph, "machine": args.out_machine,
               "tasks": len(graph.tasks), "edges": len(graph.edges)}
    _emit(args, payload, f"wrote {args.out_graph}" + (f" and {args.out_machine}"
                                                     if args.out_machine else ""))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dvfsched", description="Energy-minimal DVFS schedules for task graphs.",
        epilog="exit codes: " + ", ".join(f"{k} {v}" for k, v in EXIT_CODES.items()))
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")

    def files(p):
        p.add_argument("files", nargs="+", metavar="FILE",
                       help="combined instance file, or graph file and machine file")

    def model_opts(p):
        p.add_argument("--formulation", choices=("workload", "switch"), default="workload")
        p.add_argument("--x", type=float, default=0.0, help="allowed performance loss in percent")
        p.add_argument("--slots", type=int, default=None, help="switch slots per processor")
        p.add_argument("--cap", type=int, default=DEFAULT_CAP,
                       help="workload variable cap")

    p = sub.add_parser("validate", parents=[common], help="check an instance")
    files(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("build", parents=[common], help="build a model, optionally export LP")
    files(p)
    model_opts(p)
    p.add_argument("--out", help="LP file to write")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("solve", parents=[common], help="solve and write a schedule")
    files(p)
    model_opts(p)
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--node-limit", type=int, default=None)
    p.add_argument("--engine", choices=("bnb", "highs"), default="bnb")
    p.add_argument("--out", help="schedule JSON to write")
    p.add_argument("--gantt", help="Gantt CSV to write")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", parents=[common], help="simulate a schedule")
    files(p)
    p.add_argument("--schedule", required=True)
    p.add_argument("--x", type=float, default=0.0)
    p.add_argument("--gantt")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", parents=[common], help="energy report for a schedule")
    files(p)
    model_opts(p)
    p.add_argument("--schedule", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gen", parents=[common], help="write a random instance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--procs", type=int, default=1)
    p.add_argument("--cores", type=int, default=2)
    p.add_argument("--tasks", type=int, default=2, help="tasks per core")
    p.add_argument("--freqs", type=int, default=2)
    p.add_argument("--density", type=float, default=0.5, help="edge density")
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--out-graph", required=True)
    p.add_argument("--out-machine", default=None)
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "files", None) and len(args.files) > 2:
        print("error: give one combined file or a graph file and a machine file", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except CliError as exc:
        code, msg, payload = exc.code, str(exc), exc.payload
    except WorkloadBlowUp as exc:
        code, msg = EXIT_BLOWUP, str(exc)
        payload = {"counts": exc.counts, "variables": exc.variables, "cap": exc.cap}
    except GraphError as exc:
        code, msg, payload = EXIT_INVALID_GRAPH, str(exc), {}
    except ModelError as exc:
        code, msg, payload = EXIT_USAGE, str(exc), {}
    except SimulationError as exc:
        code, msg, payload = EXIT_INVALID_SCHEDULE, str(exc), {}
    except DecodeError as exc:
        code, msg, payload = EXIT_DECODE, str(exc), {}
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        code, msg, payload = EXIT_IO, f"{type(exc).__name__}: {exc}", {}
    if args.json:
        print(json.dumps({"error": msg, "exit_code": code, **payload}, indent=2, default=str))
    print(f"error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
