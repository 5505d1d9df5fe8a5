"""LP and MILP solving for :class:`MilpModel`, plus LP-format export.

``solve_lp`` and ``solve_milp`` default to the in-package bounded simplex and
a best-first branch and bound. ``engine="highs"`` hands the same arrays to
scipy's HiGHS bindings instead, which is useful for cross-checks and for
models too large for a dense simplex.
"""

from __future__ import annotations

import heapq
import math
import os
import re
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize, sparse

from . import simplex
from .milp import MilpModel

FEAS_TOL = 1e-7
OPT_TOL = 1e-7
INT_TOL = 1e-6
ABS_GAP = 1e-6
STATUSES = ("optimal", "infeasible", "unbounded", "limit", "numerical")


class InfeasibleSolution(ValueError):
    pass


@dataclass
class SolveResult:
    status: str
    x: np.ndarray | None = None
    objective: float = math.nan
    bound: float = math.nan
    nodes: int = 0
    iterations: int = 0
    wall_time: float = 0.0
    history: list[tuple[float, float]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def value(self, model: MilpModel, name: str) -> float:
        return float(self.x[model.var(name).id])


# ---------------------------------------------------------------- LP


def _highs_lp(c, A, senses, b, lb, ub) -> simplex.LPResult:
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for row, s, r in zip(A, senses, b):
        if s == "==":
            A_eq.append(row)
            b_eq.append(r)
        elif s == "<=":
            A_ub.append(row)
            b_ub.append(r)
        else:
            A_ub.append(-row)
            b_ub.append(-r)
    n = len(c)
    res = optimize.linprog(
        c,
        A_ub=np.array(A_ub).reshape(-1, n) if A_ub else None, b_ub=b_ub or None,
        A_eq=np.array(A_eq).reshape(-1, n) if A_eq else None, b_eq=b_eq or None,
        bounds=np.column_stack([lb, ub]), method="highs")
    status = {0: "optimal", 1: "limit", 2: "infeasible", 3: "unbounded"}.get(res.status, "numerical")
    if status != "optimal":
        return simplex.LPResult(status, None, math.nan, int(res.nit or 0))
    return simplex.LPResult("optimal", res.x, float(res.fun), int(res.nit))


def solve_lp_arrays(arrays, lb, ub, engine: str = "simplex", feas_tol: float = FEAS_TOL,
                    opt_tol: float = OPT_TOL) -> simplex.LPResult:
    """LP on dense ``(c, A, senses, b)`` with the given variable bounds."""
    c, A, senses, b = arrays
    if engine == "highs":
        return _highs_lp(c, A, senses, b, lb, ub)
    res = simplex.solve(c, A, senses, b, lb, ub, feas_tol=feas_tol, opt_tol=opt_tol)
    if res.status == "numerical":
        # the dense simplex gave up on conditioning; HiGHS decides instead
        res = _highs_lp(c, A, senses, b, lb, ub)
    return res


def solve_lp(model: MilpModel, engine: str = "simplex", feas_tol: float = FEAS_TOL,
             opt_tol: float = OPT_TOL, fixed: dict[int, float] | None = None) -> SolveResult:
    """LP relaxation (binaries in ``[0, 1]``), optionally with some variables fixed."""
    t0 = time.perf_counter()
    c, A, senses, b, lb, ub, _ = model.arrays()
    if fixed:
        lb, ub = lb.copy(), ub.copy()
        for j, v in fixed.items():
            lb[j] = ub[j] = v
    res = solve_lp_arrays((c, A, senses, b), lb, ub, engine, feas_tol, opt_tol)
    obj = res.objective + model.objective.const if res.status == "optimal" else math.nan
    return SolveResult(res.status, res.x, obj, obj, 0, res.iterations,
                       time.perf_counter() - t0)


# ---------------------------------------------------------------- MILP


def _workers(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("DVFS_SCHED_THREADS", "1") or 1)
    return max(1, threads)


def _highs_milp(model: MilpModel, time_limit: float | None, abs_gap: float) -> SolveResult:
    t0 = time.perf_counter()
    c, A, senses, b, lb, ub, binary = model.arrays()
    lo = np.array([r if s != "<=" else -np.inf for s, r in zip(senses, b)])
    hi = np.array([r if s != ">=" else np.inf for s, r in zip(senses, b)])
    cons = [optimize.LinearConstraint(sparse.csr_array(A), lo, hi)] if len(b) else []
    opts = {"mip_rel_gap": 0.0}
    if time_limit is not None:
        opts["time_limit"] = float(time_limit)
    res = optimize.milp(c, integrality=binary.astype(int), bounds=optimize.Bounds(lb, ub),
                        constraints=cons, options=opts)
    wall = time.perf_counter() - t0
    const = model.objective.const
    if res.status == 0:
        x = res.x.copy()
        x[binary] = np.round(x[binary])
        # HiGHS accepts binaries within 1e-6 of integral; re-solve the
        # continuous part with them pinned so the point is consistent
        lb2, ub2 = lb.copy(), ub.copy()
        lb2[binary] = ub2[binary] = x[binary]
        polished = _highs_lp(c, A, senses, b, lb2, ub2)
        if polished.status == "optimal":
            x = polished.x
            x[binary] = np.round(x[binary])
        obj = float(c @ x) + const
        bound = float(getattr(res, "mip_dual_bound", obj) or obj) + const
        if abs(obj - bound) > abs_gap:
            bound = obj - abs_gap
        return SolveResult("optimal", x, obj, bound, int(getattr(res, "mip_node_count", 0) or 0),
                           0, wall)
    if res.status == 2:
        return SolveResult("infeasible", wall_time=wall)
    if res.status == 3:
        return SolveResult("unbounded", wall_time=wall)
    x = res.x if res.x is not None else None
    obj = float(c @ x) + const if x is not None else math.nan
    return SolveResult("limit", x, obj, math.nan, 0, 0, wall)


def solve_milp(model: MilpModel, time_limit: float | None = None, node_limit: int | None = None,
               abs_gap: float = ABS_GAP, engine: str = "bnb", threads: int | None = None,
               feas_tol: float = FEAS_TOL) -> SolveResult:
    """Exact minimisation over the binaries by LP-based branch and bound.

    Nodes are explored best bound first (ties by creation order); a node
    branches on its most fractional binary, lowest id first among equals.
    Both children are evaluated as soon as they are created, which is where
    ``threads`` workers are used; the search itself, and so the result,
    does not depend on the number of workers. ``nodes`` counts evaluated
    LPs including the root.
    """
    if engine == "highs":
        return _highs_milp(model, time_limit, abs_gap)
    if engine != "bnb":
        raise ValueError(f"unknown engine {engine!r}")
    t0 = time.perf_counter()
    c, A, senses, b, lb0, ub0, binary = model.arrays()
    arrays = (c, A, senses, b)
    const = model.objective.const
    bins = np.flatnonzero(binary)
    workers = _workers(threads)
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    iterations = 0
    nodes = 0

    def evaluate(bounds):
        lb, ub = bounds
        res = solve_lp_arrays(arrays, lb, ub, "simplex", feas_tol, OPT_TOL)
        if res.status != "optimal":
            return res, None
        x = res.x
        frac = np.abs(x[bins] - np.round(x[bins]))
        if frac.size == 0 or frac.max() <= INT_TOL:
            lb2, ub2 = lb.copy(), ub.copy()
            lb2[bins] = ub2[bins] = np.round(x[bins])
            polished = solve_lp_arrays(arrays, lb2, ub2, "simplex", feas_tol, OPT_TOL)
            return res, polished
        return res, None

    def run(batch):
        if pool is None or len(batch) == 1:
            return [evaluate(bd) for bd in batch]
        return list(pool.map(evaluate, batch))

    incumbent, inc_obj = None, math.inf
    history: list[tuple[float, float]] = []
    heap: list[tuple[float, int, np.ndarray, np.ndarray, np.ndarray]] = []
    counter = 0
    unbounded = False
    status = None

    def absorb(results, bounds_list, parent_bound):
        nonlocal incumbent, inc_obj, counter, iterations, nodes, unbounded
        for (res, polished), (lb, ub) in zip(results, bounds_list):
            nodes += 1
            iterations += res.iterations + (polished.iterations if polished else 0)
            if res.status == "unbounded":
                unbounded = True
                continue
            if res.status != "optimal":
                continue
            bound = max(res.objective + const, parent_bound)
            if polished is not None:
                if polished.status == "optimal":
                    val = polished.objective + const
                    if val < inc_obj - 1e-12:
                        incumbent, inc_obj = polished.x, val
                continue
            if bound < inc_obj - abs_gap:
                heapq.heappush(heap, (bound, counter, res.x, lb, ub))
                counter += 1

    absorb(run([(lb0, ub0)]), [(lb0, ub0)], -math.inf)
    try:
        while heap:
            best = heap[0][0]
            history.append((min(best, inc_obj), inc_obj))
            if best >= inc_obj - abs_gap:
                break
            if node_limit is not None and nodes >= node_limit:
                status = "limit"
                break
            if time_limit is not None and time.perf_counter() - t0 > time_limit:
                status = "limit"
                break
            bound, _, x, lb, ub = heapq.heappop(heap)
            if bound >= inc_obj - abs_gap:
                continue
            frac = np.abs(x[bins] - np.round(x[bins]))
            k = int(bins[int(np.argmax(frac))])
            children = []
            for v in (0.0, 1.0):
                lc, uc = lb.copy(), ub.copy()
                lc[k] = uc[k] = v
                children.append((lc, uc))
            absorb(run(children), children, bound)
    finally:
        if pool is not None:
            pool.shutdown()
    wall = time.perf_counter() - t0
    if unbounded and incumbent is None:
        return SolveResult("unbounded", nodes=nodes, iterations=iterations, wall_time=wall,
                           history=history)
    open_bound = min((h[0] for h in heap), default=math.inf)
    if status == "limit":
        bound = min(open_bound, inc_obj)
        history.append((bound, inc_obj))
        return SolveResult("limit", incumbent, inc_obj, bound, nodes, iterations, wall, history)
    if incumbent is None:
        return SolveResult("infeasible", nodes=nodes, iterations=iterations, wall_time=wall,
                           history=history)
    bound = min(open_bound, inc_obj)
    history.append((bound, inc_obj))
    return SolveResult("optimal", incumbent, inc_obj, bound, nodes, iterations, wall, history)


# ---------------------------------------------------------------- LP format

_PLAIN = re.compile(r"[A-Za-z0-9.]")


def escape_name(name: str) -> str:
    """Injective mapping onto LP-format-safe identifiers.

    Letters, digits and dots pass through, ``_`` is doubled and anything else
    becomes ``_`` plus four hex digits (``_x`` plus six beyond the BMP). A
    leading digit, dot or ``e``/``E`` (which readers may take for a number)
    is escaped the same way. The empty name maps to a lone ``_``.
    """
    out = []
    for k, ch in enumerate(name):
        if ch == "_":
            out.append("__")
        elif _PLAIN.fullmatch(ch) and not (k == 0 and (ch.isdigit() or ch in ".eE")):
            out.append(ch)
        elif ord(ch) > 0xFFFF:
            out.append(f"_x{ord(ch):06x}")
        else:
            out.append(f"_{ord(ch):04x}")
    return "".join(out) or "_"


def unescape_name(text: str) -> str:
    if text == "_":
        return ""
    out, k = [], 0
    while k < len(text):
        if text[k] == "_":
            if text[k + 1:k + 2] == "_":
                out.append("_")
                k += 2
            elif text[k + 1:k + 2] == "x":
                out.append(chr(int(text[k + 2:k + 8], 16)))
                k += 8
            else:
                out.append(chr(int(text[k + 1:k + 5], 16)))
                k += 5
        else:
            out.append(text[k])
            k += 1
    return "".join(out)


def _num(v: float) -> str:
    return format(float(v), ".12g")


def _terms(pairs, names) -> list[str]:
    out = []
    for coef, v in pairs:
        sign = "-" if coef < 0 else "+"
        out.append(f"{sign} {_num(abs(coef))} {names[v]}")
    if not out:
        return [f"0 {names[0]}"] if names else ["0"]
    if out[0].startswith("+ "):
        out[0] = out[0][2:]
    return out


def _wrap(tokens: list[str], width: int = 8) -> list[str]:
    return [" ".join(tokens[i:i + width]) for i in range(0, len(tokens), width)] or [""]


def export_lp(model: MilpModel, destination: str | Path) -> None:
    """Write the model in CPLEX LP text format."""
    names = [escape_name(v.name) for v in model.variables]
    if len(set(names)) != len(names):
        raise ValueError("variable names are not unique")
    sense = {"<=": "<=", ">=": ">=", "==": "="}
    lines = [f"\\ {model.name}", "Minimize"]
    obj = sorted(model.objective.terms.items())
    toks = _terms([(c, v) for v, c in obj if c != 0.0], names)
    if model.objective.const:
        toks.append(("+ " if model.objective.const >= 0 else "- ")
                    + _num(abs(model.objective.const)))
    body = _wrap(toks)
    lines.append(" obj: " + body[0])
    lines.extend("   " + ln for ln in body[1:])
    lines.append("Subject To")
    for k, row in enumerate(model.constraints):
        body = _wrap(_terms(row.terms, names))
        body[-1] += f" {sense[row.sense]} {_num(row.rhs)}"
        lines.append(f" c{k}: " + body[0])
        lines.extend("   " + ln for ln in body[1:])
    lines.append("Bounds")
    for v, nm in zip(model.variables, names):
        if v.is_binary:
            continue
        lo = "-inf" if math.isinf(v.lb) else _num(v.lb)
        hi = "+inf" if math.isinf(v.ub) else _num(v.ub)
        if v.lb == v.ub:
            lines.append(f" {nm} = {_num(v.lb)}")
        else:
            lines.append(f" {lo} <= {nm} <= {hi}")
    bins = [nm for v, nm in zip(model.variables, names) if v.is_binary]
    if bins:
        lines.append("Binary")
        lines.extend(" " + ln for ln in _wrap(bins, 10))
    lines.append("End")
    Path(destination).write_text("\n".join(lines) + "\n")


def write_solution(model: MilpModel, x, destination: str | Path) -> None:
    """One ``name value`` line per variable, names escaped as in :func:`export_lp`."""
    lines = [f"{escape_name(v.name)} {float(x[v.id])!r}" for v in model.variables]
    Path(destination).write_text("\n".join(lines) + "\n")


def import_solution(path: str | Path, model: MilpModel, tol: float = FEAS_TOL) -> np.ndarray:
    """Read a ``name value`` file into a full assignment and check it.

    Names may be escaped or raw. Variables absent from the file default to
    zero with a warning; an infeasible point raises :class:`InfeasibleSolution`
    naming the worst violated row.
    """
    lookup = {v.name: v.id for v in model.variables}
    x = np.zeros(len(model.variables))
    seen = set()
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith(("#", "\\")):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'name value', got {raw!r}")
        name, val = parts
        vid = lookup.get(name)
        if vid is None:
            try:
                vid = lookup.get(unescape_name(name))
            except (ValueError, IndexError):
                vid = None
        if vid is None:
            warnings.warn(f"{path}:{lineno}: unknown variable {name!r} ignored", stacklevel=2)
            continue
        x[vid] = float(val)
        seen.add(vid)
    missing = len(model.variables) - len(seen)
    if missing:
        warnings.warn(f"{missing} variables missing from {path}; set to 0", stacklevel=2)
    worst, where = model.worst_violation(x, tol)
    if where is not None:
        raise InfeasibleSolution(f"imported point violates {where} by {worst:.3g}")
    return x
