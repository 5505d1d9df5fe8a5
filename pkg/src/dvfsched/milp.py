"""Solver-agnostic MILP container and big-M linearisations.

Variables are continuous or binary, always with finite bounds once a model is
handed to a solver. Linear expressions are built with ordinary arithmetic on
:class:`Var` and :class:`LinExpr`::

    m = MilpModel(big_M=100.0)
    x = m.add_var("x", ub=10)
    y = m.add_var("y", ub=10)
    m.add_constraint(2 * x - y, "<=", 3)
    m.minimize(x + y)

The encoding helpers (:func:`add_indicator_nonzero`, :func:`add_positive_part`,
:func:`add_max`, :func:`add_min`, :func:`add_or`) emit the standard big-M rows
using the model's single constant ``big_M``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Iterable, NamedTuple, Union

import numpy as np

SENSES = ("<=", "==", ">=")


class VarKind(str, enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Var:
    id: int
    name: str
    kind: VarKind = VarKind.CONTINUOUS
    lb: float = 0.0
    ub: float = float("inf")

    @property
    def is_binary(self) -> bool:
        return self.kind is VarKind.BINARY

    def _expr(self) -> "LinExpr":
        return LinExpr({self.id: 1.0})

    def __add__(self, other):
        return self._expr() + other

    __radd__ = __add__

    def __sub__(self, other):
        return self._expr() - other

    def __rsub__(self, other):
        return -self._expr() + other

    def __mul__(self, k):
        return self._expr() * k

    __rmul__ = __mul__

    def __neg__(self):
        return -self._expr()


class LinExpr:
    """Sparse linear form ``sum(coef * var) + const``."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: dict[int, float] | None = None, const: float = 0.0):
        self.terms = dict(terms or {})
        self.const = float(const)

    @staticmethod
    def of(value: "Operand") -> "LinExpr":
        if isinstance(value, LinExpr):
            return value
        if isinstance(value, Var):
            return LinExpr({value.id: 1.0})
        return LinExpr({}, float(value))

    def copy(self) -> "LinExpr":
        return LinExpr(self.terms, self.const)

    def __add__(self, other):
        other = LinExpr.of(other)
        out = self.copy()
        for v, c in other.terms.items():
            out.terms[v] = out.terms.get(v, 0.0) + c
        out.const += other.const
        return out

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-LinExpr.of(other))

    def __rsub__(self, other):
        return LinExpr.of(other) - self

    def __neg__(self):
        return LinExpr({v: -c for v, c in self.terms.items()}, -self.const)

    def __mul__(self, k):
        if isinstance(k, (Var, LinExpr)):
            raise ModelError("products of variables are not linear")
        k = float(k)
        return LinExpr({v: c * k for v, c in self.terms.items()}, self.const * k)

    __rmul__ = __mul__

    def value(self, x) -> float:
        return self.const + sum(c * x[v] for v, c in self.terms.items())

    def __repr__(self):
        parts = [f"{c:+g}*v{v}" for v, c in self.terms.items()]
        return f"LinExpr({' '.join(parts)} {self.const:+g})"


Operand = Union[Var, LinExpr, float, int]


def lsum(items: Iterable[Operand]) -> LinExpr:
    out = LinExpr()
    for it in items:
        it = LinExpr.of(it)
        for v, c in it.terms.items():
            out.terms[v] = out.terms.get(v, 0.0) + c
        out.const += it.const
    return out


@dataclass(frozen=True)
class LinearConstraint:
    terms: tuple[tuple[float, int], ...]
    sense: str
    rhs: float
    name: str = ""

    def activity(self, x) -> float:
        return sum(c * x[v] for c, v in self.terms)

    def violation(self, x) -> float:
        act = self.activity(x)
        if self.sense == "<=":
            return max(0.0, act - self.rhs)
        if self.sense == ">=":
            return max(0.0, self.rhs - act)
        return abs(act - self.rhs)


@dataclass
class MilpModel:
    """Variables, rows and a minimisation objective.

    ``meta`` is free-form bookkeeping for the formulation builders (variable
    handles, workloads, slot layout) so that decoders can find their way back
    from a flat solution vector.
    """

    big_M: float = 1e4
    name: str = "model"
    variables: list[Var] = field(default_factory=list)
    constraints: list[LinearConstraint] = field(default_factory=list)
    objective: LinExpr = field(default_factory=LinExpr)
    meta: dict[str, Any] = field(default_factory=dict)

    # ------------------------------------------------------------ variables
    def add_var(self, name: str, lb: float = 0.0, ub: float | None = None,
                kind: VarKind = VarKind.CONTINUOUS) -> Var:
        if kind is VarKind.BINARY:
            lb, ub = 0.0, 1.0
        if ub is None:
            ub = self.big_M
        if lb > ub:
            raise ModelError(f"variable {name}: lb {lb} > ub {ub}")
        v = Var(len(self.variables), name, kind, float(lb), float(ub))
        self.variables.append(v)
        return v

    def add_binary(self, name: str) -> Var:
        return self.add_var(name, kind=VarKind.BINARY)

    def var(self, name: str) -> Var:
        try:
            return self._names[name]
        except (AttributeError, KeyError):
            self._names = {v.name: v for v in self.variables}
            return self._names[name]

    @property
    def binaries(self) -> list[Var]:
        return [v for v in self.variables if v.is_binary]

    @property
    def n_binary(self) -> int:
        return sum(1 for v in self.variables if v.is_binary)

    @property
    def n_continuous(self) -> int:
        return len(self.variables) - self.n_binary

    # ------------------------------------------------------------ rows
    def add_constraint(self, lhs: Operand, sense: str, rhs: Operand = 0.0,
                       name: str = "") -> int:
        """Add ``lhs sense rhs``; returns the row id."""
        if sense not in SENSES:
            raise ModelError(f"unknown sense {sense!r}")
        expr = LinExpr.of(lhs) - LinExpr.of(rhs)
        n = len(self.variables)
        terms = []
        for v, c in sorted(expr.terms.items()):
            if not 0 <= v < n:
                raise ModelError(f"row {name!r} references unknown variable {v}")
            if c != 0.0:
                terms.append((c, v))
        self.constraints.append(LinearConstraint(tuple(terms), sense, -expr.const, name))
        return len(self.constraints) - 1

    def le(self, lhs, rhs, name=""):
        return self.add_constraint(lhs, "<=", rhs, name)

    def ge(self, lhs, rhs, name=""):
        return self.add_constraint(lhs, ">=", rhs, name)

    def eq(self, lhs, rhs, name=""):
        return self.add_constraint(lhs, "==", rhs, name)

    def minimize(self, expr: Operand) -> None:
        expr = LinExpr.of(expr)
        n = len(self.variables)
        if any(not 0 <= v < n for v in expr.terms):
            raise ModelError("objective references unknown variable")
        self.objective = expr

    # ------------------------------------------------------------ evaluation
    def objective_value(self, x) -> float:
        return self.objective.value(x)

    def worst_violation(self, x, tol: float = 1e-7) -> tuple[float, str | None]:
        """Largest row or bound violation of an assignment and what violates it."""
        worst, where = 0.0, None
        for k, row in enumerate(self.constraints):
            viol = row.violation(x)
            if viol > worst:
                worst, where = viol, row.name or f"row{k}"
        for v in self.variables:
            viol = max(v.lb - x[v.id], x[v.id] - v.ub, 0.0)
            if v.is_binary:
                viol = max(viol, min(abs(x[v.id]), abs(x[v.id] - 1.0)))
            if viol > worst:
                worst, where = viol, f"bound of {v.name}"
        return worst, (where if worst > tol else None)

    def is_feasible(self, x, tol: float = 1e-7) -> bool:
        return self.worst_violation(x, tol)[1] is None

    def arrays(self):
        """Dense ``(c, A, senses, b, lb, ub, is_binary)`` view of the model."""
        n, m = len(self.variables), len(self.constraints)
        c = np.zeros(n)
        for v, coef in self.objective.terms.items():
            c[v] += coef
        A = np.zeros((m, n))
        b = np.empty(m)
        senses = []
        for i, row in enumerate(self.constraints):
            for coef, v in row.terms:
                A[i, v] += coef
            b[i] = row.rhs
            senses.append(row.sense)
        lb = np.array([v.lb for v in self.variables])
        ub = np.array([v.ub for v in self.variables])
        binary = np.array([v.is_binary for v in self.variables], dtype=bool)
        return c, A, senses, b, lb, ub, binary

    def check_closure(self) -> None:
        n = len(self.variables)
        for row in self.constraints:
            if any(not 0 <= v < n for _, v in row.terms):
                raise ModelError(f"row {row.name!r} references a missing variable")
        if any(not 0 <= v < n for v in self.objective.terms):
            raise ModelError("objective references a missing variable")

    def summary(self) -> dict[str, int]:
        return {
            "variables": len(self.variables),
            "continuous": self.n_continuous,
            "binaries": self.n_binary,
            "rows": len(self.constraints),
        }


# ---------------------------------------------------------------- encodings


class MaxMin(NamedTuple):
    value: Var
    aux: Var
    bin: Var


def add_indicator_nonzero(model: MilpModel, x: Operand, threshold: float,
                          name: str = "ind") -> Var:
    """Binary that is 1 whenever ``x > 0``, with ``x`` in ``{0} U [threshold, M]``.

    Rows: ``x <= M*b`` and ``x >= threshold*b``. A separate epsilon row is not
    needed because the threshold row already keeps ``b = 1`` away from
    ``x = 0``.
    """
    if not threshold > 0:
        raise ModelError("indicator threshold must be positive")
    b = model.add_binary(name)
    model.le(x, model.big_M * b, f"{name}.up")
    model.ge(x, threshold * b, f"{name}.th")
    return b


def add_positive_part(model: MilpModel, y: Operand, x: Operand, name: str = "pos",
                      z: Var | None = None) -> tuple[Var, Var]:
    """``z = max(0, y - x)`` with ``bin = 1`` iff ``y >= x`` (free at ties).

    Pass an existing non-negative variable as ``z`` to pin it to the positive
    part instead of creating a fresh one.
    """
    M = model.big_M
    if z is None:
        z = model.add_var(name)
    b = model.add_binary(f"{name}.bin")
    diff = LinExpr.of(y) - LinExpr.of(x)
    model.le(diff, M * b, f"{name}.sel1")
    model.le(-diff, M * (1 - b), f"{name}.sel0")
    model.le(diff, z, f"{name}.lo")
    model.le(z, M * b, f"{name}.off")
    model.le(diff + z, 2 * diff + M * (1 - b), f"{name}.on")
    return z, b


def add_max(model: MilpModel, x: Operand, y: Operand, name: str = "max") -> MaxMin:
    """``value = x + max(0, y - x) = max(x, y)``."""
    w, b = add_positive_part(model, y, x, f"{name}.w")
    z = model.add_var(name)
    model.eq(z, LinExpr.of(x) + w, f"{name}.def")
    return MaxMin(z, w, b)


def add_min(model: MilpModel, x: Operand, y: Operand, name: str = "min") -> MaxMin:
    """``value = x - max(0, x - y) = min(x, y)``."""
    g, b = add_positive_part(model, x, y, f"{name}.g")
    z = model.add_var(name)
    model.eq(z, LinExpr.of(x) - g, f"{name}.def")
    return MaxMin(z, g, b)


def add_or(model: MilpModel, b1: Var, b2: Var, name: str = "or") -> Var:
    b3 = model.add_binary(name)
    model.le(b1, b3, f"{name}.a")
    model.le(b2, b3, f"{name}.b")
    model.le(b3, b1 + b2, f"{name}.c")
    return b3


def add_geq_indicator(model: MilpModel, y: Operand, x: Operand, name: str = "geq") -> Var:
    """Binary forced to 1 when ``y > x`` and to 0 when ``y < x``.

    This is the selector pair of :func:`add_positive_part` on its own; it is
    the two-sided comparison needed when ``y - x`` may be negative.
    """
    M = model.big_M
    b = model.add_binary(name)
    diff = LinExpr.of(y) - LinExpr.of(x)
    model.le(diff, M * b, f"{name}.sel1")
    model.le(-diff, M * (1 - b), f"{name}.sel0")
    return b
