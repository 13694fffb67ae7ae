"""Vector fields over the trig-polynomial ring and the brackets between them."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .expr import ExprError, TrigPoly, VariableRegistry, compile_polys
from .linalg import float_rank, is_exact, lstsq_residual, rational_rank

DEFAULT_RANK_TOL = 1e-9


class VectorField:
    """A tuple of TrigPoly components, one per registry variable."""

    __slots__ = ("registry", "components", "_compiled")

    def __init__(self, registry: VariableRegistry, components: Sequence[TrigPoly]):
        components = tuple(components)
        if len(components) != registry.n:
            raise ExprError(f"vector field needs {registry.n} components, got {len(components)}")
        for c in components:
            if c.registry != registry:
                raise ExprError("component over a different registry")
        self.registry = registry
        self.components = components
        self._compiled = None

    @classmethod
    def zero(cls, registry: VariableRegistry) -> "VectorField":
        return cls(registry, [TrigPoly.zero(registry)] * registry.n)

    @classmethod
    def parse(cls, registry: VariableRegistry, texts: Sequence[str]) -> "VectorField":
        from .expr import parse_expr

        return cls(registry, [parse_expr(t, registry) for t in texts])

    def __getitem__(self, i: int) -> TrigPoly:
        return self.components[i]

    def __len__(self) -> int:
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    def __eq__(self, other) -> bool:
        if not isinstance(other, VectorField):
            return NotImplemented
        return self.registry == other.registry and self.components == other.components

    def __hash__(self) -> int:
        return hash(self.components)

    def _check(self, other: "VectorField"):
        if not isinstance(other, VectorField) or other.registry != self.registry:
            raise ExprError("mismatched registries")

    def __add__(self, other: "VectorField") -> "VectorField":
        self._check(other)
        return VectorField(self.registry, [a + b for a, b in zip(self, other)])

    def __sub__(self, other: "VectorField") -> "VectorField":
        self._check(other)
        return VectorField(self.registry, [a - b for a, b in zip(self, other)])

    def __neg__(self) -> "VectorField":
        return VectorField(self.registry, [-a for a in self])

    def scale(self, s) -> "VectorField":
        """Multiply every component by a rational or a TrigPoly."""
        return VectorField(self.registry, [c * s for c in self])

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)

    def __str__(self) -> str:
        return "(" + ", ".join(str(c) for c in self.components) + ")"

    def __repr__(self) -> str:
        return f"VectorField{self}"

    def evaluate(self, point) -> list:
        values = point_values(self.registry, point)
        return [c.evaluate_at(values) for c in self.components]

    def numeric(self, x) -> np.ndarray:
        """Float evaluation at a positional state (angles in radians)."""
        if self._compiled is None:
            self._compiled = compile_polys(self.components)
        return np.array(self._compiled(x), dtype=float)


def point_values(registry: VariableRegistry, point) -> list:
    """Normalize a point (mapping or sequence) to a positional value list."""
    if isinstance(point, Mapping):
        missing = [n for n in registry.names if n not in point]
        if missing:
            raise ExprError(f"missing assignment for {missing}")
        return [point[n] for n in registry.names]
    values = list(point)
    if len(values) != registry.n:
        raise ExprError(f"point has {len(values)} entries, registry has {registry.n}")
    return values


def point_is_exact(registry: VariableRegistry, point) -> bool:
    for i, v in enumerate(point_values(registry, point)):
        if registry.is_angle(i):
            if not (isinstance(v, (tuple, list)) and len(v) == 2 and all(is_exact(c) for c in v)):
                return False
        elif not is_exact(v):
            return False
    return True


def jacobian(X: VectorField) -> list:
    """Matrix ``J[i][j] = dX_i/dx_j`` of TrigPolys."""
    names = X.registry.names
    return [[comp.diff(name) for name in names] for comp in X.components]


def _apply(jac: list, X: VectorField) -> list:
    n = len(jac)
    out = []
    for i in range(n):
        acc = TrigPoly.zero(X.registry)
        for j in range(n):
            if jac[i][j] and X[j]:
                acc = acc + jac[i][j] * X[j]
        out.append(acc)
    return out


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    """``[X, Y] = (DY) X - (DX) Y``."""
    X._check(Y)
    dy_x = _apply(jacobian(Y), X)
    dx_y = _apply(jacobian(X), Y)
    return VectorField(X.registry, [a - b for a, b in zip(dy_x, dx_y)])


def ad_power(f: VectorField, g: VectorField, s: int) -> VectorField:
    """``ad_f^s g``: s nested brackets with f on the left."""
    if s < 0:
        raise ValueError("ad power must be non-negative")
    out = g
    for _ in range(s):
        out = lie_bracket(f, out)
    return out


@dataclass(frozen=True, order=True)
class DegreeClass:
    """Membership in V^{a,b}: x2-degree of the x1 block (a) and x2 block (b)."""

    a: int
    b: int

    def within(self, other: "DegreeClass") -> bool:
        return self.a <= other.a and self.b <= other.b

    def __str__(self) -> str:
        return f"V^({self.a},{self.b})"


def degree_class(X: VectorField) -> DegreeClass:
    reg = X.registry
    x2 = list(reg.x2_positions)
    for i in x2:
        if reg.is_angle(i):
            raise ExprError(f"angle variable {reg.names[i]!r} found in the x2 block")
    a = max((c.degree_in(x2) for c in X.components[: reg.split]), default=-1)
    b = max((c.degree_in(x2) for c in X.components[reg.split:]), default=-1)
    return DegreeClass(a, b)


def bracket_degree_bound(x: DegreeClass, y: DegreeClass) -> DegreeClass:
    """Degree class guaranteed for ``[X, Y]`` with X in V^x, Y in V^y.

    A candidate term involving a negative degree is dropped (it stands for the
    zero polynomial) and contributes -1.
    """

    def term(*parts_and_offset):
        *parts, offset = parts_and_offset
        if any(p < 0 for p in parts):
            return -1
        return max(sum(parts) + offset, -1)

    a, b, c, d = x.a, x.b, y.a, y.b
    top = max(term(a, c, 0), term(a, d, -1), term(b, c, -1))
    bottom = max(term(b, c, 0), term(a, d, 0), term(b, d, -1))
    return DegreeClass(top, bottom)


@dataclass
class SpanReport:
    """Evidence for a pointwise span or membership test."""

    point: list
    matrix: list
    rank: int
    exact: bool
    tol: float
    target: list | None = None
    residual: float | None = None
    member: bool | None = None
    singular_values: list = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return len(self.matrix[0]) if self.matrix else 0

    def full(self, n: int | None = None) -> bool:
        return self.rank == (self.dimension if n is None else n)

    def to_dict(self) -> dict:
        def conv(v):
            if isinstance(v, Fraction):
                return str(v) if v.denominator != 1 else int(v)
            if isinstance(v, (tuple, list)):
                return [conv(x) for x in v]
            if isinstance(v, (np.floating, float)):
                return float(v)
            return v

        out = {
            "point": conv(self.point),
            "matrix": conv(self.matrix),
            "rank": self.rank,
            "exact": self.exact,
            "tol": self.tol,
        }
        if self.target is not None:
            out.update(target=conv(self.target), residual=self.residual, member=self.member)
        return out


def _values(fields: Sequence[VectorField], point, exact: bool) -> list:
    rows = [X.evaluate(point) for X in fields]
    if not exact:
        rows = [[float(v) for v in row] for row in rows]
    return rows


def _resolve_exact(registry, point, exact):
    auto = point_is_exact(registry, point)
    if exact is None:
        return auto
    if exact and not auto:
        raise ExprError("exact span test requires a rational point with rational (cos, sin) pairs")
    return exact


def span_rank(fields: Sequence[VectorField], point, tol: float = DEFAULT_RANK_TOL,
              exact: bool | None = None) -> SpanReport:
    """Rank of the field values at ``point``.

    Rational points use exact elimination; otherwise singular values above
    ``tol`` times the largest one are counted.
    """
    if not fields:
        raise ValueError("span_rank needs at least one field")
    reg = fields[0].registry
    exact = _resolve_exact(reg, point, exact)
    rows = _values(fields, point, exact)
    if exact:
        return SpanReport(list(point_values(reg, point)), rows, rational_rank(rows), True, 0.0)
    rank, s = float_rank(rows, tol)
    return SpanReport(list(point_values(reg, point)), rows, rank, False, tol,
                      singular_values=[float(v) for v in s])


def span_membership(target: VectorField, fields: Sequence[VectorField], point,
                    tol: float = DEFAULT_RANK_TOL, exact: bool | None = None) -> SpanReport:
    """Is ``target(point)`` in the span of the ``fields`` values at ``point``?

    The reported residual is the relative least-squares residual; on the
    exact path membership is decided by comparing ranks and a member gets
    residual exactly 0.
    """
    reg = target.registry
    exact = _resolve_exact(reg, point, exact)
    rows = _values(fields, point, exact)
    tvals = target.evaluate(point)
    if not exact:
        tvals = [float(v) for v in tvals]
    if exact:
        base = rational_rank(rows) if rows else 0
        member = all(v == 0 for v in tvals) or rational_rank(rows + [tvals]) == base
        residual = 0.0 if member else lstsq_residual(rows, tvals) if rows else 1.0
        return SpanReport(list(point_values(reg, point)), rows, base, True, 0.0,
                          target=tvals, residual=residual, member=member)
    rank, s = float_rank(rows, tol) if rows else (0, np.zeros(0))
    residual = lstsq_residual(rows, tvals) if rows else (0.0 if not any(tvals) else 1.0)
    return SpanReport(list(point_values(reg, point)), rows, rank, False, tol,
                      target=tvals, residual=residual, member=residual <= tol,
                      singular_values=[float(v) for v in s])
