"""Affine control systems and their construction from mechanical data.

A controlled mechanical system ``Q(q) u = M(q) q'' + N(q, q')`` with phase
variables ``x1 = psi(q)``, ``x2 = P(q) q'`` becomes

    x1' = F x2,                      F = (dpsi/dq) P^-1
    x2' = P' P^-1 x2 - P M^-1 N + (P M^-1 Q) u

All matrices are TrigPoly-valued and inverses are supplied explicitly, then
verified symbolically.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .expr import TrigPoly, VariableRegistry, parse_expr
from .lie import (
    DegreeClass,
    VectorField,
    degree_class,
    lie_bracket,
    span_rank,
)
from .linalg import rational_rank, rational_solve
from .points import witness_point


class BuildError(ValueError):
    """Invalid mechanical specification or control bounds."""


Matrix = list  # list of rows of TrigPoly


def _check_bounds(bounds, m):
    bounds = [(Fraction(a) if not isinstance(a, float) else a, Fraction(b) if not isinstance(b, float) else b)
              for a, b in bounds]
    if len(bounds) != m:
        raise BuildError(f"need {m} control bounds, got {len(bounds)}")
    for i, (a, b) in enumerate(bounds):
        if not a < 0 < b:
            raise BuildError(f"bounds for channel {i + 1} must satisfy alpha < 0 < beta, got ({a}, {b})")
    return bounds


class AffineSystem:
    """``x' = f(x) + sum_i g_i(x) u_i`` with box control bounds.

    Channels are indexed from 0 in the library.  ``mechanical`` is set for
    systems produced by :func:`build_affine` and enables the structural
    shortcuts of the analysis modules (commuting controls, x1-only control
    fields).
    """

    def __init__(self, drift: VectorField, controls: Sequence[VectorField], bounds,
                 provenance: str = "raw", r: int | None = None, G_hat=None, G_hat_inv=None,
                 check_independence: bool = True, witness=None, name: str = ""):
        controls = list(controls)
        if not controls:
            raise BuildError("at least one control field required")
        for g in controls:
            drift._check(g)
        self.registry: VariableRegistry = drift.registry
        self.drift = drift
        self.controls = controls
        self.bounds = _check_bounds(bounds, len(controls))
        self.provenance = provenance
        self.r = r
        self.G_hat = G_hat
        self.G_hat_inv = G_hat_inv
        self.name = name
        self._ad: dict = {}
        self._br: dict = {}
        if check_independence:
            pt = witness if witness is not None else witness_point(self.registry)
            rep = span_rank(controls, pt)
            if rep.rank < len(controls):
                raise BuildError("control fields are not linearly independent at the witness point")

    @property
    def n(self) -> int:
        return self.registry.n

    @property
    def m(self) -> int:
        return len(self.controls)

    @property
    def mechanical(self) -> bool:
        return self.provenance == "mechanical"

    @property
    def fully_actuated(self) -> bool:
        return self.mechanical and self.m == self.r

    def ad(self, s: int, i: int) -> VectorField:
        """Cached ``ad_f^s g_i``."""
        key = (s, i)
        if key not in self._ad:
            self._ad[key] = self.controls[i] if s == 0 else lie_bracket(self.drift, self.ad(s - 1, i))
        return self._ad[key]

    def bracket_with_control(self, k: int, s: int, j: int) -> VectorField:
        """Cached ``[g_k, ad_f^s g_j]``."""
        key = (k, s, j)
        if key not in self._br:
            self._br[key] = lie_bracket(self.controls[k], self.ad(s, j))
        return self._br[key]

    def __repr__(self) -> str:
        return f"AffineSystem(n={self.n}, m={self.m}, provenance={self.provenance!r})"


@dataclass
class MechanicalSystemSpec:
    """Mechanical data over a 2r-variable registry (x1 coordinates, then q').

    Matrices other than ``N`` may only depend on the first r variables.  When
    ``psi`` is not the identity, every matrix must already be written in the
    x1 coordinates and ``dP`` must be supplied.
    """

    registry: VariableRegistry
    M: Matrix
    M_inv: Matrix
    N: list
    Q: Matrix
    dpsi: Matrix | None = None
    P: Matrix | None = None
    P_inv: Matrix | None = None
    dP: list | None = None
    state_names: Sequence[str] | None = None

    @property
    def r(self) -> int:
        return self.registry.n // 2

    @property
    def m(self) -> int:
        return len(self.Q[0])


def identity(reg: VariableRegistry, r: int) -> Matrix:
    return [[TrigPoly.const(reg, 1 if i == j else 0) for j in range(r)] for i in range(r)]


def matmul(a: Matrix, b: Matrix) -> Matrix:
    reg = a[0][0].registry
    out = []
    for row in a:
        new = []
        for j in range(len(b[0])):
            acc = TrigPoly.zero(reg)
            for k, x in enumerate(row):
                if x and b[k][j]:
                    acc = acc + x * b[k][j]
            new.append(acc)
        out.append(new)
    return out


def matvec(a: Matrix, v: Sequence[TrigPoly]) -> list:
    return [row[0] for row in matmul(a, [[x] for x in v])]


def is_identity(a: Matrix) -> bool:
    return all(
        a[i][j] == (1 if i == j else 0) for i in range(len(a)) for j in range(len(a[0]))
    ) and len(a) == len(a[0])


def parse_matrix(rows: Sequence[Sequence[str]], reg: VariableRegistry) -> Matrix:
    return [[parse_expr(t, reg) for t in row] for row in rows]


def _rebase(p: TrigPoly, target: VariableRegistry, mapping: dict) -> TrigPoly:
    return p.substitute(target, mapping)


def build_affine(spec: MechanicalSystemSpec, bounds, witness_seed: int | None = None) -> AffineSystem:
    """Compile mechanical data into an :class:`AffineSystem`."""
    reg = spec.registry
    if reg.n % 2:
        raise BuildError(f"mechanical registry must have 2r variables, got {reg.n}")
    r = spec.r
    if reg.split != r:
        raise BuildError(f"registry split must be r = {r}")
    x1_names = list(reg.names[:r])
    qd_names = list(reg.names[r:])
    for i in range(r, 2 * r):
        if reg.is_angle(i):
            raise BuildError("generalized velocities must be polynomial variables")
    eye = identity(reg, r)
    P = spec.P or eye
    P_inv = spec.P_inv or eye
    dpsi = spec.dpsi or eye
    M, M_inv, Q = spec.M, spec.M_inv, spec.Q
    for label, mat, rows, cols in (("M", M, r, r), ("M_inv", M_inv, r, r), ("Q", Q, r, None),
                                   ("P", P, r, r), ("P_inv", P_inv, r, r), ("dpsi", dpsi, r, r)):
        if len(mat) != rows or (cols is not None and any(len(row) != cols for row in mat)):
            raise BuildError(f"{label} has the wrong shape")
        for row in mat:
            for e in row:
                if any(e.depends_on(v) for v in qd_names):
                    raise BuildError(f"{label} may only depend on configuration variables")
    if len(spec.N) != r:
        raise BuildError("N must have r entries")
    m = len(Q[0])
    if any(M[i][j] != M[j][i] for i in range(r) for j in range(r)):
        raise BuildError("M is not symmetric")
    if not is_identity(matmul(M, M_inv)):
        raise BuildError("M * M_inv is not the identity")
    if not is_identity(matmul(P, P_inv)):
        raise BuildError("P * P_inv is not the identity")
    wpt = witness_point(reg, witness_seed)
    q_rank = rational_rank([[e.evaluate_at(wpt) for e in row] for row in Q])
    if q_rank != m:
        raise BuildError(f"Q has rank {q_rank} < {m} at the witness point")

    if spec.dP is not None:
        dP = spec.dP
    elif spec.dpsi is None:
        dP = [[[e.diff(x1_names[k]) for e in row] for row in P] for k in range(r)]
    else:
        raise BuildError("dP must be supplied when psi is not the identity")

    x2_names = list(spec.state_names or qd_names)
    names = x1_names + x2_names
    angles = [n for i, n in enumerate(x1_names) if reg.is_angle(i)]
    out_reg = VariableRegistry.build(names, angles=angles, split=r)
    keep = {n: n for n in x1_names}
    for n in qd_names:
        if n not in x2_names:
            keep[n] = TrigPoly.zero(out_reg)

    def lift(p):
        return _rebase(p, out_reg, keep)

    def lift_mat(mat):
        return [[lift(e) for e in row] for row in mat]

    Pl, Pinvl, Ml_inv, Ql = lift_mat(P), lift_mat(P_inv), lift_mat(M_inv), lift_mat(Q)
    dpsil = lift_mat(dpsi)
    x2 = [TrigPoly.var(out_reg, n) for n in x2_names]
    qdot = matvec(Pinvl, x2)
    qd_map = dict(keep)
    qd_map.update({qd_names[k]: qdot[k] for k in range(r)})
    N_sub = [_rebase(e, out_reg, qd_map) for e in spec.N]

    F = matmul(dpsil, Pinvl)
    top = matvec(F, x2)
    P_dot = [[TrigPoly.zero(out_reg) for _ in range(r)] for _ in range(r)]
    for k in range(r):
        dPk = lift_mat(dP[k])
        for i in range(r):
            for j in range(r):
                if dPk[i][j]:
                    P_dot[i][j] = P_dot[i][j] + dPk[i][j] * qdot[k]
    PMinv = matmul(Pl, Ml_inv)
    pd_term = matvec(P_dot, qdot)
    force = matvec(PMinv, N_sub)
    bottom = [a - b for a, b in zip(pd_term, force)]
    G_hat = matmul(PMinv, Ql)
    drift = VectorField(out_reg, top + bottom)
    zero = TrigPoly.zero(out_reg)
    controls = [VectorField(out_reg, [zero] * r + [G_hat[i][j] for i in range(r)]) for j in range(m)]
    return AffineSystem(drift, controls, bounds, provenance="mechanical", r=r, G_hat=G_hat,
                        witness=witness_point(out_reg, witness_seed))


# ---------------------------------------------------------------------------
# Structural checks
# ---------------------------------------------------------------------------


@dataclass
class CommutativityReport:
    brackets: dict
    nonzero: list
    independence_rank: int
    independence_expected: int
    witness: list

    @property
    def commuting(self) -> bool:
        return not self.nonzero

    @property
    def independent(self) -> bool:
        return self.independence_rank == self.independence_expected

    @property
    def passed(self) -> bool:
        return self.commuting and self.independent

    def to_dict(self) -> dict:
        return {
            "commuting": self.commuting,
            "nonzero_brackets": [
                {"i": i + 1, "j": j + 1, "bracket": [str(c) for c in self.brackets[(i, j)]]}
                for i, j in self.nonzero
            ],
            "independence_rank": self.independence_rank,
            "independence_expected": self.independence_expected,
            "passed": self.passed,
        }


def check_commutativity(sys: AffineSystem, witness=None) -> CommutativityReport:
    """Symbolic ``[g_i, g_j]`` for all pairs plus independence of {g_i, [f, g_i]}."""
    brackets = {}
    nonzero = []
    for i in range(sys.m):
        for j in range(sys.m):
            b = lie_bracket(sys.controls[i], sys.controls[j])
            brackets[(i, j)] = b
            if not b.is_zero():
                nonzero.append((i, j))
    pt = witness if witness is not None else witness_point(sys.registry)
    fields = sys.controls + [sys.ad(1, i) for i in range(sys.m)]
    rank = span_rank(fields, pt).rank
    return CommutativityReport(brackets, nonzero, rank, 2 * sys.m, pt)


@dataclass
class AlphaTable:
    """``[g_j, [f, g_i]] = sum_k alpha[(i, j, k)] g_k`` (0-based indices)."""

    alpha: dict
    residuals: dict
    x1_only: bool

    def __getitem__(self, key) -> TrigPoly:
        return self.alpha[key]

    @property
    def exact(self) -> bool:
        return all(res.is_zero() for res in self.residuals.values())

    def matrix(self, k: int, rows: Sequence[int], cols: Sequence[int]) -> list:
        return [[self.alpha[(i, j, k)] for j in cols] for i in rows]


def _constant_inverse(mat: Matrix) -> Matrix | None:
    vals = [[e.constant_value() for e in row] for row in mat]
    if any(v is None for row in vals for v in row):
        return None
    reg = mat[0][0].registry
    n = len(vals)
    try:
        cols = [rational_solve(vals, [1 if i == j else 0 for i in range(n)]) for j in range(n)]
    except ZeroDivisionError:
        raise BuildError("G_hat is singular") from None
    return [[TrigPoly.const(reg, cols[j][i]) for j in range(n)] for i in range(n)]


def alpha_decomposition(sys: AffineSystem, G_hat_inv: Matrix | None = None) -> AlphaTable:
    """Coefficients expressing ``[g_j, [f, g_i]]`` in the control fields."""
    if not sys.mechanical:
        raise BuildError("alpha decomposition needs a mechanical build")
    if sys.m != sys.r:
        raise BuildError("alpha decomposition needs a fully actuated system (m = r)")
    r = sys.r
    inv = G_hat_inv or sys.G_hat_inv or _constant_inverse(sys.G_hat)
    if inv is None:
        raise BuildError("G_hat is not constant; supply an explicit G_hat inverse")
    if not is_identity(matmul(sys.G_hat, inv)):
        raise BuildError("supplied G_hat inverse does not invert G_hat")
    alpha, residuals = {}, {}
    x2_names = sys.registry.names[r:]
    x1_only = True
    for i in range(sys.m):
        for j in range(sys.m):
            br = sys.bracket_with_control(j, 1, i)
            coeffs = matvec(inv, list(br.components[r:]))
            combo = VectorField.zero(sys.registry)
            for k in range(sys.m):
                alpha[(i, j, k)] = coeffs[k]
                combo = combo + sys.controls[k].scale(coeffs[k])
                if any(coeffs[k].depends_on(v) for v in x2_names):
                    x1_only = False
            residuals[(i, j)] = br - combo
    return AlphaTable(alpha, residuals, x1_only)


def lemma2_bounds(b: int, s: int) -> tuple[DegreeClass, DegreeClass]:
    """Degree classes guaranteed for ``ad_f^s g_i`` and ``[g_j, ad_f^s g_i]``.

    Negative entries mean the block vanishes and are clamped to -1.
    """
    ad = DegreeClass(max((s - 1) * b - s + 1, -1), max(s * b - s, -1))
    br = DegreeClass(max((s - 1) * b - s, -1), max(s * b - s - 1, -1))
    return ad, br


@dataclass
class DegreeAuditEntry:
    label: str
    found: DegreeClass
    bound: DegreeClass

    @property
    def ok(self) -> bool:
        return self.found.within(self.bound)


@dataclass
class DegreeAudit:
    drift_class: DegreeClass
    b: int
    entries: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.drift_class.a <= 1 and all(e.ok for e in self.entries)

    def to_dict(self) -> dict:
        return {
            "drift_class": [self.drift_class.a, self.drift_class.b],
            "b": self.b,
            "entries": [
                {"label": e.label, "found": [e.found.a, e.found.b], "bound": [e.bound.a, e.bound.b], "ok": e.ok}
                for e in self.entries
            ],
            "passed": self.passed,
        }


def structural_degree_audit(sys: AffineSystem, s_max: int = 2) -> DegreeAudit:
    """Check the polynomial degree structure of ad-powers against their bounds."""
    fc = degree_class(sys.drift)
    b = max(fc.b, 2)
    audit = DegreeAudit(fc, fc.b)
    for s in range(s_max + 1):
        ad_bound, br_bound = lemma2_bounds(b, s)
        for i in range(sys.m):
            audit.entries.append(DegreeAuditEntry(f"ad_f^{s} g_{i + 1}", degree_class(sys.ad(s, i)), ad_bound))
            for j in range(sys.m):
                audit.entries.append(DegreeAuditEntry(
                    f"[g_{j + 1}, ad_f^{s} g_{i + 1}]",
                    degree_class(sys.bracket_with_control(j, s, i)), br_bound))
    return audit


# ---------------------------------------------------------------------------
# Random test systems
# ---------------------------------------------------------------------------


def random_mechanical_spec(rng, r: int = 3, m: int | None = None) -> MechanicalSystemSpec:
    """A random mechanical system with a heading-like angle.

    ``M`` is a constant positive-definite rational matrix, ``Q`` rotates the
    first two force directions with the angle and ``N`` is a quadratic form
    in the velocities with trigonometric coefficients.
    """
    if r < 2:
        raise ValueError("r must be at least 2")
    m = r if m is None else m
    if not 1 <= m <= r:
        raise ValueError("need 1 <= m <= r")
    q = ["th"] + [f"q{i}" for i in range(2, r + 1)]
    qd = [f"qd{i}" for i in range(1, r + 1)]
    reg = VariableRegistry.build(q + qd, angles=["th"], split=r)
    while True:
        A = [[Fraction(rng.randint(-2, 2)) if j < i else Fraction(rng.randint(1, 3)) if j == i else Fraction(0)
              for j in range(r)] for i in range(r)]
        Mv = [[sum(A[i][k] * A[j][k] for k in range(r)) for j in range(r)] for i in range(r)]
        try:
            cols = [rational_solve(Mv, [1 if i == j else 0 for i in range(r)]) for j in range(r)]
            break
        except ZeroDivisionError:  # pragma: no cover - A has a positive diagonal
            continue
    M = [[TrigPoly.const(reg, Mv[i][j]) for j in range(r)] for i in range(r)]
    M_inv = [[TrigPoly.const(reg, cols[j][i]) for j in range(r)] for i in range(r)]
    c, s = "cos(th)", "sin(th)"
    rot = [[c, f"-{s}"], [s, c]]
    Q_txt = [["0"] * m for _ in range(r)]
    for i in range(r):
        for j in range(m):
            if i < 2 and j < 2:
                Q_txt[i][j] = rot[i][j]
            elif i == j:
                Q_txt[i][j] = str(rng.randint(1, 3))
    N = []
    for _ in range(r):
        terms = []
        for a in range(r):
            for b in range(a, r):
                k = rng.randint(-2, 2)
                if k:
                    trig = rng.choice(["", f"*{c}", f"*{s}"])
                    terms.append(f"({k})*{qd[a]}*{qd[b]}{trig}")
        terms.append(f"({rng.randint(-2, 2)})*{s}")
        N.append(parse_expr(" + ".join(terms), reg))
    return MechanicalSystemSpec(reg, M, M_inv, N, parse_matrix(Q_txt, reg))
