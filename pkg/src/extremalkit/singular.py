"""Span-condition checkers for singular extremals.

Every verdict is pointwise: a chain of Lie-bracket conditions is tested at a
finite set of states (sampled extremal nodes or user points) and a conclusion
is asserted only when every condition holds at every point.  Such verdicts are
labelled ``pointwise-verified``; anything else is ``inconclusive``.

Channels are 0-based in the API and 1-based in the conclusion texts.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .lie import DEFAULT_RANK_TOL, point_is_exact, point_values, span_membership, span_rank
from .linalg import is_exact, rational_det, rational_solve
from .mech import AffineSystem, BuildError, alpha_decomposition
from .points import default_seed, random_rational_point

VERIFIED = "pointwise-verified"
INCONCLUSIVE = "inconclusive"


class ChainError(ValueError):
    """Malformed index sets (nesting, disjointness, range)."""


class SingularSystemError(ValueError):
    """The singular-control linear system cannot be solved."""


class PreconditionError(ValueError):
    pass


def _fmt(ids) -> str:
    return "{" + ", ".join(str(i + 1) for i in sorted(ids)) + "}"


def _to_json(v):
    if isinstance(v, Fraction):
        return str(v) if v.denominator != 1 else int(v)
    if isinstance(v, (tuple, list)):
        return [_to_json(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v)
    return v


# ---------------------------------------------------------------------------
# evaluation points
# ---------------------------------------------------------------------------


def sample_points(ext, max_points: int = 200) -> list:
    """Event-free nodes of an extremal, evenly thinned to at most ``max_points``."""
    skip = ext.event_nodes()
    idx = [i for i in range(len(ext.t)) if i not in skip]
    if len(idx) > max_points:
        pick = np.linspace(0, len(idx) - 1, max_points).round().astype(int)
        idx = [idx[k] for k in sorted(set(pick.tolist()))]
    return [list(map(float, ext.x[i])) for i in idx]


def random_points(sys: AffineSystem, count: int, seed: int | None = None) -> list:
    """Rational witness points; the exact span path is used on them."""
    rng = random.Random(default_seed() if seed is None else seed)
    return [random_rational_point(sys.registry, rng) for _ in range(count)]


# ---------------------------------------------------------------------------
# Theorem 1 chains
# ---------------------------------------------------------------------------


@dataclass
class TheoremOneQuery:
    """Index sets of a span-condition chain.

    ``J[l]`` for l = 0..s with ``J[0] = K1 | K2``; ``J_prime[l - 1]`` is
    J'_l for l = 1..s-1 (defaults to J_l).  Nesting:
    ``J_{l+1} <= J'_l <= J_l``.
    """

    K1: frozenset
    K2: frozenset
    J: list
    J_prime: list | None = None
    points: list = field(default_factory=list)

    def __post_init__(self):
        self.K1 = frozenset(self.K1)
        self.K2 = frozenset(self.K2)
        self.J = [frozenset(j) for j in self.J]
        if self.J_prime is None:
            self.J_prime = [self.J[l] for l in range(1, len(self.J) - 1)] if len(self.J) > 1 else []
        else:
            self.J_prime = [frozenset(j) for j in self.J_prime]

    @property
    def s(self) -> int:
        return len(self.J) - 1

    def J_tilde(self, w: int) -> frozenset:
        return self.J[w] - self.K2

    def validate(self, m: int):
        if self.K1 & self.K2:
            raise ChainError(f"K1 and K2 must be disjoint, both contain {_fmt(self.K1 & self.K2)}")
        for name, ids in (("K1", self.K1), ("K2", self.K2)):
            bad = [i for i in ids if not 0 <= i < m]
            if bad:
                raise ChainError(f"{name} has channels outside 1..{m}: {[b + 1 for b in bad]}")
        if len(self.J) < 2:
            raise ChainError("chain needs J_0 and at least J_1 (s >= 1)")
        for l, Jl in enumerate(self.J):
            if not Jl:
                raise ChainError(f"J_{l} is empty")
            bad = [i for i in Jl if not 0 <= i < m]
            if bad:
                raise ChainError(f"J_{l} has channels outside 1..{m}: {[b + 1 for b in bad]}")
        if self.J[0] != self.K1 | self.K2:
            raise ChainError(f"J_0 = {_fmt(self.J[0])} must equal K1 | K2 = {_fmt(self.K1 | self.K2)}")
        if len(self.J_prime) != self.s - 1:
            raise ChainError(f"expected {self.s - 1} sets J'_l (l = 1..s-1), got {len(self.J_prime)}")
        for l in range(1, self.s + 1):
            outer_set = self.J[0] if l == 1 else self.J_prime[l - 2]
            if not self.J[l] <= outer_set:
                outer = "J_0" if l == 1 else f"J'_{l - 1}"
                raise ChainError(f"nesting violated: J_{l} = {_fmt(self.J[l])} is not inside {outer}")
            if l <= self.s - 1:
                Jp = self.J_prime[l - 1]
                if not Jp:
                    raise ChainError(f"J'_{l} is empty")
                if not Jp <= self.J[l]:
                    raise ChainError(f"nesting violated: J'_{l} = {_fmt(Jp)} is not inside J_{l}")

    def to_dict(self) -> dict:
        return {
            "K1": sorted(i + 1 for i in self.K1),
            "K2": sorted(i + 1 for i in self.K2),
            "J": [sorted(i + 1 for i in j) for j in self.J],
            "J_prime": [sorted(i + 1 for i in j) for j in self.J_prime],
        }


@dataclass
class MembershipEvidence:
    condition: int
    l: int
    j: int
    k: int
    member: bool
    residual: float
    rule: str = "span"

    def to_dict(self) -> dict:
        return {"condition": self.condition, "l": self.l, "j": self.j + 1, "k": self.k + 1,
                "member": self.member, "residual": self.residual, "rule": self.rule}


@dataclass
class PointEvidence:
    point: list
    exact: bool
    memberships: list
    rank: int
    singular_values: list

    @property
    def conditions_hold(self) -> bool:
        return all(e.member for e in self.memberships)

    def to_dict(self) -> dict:
        return {
            "point": _to_json(self.point),
            "exact": self.exact,
            "rank": self.rank,
            "memberships": [e.to_dict() for e in self.memberships],
        }


def conclusion_text(K1, K2) -> str:
    K1, K2 = frozenset(K1), frozenset(K2)
    a = f"(a) some u_i, i in {_fmt(K1)}, is not singular"
    b = f"(b) the switching functions phi_i, i in {_fmt(K2)}, have no common accumulation point of zeroes"
    if K1 and K2:
        return f"either {a}, or {b}"
    if K2:
        return b[4:]
    return f"the extremal is not u_i-singular for all i in {_fmt(K1)}"


@dataclass
class TheoremOneVerdict:
    query: TheoremOneQuery
    points: list
    conditions_hold: bool
    rank_ok: bool
    status: str
    conclusion: str | None
    n: int
    notes: list = field(default_factory=list)

    @property
    def asserted(self) -> bool:
        return self.status == VERIFIED

    @property
    def min_rank(self) -> int:
        return min((p.rank for p in self.points), default=0)

    def failures(self) -> list:
        out = []
        for p in self.points:
            for e in p.memberships:
                if not e.member:
                    out.append(f"condition {e.condition}: [g_{e.k + 1}, ad_f^{e.l - 1} g_{e.j + 1}] "
                               f"not in span at {p.point} (residual {e.residual:.3g})")
            if p.rank < self.n:
                out.append(f"condition 3: rank {p.rank} < {self.n} at {p.point}")
        return out

    def to_dict(self, evidence: bool = True) -> dict:
        out = {
            "query": self.query.to_dict(),
            "status": self.status,
            "conditions_hold": self.conditions_hold,
            "rank_condition": self.rank_ok,
            "min_rank": self.min_rank,
            "n": self.n,
            "points_tested": len(self.points),
            "conclusion": self.conclusion,
            "notes": self.notes,
        }
        if evidence:
            out["evidence"] = [p.to_dict() for p in self.points]
        return out


def _bracket_zero(sys, k, s, j) -> bool:
    return sys.bracket_with_control(k, s, j).is_zero()


def _chain_memberships(sys, query, point, tol, exact, debug, notes) -> list:
    """Conditions 1 and 2 at a single point."""
    out = []
    K2_empty = not query.K2
    for l in range(1, query.s + 1):
        checks = [(1, query.J[l], lambda w: query.J[w])]
        if l <= query.s - 1 and not K2_empty:
            checks.append((2, query.J_prime[l - 1], query.J_tilde))
        for cond, targets, base in checks:
            fields = [sys.ad(w, v) for w in range(l) for v in sorted(base(w))]
            for j in sorted(targets):
                for k in range(sys.m):
                    if l == 1 and sys.mechanical:
                        if debug and not _bracket_zero(sys, k, 0, j):
                            raise AssertionError(f"[g_{k + 1}, g_{j + 1}] is not zero on a mechanical build")
                        out.append(MembershipEvidence(cond, l, j, k, True, 0.0, "commuting controls"))
                        continue
                    if _bracket_zero(sys, k, l - 1, j):
                        out.append(MembershipEvidence(cond, l, j, k, True, 0.0, "zero bracket"))
                        continue
                    rep = span_membership(sys.bracket_with_control(k, l - 1, j), fields, point, tol, exact)
                    out.append(MembershipEvidence(cond, l, j, k, bool(rep.member), float(rep.residual)))
    return out


def theorem1_check(sys: AffineSystem, query: TheoremOneQuery, points: Sequence | None = None,
                   tol: float = DEFAULT_RANK_TOL, exact: bool | None = None,
                   debug: bool = False) -> TheoremOneVerdict:
    """Test a span-condition chain at every point.

    Condition 1 at level l asks ``[g_k, ad_f^{l-1} g_j]`` to lie in the span of
    ``ad_f^w g_v`` (w < l, v in J_w) for j in J_l and every k; condition 2 is
    the same test for j in J'_l with K2 removed from the J_w; condition 3 is
    full rank of ``ad_f^w g_v`` (w <= s, v in J_w).

    On mechanical builds the level-1 memberships hold because the control
    fields commute; ``debug=True`` confirms that symbolically.
    """
    query.validate(sys.m)
    points = list(points if points is not None else query.points)
    if not points:
        raise ValueError("no evaluation points")
    notes = []
    if not query.K2:
        notes.append("K2 is empty: condition 2 coincides with condition 1 and is not repeated")
    if sys.mechanical:
        notes.append("level-1 memberships hold by commutativity of the control fields")
    full_fields = [sys.ad(w, v) for w in range(query.s + 1) for v in sorted(query.J[w])]
    evidence = []
    for pt in points:
        mem = _chain_memberships(sys, query, pt, tol, exact, debug, notes)
        rep = span_rank(full_fields, pt, tol, exact)
        evidence.append(PointEvidence(list(point_values(sys.registry, pt)), rep.exact, mem, rep.rank,
                                      rep.singular_values))
    cond_ok = all(p.conditions_hold for p in evidence)
    rank_ok = all(p.rank == sys.n for p in evidence)
    verified = cond_ok and rank_ok
    return TheoremOneVerdict(query, evidence, cond_ok, rank_ok, VERIFIED if verified else INCONCLUSIVE,
                             conclusion_text(query.K1, query.K2) if verified else None, sys.n, notes)


def span_dimension(sys: AffineSystem, J0, J1, point, tol: float = DEFAULT_RANK_TOL) -> tuple[int, int]:
    """Rank of ``{g_v, v in J0} + {[f, g_v], v in J1}`` and the count |J0| + |J1|."""
    fields = [sys.ad(0, v) for v in sorted(J0)] + [sys.ad(1, v) for v in sorted(J1)]
    return span_rank(fields, point, tol).rank, len(J0) + len(J1)


# ---------------------------------------------------------------------------
# nonvanishing of the remaining switching functions
# ---------------------------------------------------------------------------


@dataclass
class SpanVerdict:
    kind: str
    status: str
    conclusion: str | None
    ranks: list
    n: int
    points_tested: int
    chain: TheoremOneVerdict | None = None
    notes: list = field(default_factory=list)
    evidence: list = field(default_factory=list)

    @property
    def asserted(self) -> bool:
        return self.status == VERIFIED

    def to_dict(self, evidence: bool = True) -> dict:
        out = {
            "kind": self.kind,
            "status": self.status,
            "conclusion": self.conclusion,
            "min_rank": min(self.ranks, default=0),
            "n": self.n,
            "points_tested": self.points_tested,
            "notes": self.notes,
        }
        if self.chain is not None:
            out["chain"] = self.chain.to_dict(evidence=evidence)
        if evidence:
            out["evidence"] = [e.to_dict() for e in self.evidence]
        return out


def prop1_check(sys: AffineSystem, K1, K2, K, chain: TheoremOneQuery, points: Sequence,
                tol: float = DEFAULT_RANK_TOL, from_extremal: bool = False) -> SpanVerdict:
    """No common zero of ``phi_k, k in K`` under a valid chain.

    The span of ``g_u`` (u in K1 | K2 | K) together with ``ad_f^w g_v``
    (w = 1..s, v in J_w) must be the whole space.  With K2 empty the
    conclusion covers the whole extremal, which requires ``points`` to be a
    sampling of that extremal (``from_extremal=True``); otherwise it is
    stated for the tested states only.
    """
    K1, K2, K = frozenset(K1), frozenset(K2), frozenset(K)
    if not K:
        raise ChainError("K must be nonempty")
    if K & (K1 | K2):
        raise ChainError(f"K = {_fmt(K)} overlaps K1 | K2 = {_fmt(K1 | K2)}")
    if chain.K1 != K1 or chain.K2 != K2:
        raise ChainError("chain was built for different K1, K2")
    chain.validate(sys.m)
    bad = [i for i in K if not 0 <= i < sys.m]
    if bad:
        raise ChainError(f"K has channels outside 1..{sys.m}")
    points = list(points)
    if not points:
        raise ValueError("no evaluation points")
    cv = theorem1_check(sys, chain, points, tol)
    fields = [sys.ad(0, u) for u in sorted(K1 | K2 | K)]
    fields += [sys.ad(w, v) for w in range(1, chain.s + 1) for v in sorted(chain.J[w])]
    reps = [span_rank(fields, pt, tol) for pt in points]
    ranks = [r.rank for r in reps]
    notes = []
    ok = cv.conditions_hold and all(r == sys.n for r in ranks)
    if not cv.conditions_hold:
        notes.append("chain conditions 1-2 fail at some point")
    if any(r < sys.n for r in ranks):
        notes.append(f"span rank {min(ranks)} < {sys.n}")
    conclusion = None
    if ok:
        phis = f"the switching functions phi_k, k in {_fmt(K)}"
        if K2:
            conclusion = (f"{phis} have no common zero at a common accumulation point of zeroes of "
                          f"phi_i, i in {_fmt(K2)}")
        elif from_extremal:
            conclusion = f"{phis} have no common zero along the whole extremal"
        else:
            conclusion = f"{phis} have no common zero at the tested states"
        if K1:
            conclusion += f" (extremal u_i-singular for i in {_fmt(K1)})"
    return SpanVerdict("prop1", VERIFIED if ok else INCONCLUSIVE, conclusion, ranks, sys.n, len(points),
                       cv, notes, reps)


def abnormal_span_check(sys: AffineSystem, k: int, points: Sequence, abnormal: bool,
                        tol: float = DEFAULT_RANK_TOL) -> SpanVerdict:
    """Constant nonsingular control on an abnormal extremal.

    Tests ``span{f, g_i, [f, g_j]; j != k} = R^n``.  Only meaningful when the
    extremal was flagged abnormal; otherwise no conclusion is drawn.
    """
    if not 0 <= k < sys.m:
        raise ChainError(f"channel {k + 1} outside 1..{sys.m}")
    points = list(points)
    fields = [sys.drift] + [sys.ad(0, i) for i in range(sys.m)]
    fields += [sys.ad(1, j) for j in range(sys.m) if j != k]
    reps = [span_rank(fields, pt, tol) for pt in points]
    ranks = [r.rank for r in reps]
    notes = []
    ok = abnormal and bool(points) and all(r == sys.n for r in ranks)
    if not abnormal:
        notes.append("extremal is not abnormal: test not applicable")
    conclusion = f"u_{k + 1} is constant along the extremal" if ok else None
    return SpanVerdict("abnormal-span", VERIFIED if ok else INCONCLUSIVE, conclusion, ranks, sys.n,
                       len(points), None, notes, reps)


# ---------------------------------------------------------------------------
# singular controls
# ---------------------------------------------------------------------------


@dataclass
class SingularControlSolution:
    k: int
    channels: list
    u: list
    matrix: list
    determinant: object
    rhs: list
    residual: float
    exact: bool
    feasible: list
    phi_k: object

    @property
    def all_feasible(self) -> bool:
        return all(self.feasible)

    def to_dict(self) -> dict:
        return {
            "k": self.k + 1,
            "channels": [c + 1 for c in self.channels],
            "u": _to_json(self.u),
            "matrix": _to_json(self.matrix),
            "determinant": _to_json(self.determinant),
            "rhs": _to_json(self.rhs),
            "residual": self.residual,
            "exact": self.exact,
            "feasible": self.feasible,
            "phi_k": _to_json(self.phi_k),
        }


def singular_control_solve(sys: AffineSystem, x, lam, k: int, u_k, alpha=None,
                           tol: float = 1e-12) -> SingularControlSolution:
    """Singular controls ``u_j, j != k`` keeping the second derivatives of
    ``phi_i, i != k`` at zero while ``phi_k`` does not vanish.

    Solves ``sum_{j != k} alpha_ij^k u_j = -(lam . ad_f^2 g_i + alpha_ik^k phi_k u_k) / phi_k``.
    Exact on rational input.
    """
    if not sys.fully_actuated:
        raise BuildError("singular control solve needs a fully actuated mechanical system")
    if not 0 <= k < sys.m:
        raise ValueError(f"channel {k + 1} outside 1..{sys.m}")
    alpha = alpha or alpha_decomposition(sys)
    pt = point_values(sys.registry, x)
    lam = list(lam)
    exact = point_is_exact(sys.registry, pt) and all(is_exact(v) for v in lam) and is_exact(u_k)
    if not exact:
        lam = [float(v) for v in lam]
        u_k = float(u_k)
    dot = lambda a, b: sum((p * q for p, q in zip(a, b)), 0)  # noqa: E731
    conv = (lambda v: v) if exact else float
    phi_k = dot(lam, sys.ad(0, k).evaluate(pt))
    if not exact:
        phi_k = float(phi_k)
    if phi_k == 0 or (not exact and abs(phi_k) <= tol):
        raise PreconditionError(f"phi_{k + 1} vanishes at this state: the singular-control formula needs "
                                "a nonvanishing switching function")
    others = [i for i in range(sys.m) if i != k]
    A = [[conv(alpha[(i, j, k)].evaluate_at(pt)) for j in others] for i in others]
    rhs = []
    for i in others:
        num = conv(dot(lam, sys.ad(2, i).evaluate(pt))) + conv(alpha[(i, k, k)].evaluate_at(pt)) * phi_k * u_k
        rhs.append(-num / phi_k)
    if exact:
        det = rational_det(A)
        if det == 0:
            raise SingularSystemError("determinant of the alpha matrix is zero: singular controls undetermined")
        u = rational_solve(A, rhs)
        resid = [sum(a * b for a, b in zip(row, u)) - r for row, r in zip(A, rhs)]
        residual = 0.0 if all(v == 0 for v in resid) else float(max(abs(v) for v in resid))
    else:
        An = np.array(A, dtype=float)
        det = float(np.linalg.det(An)) if An.size else 1.0
        scale = float(np.linalg.norm(An, 2)) ** len(others) if An.size else 1.0
        if abs(det) <= tol * max(scale, 1.0):
            raise SingularSystemError("determinant of the alpha matrix is zero: singular controls undetermined")
        b = np.array(rhs, dtype=float)
        sol = np.linalg.solve(An, b)
        u = [float(v) for v in sol]
        denom = max(float(np.linalg.norm(b)), float(np.linalg.norm(An, 2)) * float(np.linalg.norm(sol)), 1e-300)
        residual = float(np.linalg.norm(An @ sol - b) / denom) if denom > 0 else 0.0
    feasible = [bool(sys.bounds[j][0] <= u[idx] <= sys.bounds[j][1]) for idx, j in enumerate(others)]
    return SingularControlSolution(k, others, u, A, det, rhs, residual, exact, feasible, phi_k)


def full_control(sol: SingularControlSolution, m: int, u_k) -> list:
    u = [0] * m
    u[sol.k] = u_k
    for j, v in zip(sol.channels, sol.u):
        u[j] = v
    return u


# ---------------------------------------------------------------------------
# concatenations
# ---------------------------------------------------------------------------


@dataclass
class ConcatVerdict:
    S1: frozenset
    S2: frozenset
    path: str
    status: str
    conclusion: str | None
    rank: int | None
    n: int
    chains: list
    notes: list = field(default_factory=list)
    evidence: list = field(default_factory=list)

    @property
    def asserted(self) -> bool:
        return self.status == VERIFIED

    def to_dict(self) -> dict:
        return {
            "S1": sorted(i + 1 for i in self.S1),
            "S2": sorted(i + 1 for i in self.S2),
            "path": self.path,
            "status": self.status,
            "conclusion": self.conclusion,
            "rank": self.rank,
            "n": self.n,
            "chains": [[sorted(i + 1 for i in J) for J in ch] for ch in self.chains],
            "notes": self.notes,
            "evidence": self.evidence,
        }


def concat_check(sys: AffineSystem, S1, S2, chains: Sequence | None = None, junction=None,
                 tol: float = DEFAULT_RANK_TOL, force_general: bool = False) -> ConcatVerdict:
    """Can a u_i-singular (i in S1) arc be followed by a u_i-singular (i in S2) arc?

    Fully actuated mechanical systems with ``S1 | S2`` covering every channel
    take the fast path with chains ``J_0 = J_1 = S_a``.  Otherwise each side's
    chain (``chains[a] = [J_0, ..., J_s]`` with ``J_0 = S_a``) is tested for
    condition 1 at the junction state and the union span must be full there.
    """
    S1, S2 = frozenset(S1), frozenset(S2)
    if not S1 or not S2:
        raise ChainError("S1 and S2 must be nonempty")
    for S in (S1, S2):
        if any(not 0 <= i < sys.m for i in S):
            raise ChainError(f"channels outside 1..{sys.m}")
    conclusion = "the concatenation is not an extremal, hence not optimal"
    if chains is None:
        chains = [[S1, S1], [S2, S2]]
    chains = [[frozenset(J) for J in ch] for ch in chains]
    for a, (ch, S) in enumerate(zip(chains, (S1, S2)), start=1):
        if not ch or ch[0] != S:
            raise ChainError(f"chain {a} must start with J_0 = S_{a}")
        for l in range(1, len(ch)):
            if not ch[l] or not ch[l] <= ch[l - 1]:
                raise ChainError(f"chain {a}: J_{l} must be a nonempty subset of J_{l - 1}")
    if sys.fully_actuated and S1 | S2 == frozenset(range(sys.m)) and not force_general:
        return ConcatVerdict(S1, S2, "fast", VERIFIED, conclusion, sys.n, sys.n, chains,
                             ["S1 | S2 covers every channel of a fully actuated mechanical system"])
    if junction is None:
        raise ValueError("a junction state is required for the span test")
    notes, evidence = [], []
    cond_ok = True
    for a, ch in enumerate(chains, start=1):
        for l in range(1, len(ch)):
            fields = [sys.ad(w, v) for w in range(l) for v in sorted(ch[w])]
            for j in sorted(ch[l]):
                for k in range(sys.m):
                    if (l == 1 and sys.mechanical) or sys.bracket_with_control(k, l - 1, j).is_zero():
                        continue
                    rep = span_membership(sys.bracket_with_control(k, l - 1, j), fields, junction, tol)
                    evidence.append({"side": a, "l": l, "j": j + 1, "k": k + 1,
                                     "member": bool(rep.member), "residual": rep.residual})
                    if not rep.member:
                        cond_ok = False
    if not cond_ok:
        notes.append("condition 1 fails on one side")
    s = max(len(ch) for ch in chains) - 1
    fields = []
    for w in range(s + 1):
        union = set()
        for ch in chains:
            if w < len(ch):
                union |= ch[w]
        fields += [sys.ad(w, v) for v in sorted(union)]
    rep = span_rank(fields, junction, tol)
    if rep.rank < sys.n:
        notes.append(f"junction span rank {rep.rank} < {sys.n}")
    ok = cond_ok and rep.rank == sys.n
    return ConcatVerdict(S1, S2, "junction", VERIFIED if ok else INCONCLUSIVE, conclusion if ok else None,
                         rep.rank, sys.n, chains, notes, evidence)
