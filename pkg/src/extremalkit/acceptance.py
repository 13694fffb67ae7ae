"""Acceptance criteria as runnable checks.

Each ``criterion_N`` returns a :class:`CriterionResult`; ``run_all`` runs them
in order.  Tolerances and sizes are the contractual ones.
"""
from __future__ import annotations

import random
import tempfile
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .lie import degree_class
from .mech import (
    AffineSystem,
    build_affine,
    check_commutativity,
    random_mechanical_spec,
    structural_degree_audit,
)
from .pmp import IntegratorOptions, integrate_extremal, switching_derivatives
from .points import default_seed, rational_circle_point, random_float_point, random_rational
from .singular import (
    VERIFIED,
    SingularSystemError,
    TheoremOneQuery,
    concat_check,
    full_control,
    random_points,
    sample_points,
    singular_control_solve,
    theorem1_check,
)
from .uuv import ROTATION, PureMotionSpec, UUVParams, build_uuv, pure_motion_extremal

# high-energy bang-bang scenario: truncation error dominates rounding at h = 1e-3
BANGBANG_X0 = (0.0, 0.0, 0.3, 4.0, -3.2, 6.4)
BANGBANG_LAM0 = (0.3, -0.7, 0.5, 0.9, -0.6, 0.4)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0
    metrics: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.number}: {self.title} ({self.detail}; {self.seconds:.2f}s)"

    def to_dict(self) -> dict:
        return {"criterion": self.number, "title": self.title, "passed": self.passed,
                "detail": self.detail, "metrics": self.metrics}


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---------------------------------------------------------------------------
# numerical bracket oracle
# ---------------------------------------------------------------------------


def fd_jacobian(F, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian of ``F: R^n -> R^n``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(F(x + e)) - np.asarray(F(x - e))) / (2 * h))
    return np.array(cols).T


def fd_bracket(X, Y, h: float = 1e-5):
    """``[X, Y] = DY X - DX Y`` with both Jacobians by central differences."""
    def Z(x):
        return fd_jacobian(Y, x, h) @ np.asarray(X(x)) - fd_jacobian(X, x, h) @ np.asarray(Y(x))
    return Z


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------


@_timed
def criterion_1(seed: int | None = None) -> CriterionResult:
    """Control fields commute for the vehicle and random mechanical builds."""
    t0 = time.perf_counter()
    rng = random.Random(default_seed() if seed is None else seed)
    systems = [build_uuv()]
    for _ in range(3):
        spec = random_mechanical_spec(rng, r=rng.choice([2, 3]))
        systems.append(build_affine(spec, [(-1, 1)] * spec.m))
    reports = [check_commutativity(s) for s in systems]
    elapsed = time.perf_counter() - t0
    ok = all(r.commuting for r in reports) and elapsed < 1.0
    return CriterionResult(1, "control fields commute", ok,
                           f"{sum(r.commuting for r in reports)}/{len(reports)} systems commute, "
                           f"build and check {elapsed:.3f}s", metrics={"seconds": elapsed})


@_timed
def criterion_2() -> CriterionResult:
    """Degree classes of the vehicle's drift and iterated brackets."""
    sys = build_uuv()
    fails = []
    fc = degree_class(sys.drift)
    if (fc.a, fc.b) != (1, 2):
        fails.append(f"drift class {fc}")
    for s in range(1, 4):
        for i in range(sys.m):
            dc = degree_class(sys.ad(s, i))
            if not (dc.a <= s - 1 and dc.b <= s):
                fails.append(f"ad^{s} g_{i + 1} in {dc}")
    for i in range(sys.m):
        for j in range(sys.m):
            dc = degree_class(sys.bracket_with_control(j, 1, i))
            if not (dc.a <= -1 and dc.b <= 0):
                fails.append(f"[g_{j + 1}, [f, g_{i + 1}]] in {dc}")
    audit = structural_degree_audit(sys, s_max=3)
    if not audit.passed:
        fails.append("structural audit")
    ok = not fails
    return CriterionResult(2, "degree chain of the vehicle", ok,
                           "drift in V^(1,2), ad^s g in V^(s-1,s), [g,[f,g]] in V^(-1,0)" if ok else "; ".join(fails))


@_timed
def criterion_3(seed: int | None = None, points: int = 100) -> CriterionResult:
    """Symbolic brackets against nested central differences."""
    sys = build_uuv()
    rng = random.Random(default_seed() if seed is None else seed)
    f = sys.drift.numeric
    worst = 0.0
    pairs = []
    for i in range(sys.m):
        g = sys.controls[i].numeric
        fg = fd_bracket(f, g)
        pairs.append((sys.ad(1, i), fg))
        pairs.append((sys.ad(2, i), fd_bracket(f, fg, h=1e-4)))
        for j in range(sys.m):
            pairs.append((sys.bracket_with_control(j, 1, i), fd_bracket(sys.controls[j].numeric, fg, h=1e-4)))
    for _ in range(points):
        x = np.array(random_float_point(sys.registry, rng))
        for sym, num in pairs:
            a = sym.numeric(x)
            b = num(x)
            err = float(np.max(np.abs(a - b)) / max(float(np.max(np.abs(a))), 1.0))
            worst = max(worst, err)
    ok = worst <= 1e-6
    return CriterionResult(3, "brackets match finite differences", ok,
                           f"max relative error {worst:.2e} over {points} points x {len(pairs)} brackets",
                           metrics={"max_rel_error": worst})


def bangbang_drift(step: float, T: float = 5.0) -> tuple:
    sys = build_uuv()
    ext = integrate_extremal(sys, BANGBANG_X0, BANGBANG_LAM0, T, IntegratorOptions(step=step))
    return float(np.max(np.abs(ext.H - ext.H[0]))), ext


@_timed
def criterion_4() -> CriterionResult:
    """Hamiltonian constancy and its fourth-order convergence."""
    e1, ext = bangbang_drift(1e-3)
    e2, _ = bangbang_drift(5e-4)
    switches = sum(1 for e in ext.events if e.kind == "sign-change")
    ratio = e1 / e2 if e2 > 0 else float("inf")
    ok = e1 <= 1e-6 and ratio >= 10.0 and switches > 0
    return CriterionResult(4, "Hamiltonian conserved on a bang-bang run", ok,
                           f"max|H-H0| = {e1:.2e} (h=1e-3), {e2:.2e} (h=5e-4), ratio {ratio:.1f}, "
                           f"{switches} switchings", metrics={"err_h": e1, "err_h2": e2, "ratio": ratio})


@_timed
def criterion_5() -> CriterionResult:
    """Pure rotation: two singular channels, one switching at the predicted time."""
    sys = build_uuv()
    spec = PureMotionSpec(ROTATION, seeds=(1.0, 0.5), T=2.0)
    opts = IntegratorOptions(step=1e-3)
    ext = pure_motion_extremal(sys, spec, opts)
    sing = float(np.max(np.abs(ext.phi[:, :2])))
    A = np.vstack([ext.t, np.ones_like(ext.t)]).T
    coef, *_ = np.linalg.lstsq(A, ext.phi[:, 2], rcond=None)
    affine = float(np.max(np.abs(A @ coef - ext.phi[:, 2])))
    times = ext.switch_times(2)
    others = [e for e in ext.events if e.kind == "sign-change" and e.channel != 2]
    t_ref = spec.closed_form_switch(sys.params)
    t_err = abs(times[0] - t_ref) if len(times) == 1 else float("inf")
    vel = float(np.max(np.abs(ext.x[:, 3:5])))
    ok = (sing <= 1e-10 and affine <= 1e-9 and len(times) == 1 and not others
          and t_err <= 2 * opts.resolution and vel <= 1e-12)
    return CriterionResult(5, "pure-rotation singular extremal", ok,
                           f"max|phi1,phi2| = {sing:.1e}, affine residual {affine:.1e}, "
                           f"{len(times)} switching(s), |t - 0.5| = {t_err:.1e} "
                           f"(2*resolution {2 * opts.resolution:.1e}), max|v1,v3| = {vel:.1e}",
                           metrics={"phi_singular": sing, "affine_residual": affine, "switch_error": t_err,
                                    "velocity": vel})


def rank_deficient_system() -> AffineSystem:
    """Two states, one control, with every bracket collinear to the control."""
    from .expr import VariableRegistry
    from .lie import VectorField

    reg = VariableRegistry.build(["a", "b"], split=2)
    f = VectorField.parse(reg, ["a + b", "a + b"])
    g = VectorField.parse(reg, ["1", "1"])
    return AffineSystem(f, [g], [(-1, 1)])


@_timed
def criterion_6(seed: int | None = None) -> CriterionResult:
    """No totally singular extremal on the vehicle; no over-claiming."""
    sys = build_uuv()
    I = frozenset(range(3))
    pts = random_points(sys, 50, seed)
    ext = integrate_extremal(sys, BANGBANG_X0, BANGBANG_LAM0, 5.0, IntegratorOptions(step=1e-3))
    pts += sample_points(ext, 60)
    v = theorem1_check(sys, TheoremOneQuery(I, (), [I, I]), pts)
    good = v.asserted and v.min_rank == 6 and len(v.points) >= 50
    bad_sys = rank_deficient_system()
    v_bad = theorem1_check(bad_sys, TheoremOneQuery({0}, (), [{0}, {0}]), random_points(bad_sys, 10, seed))
    v_part = theorem1_check(sys, TheoremOneQuery({0, 1}, (), [{0, 1}, {0, 1}]), pts[:20])
    honest = not v_bad.asserted and v_bad.conclusion is None and not v_part.asserted
    ok = good and honest
    return CriterionResult(6, "span chain rules out totally singular extremals", ok,
                           f"rank {v.min_rank} at {len(v.points)} points, status {v.status}; "
                           f"fabricated rank-deficient system: {v_bad.status}; partial chain: {v_part.status}")


def _random_lam(rng, n):
    return [random_rational(rng) for _ in range(n)]


@_timed
def criterion_7(seed: int | None = None, points: int = 50) -> CriterionResult:
    """Both forms of the second switching derivative agree exactly."""
    sys = build_uuv()
    rng = random.Random(default_seed() if seed is None else seed)
    mismatches = 0
    for _ in range(points):
        x = [random_rational(rng), random_rational(rng), rational_circle_point(rng)]
        x += [random_rational(rng) for _ in range(3)]
        lam = _random_lam(rng, 6)
        u = [random_rational(rng, bound=1) for _ in range(3)]
        st = switching_derivatives(sys, x, lam, u)
        if any(not isinstance(a, Fraction) or a != b for a, b in zip(st.phi_ddot, st.phi_ddot_alpha)):
            mismatches += 1
    ok = mismatches == 0
    return CriterionResult(7, "second switching derivative, bracket vs alpha form", ok,
                           f"{points - mismatches}/{points} exact agreements")


@_timed
def criterion_8(seed: int | None = None) -> CriterionResult:
    """Singular-control solve: zero on pure rotation, degenerate circle, closure."""
    sys = build_uuv()
    rng = random.Random(default_seed() if seed is None else seed)
    worst_u, worst_res = 0.0, 0.0
    # exact rotation states
    for _ in range(20):
        x = [random_rational(rng), random_rational(rng), rational_circle_point(rng), 0, 0, random_rational(rng)]
        lam = [0, 0, random_rational(rng), 0, 0, random_rational(rng) or Fraction(1)]
        sol = singular_control_solve(sys, x, lam, 2, Fraction(1 if lam[5] > 0 else -1))
        worst_u = max(worst_u, max(abs(float(v)) for v in sol.u))
        worst_res = max(worst_res, sol.residual)
    # float states along the integrated rotation
    ext = pure_motion_extremal(sys, PureMotionSpec(ROTATION, seeds=(1.0, 0.5), T=2.0))
    for k in range(0, len(ext.t), 97):
        if abs(ext.phi[k, 2]) < 1e-6:
            continue
        sol = singular_control_solve(sys, ext.x[k], ext.lam[k], 2, float(ext.u[k, 2]))
        worst_u = max(worst_u, max(abs(v) for v in sol.u))
        worst_res = max(worst_res, sol.residual)
    # circular vehicle
    circ = build_uuv(UUVParams(m1=3, m3=3, allow_circular=True))
    try:
        singular_control_solve(circ, [0, 0, (Fraction(1), Fraction(0)), 0, 0, 1], [0, 0, 1, 0, 0, 1], 2, 1)
        det_error = False
    except SingularSystemError:
        det_error = True
    # closure at generic states where phi_i = 0 for i != k
    worst_close = 0.0
    for _ in range(20):
        k = rng.randrange(3)
        x = np.array(random_float_point(sys.registry, rng))
        lam = np.array([rng.uniform(-1, 1) for _ in range(6)])
        lam[3 + np.array([i for i in range(3) if i != k])] = 0.0
        lam[3 + k] = rng.choice([-1, 1]) * rng.uniform(0.5, 1.5)
        u_k = float(sys.bounds[k][1]) if lam[3 + k] > 0 else float(sys.bounds[k][0])
        sol = singular_control_solve(sys, x, lam, k, u_k)
        u = full_control(sol, 3, u_k)
        st = switching_derivatives(sys, list(x), list(lam), u)
        worst_close = max(worst_close, max(abs(float(st.phi_ddot_alpha[i])) for i in range(3) if i != k))
        worst_close = max(worst_close, max(abs(float(st.phi_ddot[i])) for i in range(3) if i != k))
    ok = worst_u <= 1e-10 and worst_res <= 1e-10 and det_error and worst_close <= 1e-9
    return CriterionResult(8, "singular-control solve", ok,
                           f"max|u1,u2| = {worst_u:.1e}, residual {worst_res:.1e}, "
                           f"circular vehicle determinant error: {det_error}, closure {worst_close:.1e}")


@_timed
def criterion_9() -> CriterionResult:
    """Concatenations of 2-singular pieces are rejected."""
    sys = build_uuv()
    v_tt = concat_check(sys, {0, 2}, {1, 2})
    v_rt = concat_check(sys, {0, 1}, {1, 2})
    rest = [0.0, 0.0, 0.7, 0.0, 0.0, 0.0]
    v_gen = concat_check(sys, {0, 1}, {1, 2}, junction=rest, force_general=True)
    v_gen_exact = concat_check(sys, {0, 2}, {1, 2}, junction=[0, 0, (Fraction(3, 5), Fraction(4, 5)), 0, 0, 0],
                               force_general=True)
    v_bad = concat_check(sys, {0}, {0}, junction=rest)
    ok = (v_tt.status == VERIFIED and v_tt.path == "fast" and v_rt.status == VERIFIED and v_rt.path == "fast"
          and v_gen.status == VERIFIED and v_gen.rank == 6 and v_gen_exact.rank == 6
          and v_bad.status != VERIFIED)
    return CriterionResult(9, "concatenation checks", ok,
                           f"translation+translation {v_tt.status} ({v_tt.path}), rotation+translation "
                           f"{v_rt.status} ({v_rt.path}), junction span rank {v_gen.rank}, "
                           f"same-channel pair {v_bad.status}")


@_timed
def criterion_10() -> CriterionResult:
    """Repeated preset runs produce identical files."""
    from .cli import main

    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "run"
        digests = []
        for _ in range(2):
            code = main(["preset", "uuv-rotation", "--out", str(out), "--quiet"])
            if code != 0:
                return CriterionResult(10, "deterministic preset output", False, f"exit code {code}")
            digests.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        same = digests[0] == digests[1] and len(digests[0]) >= 2
    return CriterionResult(10, "deterministic preset output", same,
                           f"{len(digests[0])} files byte-identical" if same else "outputs differ")


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10)


def run_all() -> list:
    out = []
    for fn in CRITERIA:
        try:
            out.append(fn())
        except Exception as exc:  # report, do not hide
            n = int(fn.__name__.rsplit("_", 1)[1])
            out.append(CriterionResult(n, fn.__doc__.splitlines()[0] if fn.__doc__ else fn.__name__, False,
                                       f"raised {type(exc).__name__}: {exc}"))
    return out
