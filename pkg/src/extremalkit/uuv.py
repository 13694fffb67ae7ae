"""Planar underwater vehicle in an ideal fluid.

State ``(x, z, theta, v1, v3, Om)``: inertial position, heading, body-axis
velocities (body-1 = surge, body-3 = heave) and angular rate.  Controls are a
body-1 force, a body-3 force and a torque.  The kinetic energy is
``(I Om^2 + m1 v1^2 + m3 v3^2) / 2``; there are no other forces.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .expr import VariableRegistry, parse_expr
from .mech import AffineSystem, MechanicalSystemSpec, build_affine, parse_matrix
from .pmp import Extremal, IntegratorOptions, classify_extremal, integrate_extremal

STATE = ("x", "z", "theta", "v1", "v3", "Om")
VELOCITIES = ("xd", "zd", "thetad")

ROTATION = "rotation"
TRANSLATE_1 = "translation-body-1"
TRANSLATE_3 = "translation-body-3"
KINDS = (ROTATION, TRANSLATE_1, TRANSLATE_3)

# singular channel pair and the bang channel of each pure motion (0-based)
SINGULAR_CHANNELS = {ROTATION: (0, 1), TRANSLATE_1: (0, 2), TRANSLATE_3: (1, 2)}
BANG_CHANNEL = {ROTATION: 2, TRANSLATE_1: 1, TRANSLATE_3: 0}
# velocities that vanish identically along each motion (state indices)
ZERO_VELOCITIES = {ROTATION: (3, 4), TRANSLATE_1: (3, 5), TRANSLATE_3: (4, 5)}


@dataclass(frozen=True)
class UUVParams:
    m1: Fraction = Fraction(3)
    m3: Fraction = Fraction(5)
    I: Fraction = Fraction(2)
    bounds: tuple = ((Fraction(-1), Fraction(1)),) * 3
    # only for exercising the degenerate circular case
    allow_circular: bool = False

    def __post_init__(self):
        for name in ("m1", "m3", "I"):
            v = getattr(self, name)
            if not isinstance(v, float):
                object.__setattr__(self, name, Fraction(v))
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.m1 == self.m3 and not self.allow_circular:
            raise ValueError("m1 == m3: the planar vehicle must not be a circle")
        if len(self.bounds) != 3:
            raise ValueError("three control bounds required")
        for a, b in self.bounds:
            if not a < 0 < b:
                raise ValueError("bounds must satisfy alpha < 0 < beta")


def mechanical_spec(params: UUVParams) -> MechanicalSystemSpec:
    """Inertial-frame mechanical data for the planar vehicle.

    ``M = P^T diag(m1, m3, I) P`` with ``x2 = P q'`` the body velocities.  N is
    the Coriolis term ``M' q' - d/dq (q'^T M q' / 2)`` worked out by hand.
    """
    m1, m3, I = (_rat(params.m1), _rat(params.m3), _rat(params.I))
    L = _lit
    d = L(m3 - m1)
    reg = VariableRegistry.build(("x", "z", "theta") + VELOCITIES, angles=["theta"], split=3)
    c, s = "cos(theta)", "sin(theta)"
    M = parse_matrix([
        [f"{L(m1)}*{c}^2 + {L(m3)}*{s}^2", f"{d}*{c}*{s}", "0"],
        [f"{d}*{c}*{s}", f"{L(m1)}*{s}^2 + {L(m3)}*{c}^2", "0"],
        ["0", "0", L(I)],
    ], reg)
    M_inv = parse_matrix([
        [f"{L(1 / m1)}*{c}^2 + {L(1 / m3)}*{s}^2", f"{L(1 / m3 - 1 / m1)}*{c}*{s}", "0"],
        [f"{L(1 / m3 - 1 / m1)}*{c}*{s}", f"{L(1 / m1)}*{s}^2 + {L(1 / m3)}*{c}^2", "0"],
        ["0", "0", L(1 / I)],
    ], reg)
    P = parse_matrix([[c, f"-{s}", "0"], [s, c, "0"], ["0", "0", "1"]], reg)
    P_inv = parse_matrix([[c, s, "0"], [f"-{s}", c, "0"], ["0", "0", "1"]], reg)
    cc2 = f"(2*{c}^2 - 1)"
    N = [
        parse_expr(f"{d}*thetad*(2*{c}*{s}*xd + {cc2}*zd)", reg),
        parse_expr(f"{d}*thetad*({cc2}*xd - 2*{c}*{s}*zd)", reg),
        parse_expr(f"-{d}*({c}*{s}*xd^2 + {cc2}*xd*zd - {c}*{s}*zd^2)", reg),
    ]
    # controls act along body axes: Q = P^T
    Q = parse_matrix([[c, s, "0"], [f"-{s}", c, "0"], ["0", "0", "1"]], reg)
    return MechanicalSystemSpec(reg, M, M_inv, N, Q, P=P, P_inv=P_inv, state_names=("v1", "v3", "Om"))


def _lit(v: Fraction) -> str:
    return f"({v.numerator}/{v.denominator})"


def _rat(v):
    return v if isinstance(v, Fraction) else Fraction(v).limit_denominator(10**12)


def build_uuv(params: UUVParams | None = None) -> AffineSystem:
    params = params or UUVParams()
    sys = build_affine(mechanical_spec(params), params.bounds)
    sys.name = "uuv"
    sys.params = params
    return sys


def drift_reference(params: UUVParams) -> list:
    """Equations of motion written out directly (used as a cross-check)."""
    m1, m3, I = (_rat(params.m1), _rat(params.m3), _rat(params.I))
    return [
        "cos(theta)*v1 + sin(theta)*v3",
        "cos(theta)*v3 - sin(theta)*v1",
        "Om",
        f"-{_lit(m3 / m1)}*v3*Om",
        f"{_lit(m1 / m3)}*v1*Om",
        f"{_lit((m3 - m1) / I)}*v1*v3",
    ]


def kinetic_energy(params: UUVParams, x) -> float:
    x = np.asarray(x, dtype=float)
    return 0.5 * (float(params.I) * x[5] ** 2 + float(params.m1) * x[3] ** 2 + float(params.m3) * x[4] ** 2)


# ---------------------------------------------------------------------------
# Pure motions
# ---------------------------------------------------------------------------


@dataclass
class PureMotionSpec:
    """A rotation or a body-axis translation with its invariant adjoint seed.

    ``seeds = (mu, lam0)``: ``mu`` is the constant adjoint component that
    drives the nonsingular switching function, ``lam0`` that switching
    function's adjoint component at t = 0.

    * rotation: v1 = v3 = 0, lambda = (0, 0, mu, 0, 0, lam0); u1, u2 singular.
    * translation-body-1: v1 = Om = 0, lambda = (mu sin, mu cos, 0, 0, lam0, 0);
      u1, u3 singular, u2 bang (motion along the body-3 axis).
    * translation-body-3: v3 = Om = 0, lambda = (mu cos, -mu sin, 0, lam0, 0, 0);
      u2, u3 singular, u1 bang (motion along the body-1 axis).
    """

    kind: str
    pose: tuple = (0.0, 0.0, 0.0)
    velocity: float = 0.0
    seeds: tuple = (1.0, 0.5)
    T: float = 2.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown pure motion kind {self.kind!r}; expected one of {KINDS}")
        if self.seeds[0] == 0 and self.seeds[1] == 0:
            raise ValueError("adjoint seeds must not both be zero")
        if self.T <= 0:
            raise ValueError("horizon must be positive")

    def initial_state(self) -> np.ndarray:
        x = np.zeros(6)
        x[:3] = self.pose
        moving = {ROTATION: 5, TRANSLATE_1: 4, TRANSLATE_3: 3}[self.kind]
        x[moving] = self.velocity
        return x

    def initial_adjoint(self) -> np.ndarray:
        mu, lam0 = (float(v) for v in self.seeds)
        th = float(self.pose[2])
        c, s = np.cos(th), np.sin(th)
        lam = np.zeros(6)
        if self.kind == ROTATION:
            lam[2], lam[5] = mu, lam0
        elif self.kind == TRANSLATE_1:
            lam[0], lam[1], lam[4] = mu * s, mu * c, lam0
        else:
            lam[0], lam[1], lam[3] = mu * c, -mu * s, lam0
        return lam

    def closed_form_switch(self, params: UUVParams) -> float | None:
        """Time where the bang channel's switching function crosses zero."""
        mu, lam0 = (float(v) for v in self.seeds)
        if mu == 0:
            return None
        t = lam0 / mu
        return t if 0 < t < self.T else None


def pure_motion_extremal(sys: AffineSystem, spec: PureMotionSpec,
                         opts: IntegratorOptions | None = None) -> Extremal:
    """Integrate the pure motion from its invariant adjoint seed."""
    if getattr(sys, "name", "") != "uuv":
        raise ValueError("pure motions are defined for the planar vehicle only")
    opts = opts or IntegratorOptions()
    ext = integrate_extremal(sys, spec.initial_state(), spec.initial_adjoint(), spec.T, opts)
    ext.meta["pure_motion"] = spec.kind
    return ext


def abnormal_rotation_spec(params: UUVParams, mu: float = 1.0, lam0: float = 0.5,
                           T: float = 2.0) -> PureMotionSpec:
    """Rotation whose Hamiltonian vanishes: the initial rate cancels the torque term."""
    beta = float(params.bounds[2][1]) if lam0 > 0 else float(params.bounds[2][0])
    omega0 = -lam0 * beta / (float(params.I) * mu)
    return PureMotionSpec(ROTATION, velocity=omega0, seeds=(mu, lam0), T=T)


# ---------------------------------------------------------------------------
# Pure-motion structure checks
# ---------------------------------------------------------------------------

VEL_TOL = 1e-8


@dataclass
class PureMotionReport:
    applicable: bool
    kind: str | None = None
    switch_count: int = 0
    switch_times: list = field(default_factory=list)
    switch_states: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    message: str = ""

    @property
    def passed(self) -> bool:
        return self.applicable and all(self.checks.values())

    def to_dict(self) -> dict:
        return {
            "applicable": self.applicable,
            "kind": self.kind,
            "switch_count": self.switch_count,
            "switch_times": self.switch_times,
            "checks": self.checks,
            "passed": self.passed,
            "message": self.message,
        }


def verify_prop8(ext: Extremal, sys: AffineSystem, sg_tol: float | None = None,
                 window: int | None = None) -> PureMotionReport:
    """Check the switching structure of a 2-singular planar-vehicle extremal.

    The nonsingular channel switches at most once; a switching happens only
    where the motion's velocity set vanishes; the singular channels carry zero
    control; an abnormal extremal switches only at rest.
    """
    cls = classify_extremal(ext, sg_tol=sg_tol, window=window)
    singular = tuple(sorted(i for i, c in enumerate(cls.channels) if c.singular_everywhere))
    kind = next((k for k, pair in SINGULAR_CHANNELS.items() if pair == singular), None)
    if kind is None:
        return PureMotionReport(False, message="not applicable: extremal not 2-singular")
    bang = BANG_CHANNEL[kind]
    sg = cls.sg_tol
    times = [e.t for e in ext.events if e.channel == bang and e.kind == "sign-change"]
    states = [ext.state_at(t) for t in times]
    zero_idx = ZERO_VELOCITIES[kind]
    checks = {
        "at_most_one_switching": len(times) <= 1,
        "switching_in_zero_set": all(all(abs(x[i]) <= VEL_TOL for i in zero_idx) for x in states),
        "singular_controls_zero": all(
            float(np.max(np.abs(ext.u[:, i]))) <= sg for i in SINGULAR_CHANNELS[kind]),
    }
    if cls.abnormal:
        checks["abnormal_switch_at_rest"] = all(all(abs(x[i]) <= VEL_TOL for i in (3, 4, 5)) for x in states)
    msg = "" if all(checks.values()) else "failed: " + ", ".join(k for k, v in checks.items() if not v)
    return PureMotionReport(True, kind, len(times), times, [list(map(float, x)) for x in states], checks, msg)
