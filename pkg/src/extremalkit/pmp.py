"""Pontryagin extremals of the time-optimal problem.

The state and adjoint are integrated together,

    x'   =  f(x) + G(x) u
    lam' = -(Df(x) + sum_i u_i Dg_i(x))^T lam

with the bang-bang feedback ``u_i = beta_i`` if ``phi_i > sg_tol``,
``alpha_i`` if ``phi_i < -sg_tol`` and an explicit in-band policy otherwise,
where ``phi_i = lam . g_i(x)`` are the switching functions.

Integration is classical RK4 with a fixed step.  A sign change of a switching
function inside a step is localized by bisection to ``h * 2**-depth`` and the
step is split there, so every switching time is a node of the returned grid.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .expr import compile_polys
from .lie import jacobian, point_values

HOLD = "hold"
ZERO = "zero"

SIGN_CHANGE = "sign-change"
SINGULAR_ENTRY = "singular-entry"
SINGULAR_EXIT = "singular-exit"


class IntegrationError(RuntimeError):
    pass


class MaximumPrincipleViolation(IntegrationError):
    """The adjoint vanished (or started at zero)."""


class ChatteringError(IntegrationError):
    pass


@dataclass
class IntegratorOptions:
    """Knobs of :func:`integrate_extremal`.

    ``in_band`` is ``"hold"`` (keep the previous value), ``"zero"``, or a
    callable ``law(t, x, lam) -> u`` whose entries are used for channels
    inside the singular band.  ``u_init`` is the value "held" by channels
    that start inside the band (zeros by default).
    """

    step: float = 1e-3
    sw_tol: float = 1e-15
    sg_tol: float = 1e-9
    depth: int = 30
    in_band: object = HOLD
    chatter_limit: int = 4
    singular_window: int = 5
    u_init: Sequence[float] | None = None
    lam_floor: float = 1e-12

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not (self.sw_tol > 0 and self.sg_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.depth < 1:
            raise ValueError("bisection depth must be at least 1")
        if not (self.in_band in (HOLD, ZERO) or callable(self.in_band)):
            raise ValueError("in_band must be 'hold', 'zero' or a callable")

    @property
    def resolution(self) -> float:
        return self.step * 2.0 ** (-self.depth)

    def policy_name(self) -> str:
        return self.in_band if isinstance(self.in_band, str) else "singular-law"

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "sw_tol": self.sw_tol,
            "sg_tol": self.sg_tol,
            "depth": self.depth,
            "in_band": self.policy_name(),
            "chatter_limit": self.chatter_limit,
            "singular_window": self.singular_window,
        }


@dataclass
class Event:
    channel: int
    t: float
    kind: str

    def to_dict(self) -> dict:
        return {"channel": self.channel + 1, "t": self.t, "kind": self.kind}


@dataclass
class Extremal:
    t: np.ndarray
    x: np.ndarray
    lam: np.ndarray
    u: np.ndarray
    phi: np.ndarray
    H: np.ndarray
    events: list
    options: IntegratorOptions
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    def node_index(self, t: float) -> int:
        return int(np.argmin(np.abs(self.t - t)))

    def state_at(self, t: float) -> np.ndarray:
        return self.x[self.node_index(t)]

    def switch_times(self, channel: int) -> list:
        return [e.t for e in self.events if e.channel == channel and e.kind == SIGN_CHANGE]

    @property
    def abnormal_candidate(self) -> bool:
        return bool(np.all(np.abs(self.H) <= self.options.sg_tol))

    def event_nodes(self) -> set:
        times = {e.t for e in self.events}
        return {i for i, t in enumerate(self.t) if t in times}


# ---------------------------------------------------------------------------
# pointwise quantities
# ---------------------------------------------------------------------------


def _dot(lam, values):
    total = 0
    for a, b in zip(lam, values):
        total = total + a * b
    return total


def _exactify(v):
    return v if isinstance(v, (int, Fraction)) else float(v)


def hamiltonian(sys, x, lam, u):
    """``lam . f(x) + sum_i (lam . g_i(x)) u_i``; exact on rational input."""
    lam, u = list(lam), list(u)
    if len(lam) != sys.n or len(u) != sys.m:
        raise ValueError(f"dimension mismatch: n={sys.n}, m={sys.m}, got lam={len(lam)}, u={len(u)}")
    pt = point_values(sys.registry, x)
    lam = [_exactify(v) for v in lam]
    u = [_exactify(v) for v in u]
    H = _dot(lam, sys.drift.evaluate(pt))
    for g, ui in zip(sys.controls, u):
        if ui != 0:
            H = H + _dot(lam, g.evaluate(pt)) * ui
    return H


def bang_bang_control(phi, bounds, prev_u=None, sg_tol: float = 1e-9, policy=HOLD,
                      law_value=None) -> list:
    """Control selected by the switching-function signs.

    Channels with ``|phi_i| <= sg_tol`` take the in-band value: the previous
    control (``hold``), zero, or ``law_value[i]``.
    """
    m = len(bounds)
    prev = list(prev_u) if prev_u is not None else [0.0] * m
    out = []
    for i, (p, (a, b)) in enumerate(zip(phi, bounds)):
        if p > sg_tol:
            out.append(b)
        elif p < -sg_tol:
            out.append(a)
        elif policy == HOLD:
            out.append(prev[i])
        elif policy == ZERO:
            out.append(0.0)
        else:
            if law_value is None:
                raise ValueError("singular law value required for in-band channels")
            out.append(law_value[i])
    return out


@dataclass
class SwitchingState:
    phi: list
    phi_dot: list
    phi_ddot: list | None
    phi_ddot_alpha: list | None
    in_band: list
    commuting: bool

    def to_dict(self) -> dict:
        conv = lambda vs: None if vs is None else [str(v) if isinstance(v, Fraction) else v for v in vs]  # noqa: E731
        return {
            "phi": conv(self.phi),
            "phi_dot": conv(self.phi_dot),
            "phi_ddot": conv(self.phi_ddot),
            "phi_ddot_alpha": conv(self.phi_ddot_alpha),
            "in_band": self.in_band,
            "commuting": self.commuting,
        }


def _commuting(sys) -> bool:
    cached = getattr(sys, "_commuting", None)
    if cached is None:
        cached = all(sys.bracket_with_control(j, 0, i).is_zero()
                     for i in range(sys.m) for j in range(sys.m))
        sys._commuting = cached
    return cached


def _alpha_table(sys):
    """Cached alpha table, or None when G_hat has no usable inverse."""
    if not hasattr(sys, "_alpha_table"):
        from .mech import BuildError, alpha_decomposition

        try:
            sys._alpha_table = alpha_decomposition(sys)
        except BuildError:
            sys._alpha_table = None
    return sys._alpha_table


def switching_derivatives(sys, x, lam, u, sg_tol: float = 1e-9) -> SwitchingState:
    """Switching functions and their first two time derivatives at (x, lam, u).

    With commuting controls the first derivative is ``lam . [f, g_i]`` and the
    second ``lam . ad_f^2 g_i + sum_j lam . [g_j, [f, g_i]] u_j``.  Otherwise
    the first derivative carries ``sum_j lam . [g_j, g_i] u_j`` and the second
    is not defined (None).  Fully actuated mechanical systems also get the
    second derivative through the alpha coefficients.
    """
    pt = point_values(sys.registry, x)
    lam = [_exactify(v) for v in lam]
    u = [_exactify(v) for v in u]
    m = sys.m
    phi = [_dot(lam, sys.ad(0, i).evaluate(pt)) for i in range(m)]
    commuting = _commuting(sys)
    phi_dot = []
    for i in range(m):
        val = _dot(lam, sys.ad(1, i).evaluate(pt))
        if not commuting:
            for j in range(m):
                if u[j] != 0:
                    val = val + _dot(lam, sys.bracket_with_control(j, 0, i).evaluate(pt)) * u[j]
        phi_dot.append(val)
    phi_ddot = None
    phi_ddot_alpha = None
    if commuting:
        phi_ddot = []
        for i in range(m):
            val = _dot(lam, sys.ad(2, i).evaluate(pt))
            for j in range(m):
                if u[j] != 0:
                    val = val + _dot(lam, sys.bracket_with_control(j, 1, i).evaluate(pt)) * u[j]
            phi_ddot.append(val)
        table = _alpha_table(sys) if sys.fully_actuated else None
        if table is not None:
            phi_ddot_alpha = []
            for i in range(m):
                val = _dot(lam, sys.ad(2, i).evaluate(pt))
                for j in range(m):
                    if u[j] != 0:
                        inner = 0
                        for k in range(m):
                            a = table[(i, j, k)]
                            if a:
                                inner = inner + a.evaluate_at(pt) * phi[k]
                        val = val + inner * u[j]
                phi_ddot_alpha.append(val)
    in_band = [abs(float(p)) <= sg_tol for p in phi]
    return SwitchingState(phi, phi_dot, phi_ddot, phi_ddot_alpha, in_band, commuting)


# ---------------------------------------------------------------------------
# numerical flow
# ---------------------------------------------------------------------------


class _Flow:
    """Compiled float evaluation of f, G and their Jacobians."""

    def __init__(self, sys):
        n, m = sys.n, sys.m
        self.n, self.m = n, m
        self.f = compile_polys(list(sys.drift.components))
        g_entries = [c for g in sys.controls for c in g.components]
        self.G = compile_polys(g_entries)
        self.G_const = all(c.constant_value() is not None for c in g_entries)
        self.G_value = None
        if self.G_const:
            self.G_value = np.array([float(c.constant_value()) for c in g_entries]).reshape(m, n).T
        df = [e for row in jacobian(sys.drift) for e in row]
        self.Df = compile_polys(df)
        self.dg = []
        for g in sys.controls:
            entries = [e for row in jacobian(g) for e in row]
            if all(e.is_zero() for e in entries):
                self.dg.append(None)
            else:
                self.dg.append(compile_polys(entries))

    def G_at(self, x) -> np.ndarray:
        if self.G_const:
            return self.G_value
        return np.array(self.G(x)).reshape(self.m, self.n).T

    def phi(self, x, lam) -> np.ndarray:
        return self.G_at(x).T @ lam

    def rhs(self, x, lam, u):
        n = self.n
        fx = np.array(self.f(x))
        G = self.G_at(x)
        xdot = fx + G @ u
        A = np.array(self.Df(x)).reshape(n, n)
        for ui, dg in zip(u, self.dg):
            if dg is not None and ui != 0:
                A = A + ui * np.array(dg(x)).reshape(n, n)
        lamdot = -(A.T @ lam)
        return xdot, lamdot

    def hamiltonian(self, x, lam, u) -> float:
        return float(lam @ np.array(self.f(x)) + self.phi(x, lam) @ u)


def _flow(sys) -> _Flow:
    fl = getattr(sys, "_flow", None)
    if fl is None:
        fl = _Flow(sys)
        sys._flow = fl
    return fl


class _Integrator:
    def __init__(self, sys, opts: IntegratorOptions):
        self.sys = sys
        self.flow = _flow(sys)
        self.opts = opts
        self.bounds = np.array([[float(a), float(b)] for a, b in sys.bounds])

    def control(self, t, x, lam, base_u, band_mask):
        """Control for an RK stage: constant except law-driven band channels."""
        if not callable(self.opts.in_band) or not band_mask.any():
            return base_u
        law = np.asarray(self.opts.in_band(t, x, lam), dtype=float)
        u = base_u.copy()
        u[band_mask] = law[band_mask]
        return u

    def rk4(self, t, x, lam, base_u, band_mask, h):
        fl = self.flow
        u1 = self.control(t, x, lam, base_u, band_mask)
        k1x, k1l = fl.rhs(x, lam, u1)
        x2, l2 = x + 0.5 * h * k1x, lam + 0.5 * h * k1l
        u2 = self.control(t + 0.5 * h, x2, l2, base_u, band_mask)
        k2x, k2l = fl.rhs(x2, l2, u2)
        x3, l3 = x + 0.5 * h * k2x, lam + 0.5 * h * k2l
        u3 = self.control(t + 0.5 * h, x3, l3, base_u, band_mask)
        k3x, k3l = fl.rhs(x3, l3, u3)
        x4, l4 = x + h * k3x, lam + h * k3l
        u4 = self.control(t + h, x4, l4, base_u, band_mask)
        k4x, k4l = fl.rhs(x4, l4, u4)
        return (x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x),
                lam + (h / 6.0) * (k1l + 2 * k2l + 2 * k3l + k4l))

    def band_value(self, t, x, lam, prev):
        """In-band control values for every channel."""
        pol = self.opts.in_band
        if pol == HOLD:
            return prev.copy()
        if pol == ZERO:
            return np.zeros_like(prev)
        return np.asarray(pol(t, x, lam), dtype=float)

    def select(self, t, x, lam, phi, prev):
        """Control and band mask at a node."""
        sg = self.opts.sg_tol
        band = np.abs(phi) <= sg
        u = np.where(phi > sg, self.bounds[:, 1], self.bounds[:, 0])
        if band.any():
            u[band] = self.band_value(t, x, lam, prev)[band]
        return u, band

    def bisect(self, t, x, lam, base_u, band_mask, dt, predicate):
        """Largest tau in [0, dt] keeping ``predicate`` true, to the bisection depth."""
        x0, l0 = x, lam
        if not predicate(self.flow.phi(x0, l0)):
            return 0.0
        lo, hi = 0.0, dt
        for _ in range(self.opts.depth):
            mid = 0.5 * (lo + hi)
            xm, lm = self.rk4(t, x, lam, base_u, band_mask, mid)
            ph = self.flow.phi(xm, lm)
            if predicate(ph):
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


def integrate_extremal(sys, x0, lam0, T: float, opts: IntegratorOptions | None = None) -> Extremal:
    """Integrate an extremal on ``[0, T]`` under bang-bang feedback."""
    opts = opts or IntegratorOptions()
    if not T > 0:
        raise ValueError("horizon T must be positive")
    x = np.asarray([float(v) for v in x0], dtype=float)
    lam = np.asarray([float(v) for v in lam0], dtype=float)
    if x.shape != (sys.n,) or lam.shape != (sys.n,):
        raise ValueError(f"x0 and lam0 must have length {sys.n}")
    lam_norm0 = float(np.linalg.norm(lam))
    if lam_norm0 == 0.0:
        raise MaximumPrincipleViolation("adjoint must be nonzero")
    integ = _Integrator(sys, opts)
    fl = integ.flow
    sg = opts.sg_tol
    alpha, beta = integ.bounds[:, 0], integ.bounds[:, 1]
    prev = np.asarray(opts.u_init if opts.u_init is not None else np.zeros(sys.m), dtype=float)
    if prev.shape != (sys.m,):
        raise ValueError(f"u_init must have length {sys.m}")
    for i, v in enumerate(prev):
        if not alpha[i] <= v <= beta[i]:
            raise ValueError("u_init outside the control bounds")

    phi = fl.phi(x, lam)
    u, band = integ.select(0.0, x, lam, phi, prev)
    ts, xs, ls, us, phis, Hs = [0.0], [x], [lam], [u], [phi], [fl.hamiltonian(x, lam, u)]
    events: list = []

    def record(t, x, lam, u, phi):
        ts.append(t)
        xs.append(x)
        ls.append(lam)
        us.append(u)
        phis.append(phi)
        Hs.append(fl.hamiltonian(x, lam, u))

    def check(t, x, lam):
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(lam))):
            raise IntegrationError(f"non-finite state or adjoint at t = {t:.6g}")
        if np.linalg.norm(lam) < opts.lam_floor * lam_norm0:
            raise MaximumPrincipleViolation(f"adjoint vanished at t = {t:.6g}")

    h = opts.step
    nsteps = max(1, int(math.ceil(T / h - 1e-9)))
    t = 0.0
    for k in range(nsteps):
        t_target = T if k == nsteps - 1 else (k + 1) * h
        n_events = 0
        while True:
            dt = t_target - t
            x1, l1 = integ.rk4(t, x, lam, u, band, dt)
            check(t_target, x1, l1)
            phi1 = fl.phi(x1, l1)
            candidates = []
            for i in range(sys.m):
                bang_end = abs(phi1[i]) > sg
                if not band[i]:
                    sigma = 1.0 if u[i] == beta[i] else -1.0
                    if phi1[i] * sigma < 0:
                        pred = (lambda s, c=i: (lambda ph: ph[c] * s > 0))(sigma)
                        candidates.append((i, SIGN_CHANGE, pred))
                elif bang_end:
                    target = beta[i] if phi1[i] > 0 else alpha[i]
                    if opts.in_band == HOLD and u[i] in (alpha[i], beta[i]):
                        if target != u[i]:
                            sigma = 1.0 if u[i] == beta[i] else -1.0
                            pred = (lambda s, c=i: (lambda ph: ph[c] * s > 0))(sigma)
                            candidates.append((i, SIGN_CHANGE, pred))
                    elif opts.in_band != HOLD:
                        pred = (lambda c=i: (lambda ph: abs(ph[c]) <= sg))()
                        candidates.append((i, SINGULAR_EXIT, pred))
            if not candidates:
                x, lam, t = x1, l1, t_target
                u, band = _node_control(integ, t, x, lam, phi1, u, band, events)
                record(t, x, lam, u, phi1)
                break
            best = None
            for i, kind, pred in candidates:
                tau = integ.bisect(t, x, lam, u, band, dt, pred)
                if best is None or tau < best[0]:
                    best = (tau, i, kind)
            tau, i, kind = best
            if tau > 0.0:
                x, lam = integ.rk4(t, x, lam, u, band, tau)
                t = t + tau
                check(t, x, lam)
            phi_s = fl.phi(x, lam)
            u = u.copy()
            band = band.copy()
            u[i] = beta[i] if phi1[i] > 0 else alpha[i]
            band[i] = False
            events.append(Event(i, t, kind))
            if tau > 0.0:
                record(t, x, lam, u, phi_s)
            else:
                us[-1] = u
                Hs[-1] = fl.hamiltonian(x, lam, u)
            n_events += 1
            if n_events >= opts.chatter_limit:
                raise ChatteringError(
                    f"{n_events} switchings within one step near t = {t:.6g}: "
                    "possible singular arc or chattering")
            if t_target - t <= 0.0:
                break

    ext = Extremal(np.array(ts), np.array(xs), np.array(ls), np.array(us), np.array(phis),
                   np.array(Hs), events, opts,
                   meta={"in_band_policy": opts.policy_name(),
                         "note": "controls at isolated zeros of phi follow the in-band policy"})
    if opts.in_band == HOLD:
        ext.events = sorted(events + _band_events(ext), key=lambda e: (e.t, e.channel))
    return ext


def _node_control(integ, t, x, lam, phi, u, band, events):
    """Control applied from an accepted node onwards."""
    sg = integ.opts.sg_tol
    new_u, new_band = integ.select(t, x, lam, phi, u)
    for i in range(len(u)):
        if new_band[i] and not band[i] and integ.opts.in_band != HOLD:
            events.append(Event(i, t, SINGULAR_ENTRY))
        if not new_band[i] and band[i] and abs(phi[i]) > sg and integ.opts.in_band != HOLD:
            events.append(Event(i, t, SINGULAR_EXIT))
    return new_u, new_band


def _band_runs(phi_col: np.ndarray, sg_tol: float, window: int) -> list:
    """Index ranges [start, stop) of runs with |phi| <= sg_tol of length >= window."""
    inside = np.abs(phi_col) <= sg_tol
    runs, start = [], None
    for k, flag in enumerate(inside):
        if flag and start is None:
            start = k
        elif not flag and start is not None:
            if k - start >= window:
                runs.append((start, k))
            start = None
    if start is not None and len(inside) - start >= window:
        runs.append((start, len(inside)))
    return runs


def _band_events(ext: Extremal) -> list:
    out = []
    opts = ext.options
    for i in range(ext.m):
        for a, b in _band_runs(ext.phi[:, i], opts.sg_tol, opts.singular_window):
            out.append(Event(i, float(ext.t[a]), SINGULAR_ENTRY))
            if b < len(ext.t):
                out.append(Event(i, float(ext.t[b]), SINGULAR_EXIT))
    return out


def integrate_batch(sys, jobs: Sequence[tuple], opts: IntegratorOptions | None = None,
                    workers: int = 4) -> list:
    """Integrate ``(x0, lam0, T)`` jobs concurrently; results keep input order."""
    _flow(sys)  # compile once before fanning out
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(integrate_extremal, sys, x0, l0, T, opts) for x0, l0, T in jobs]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


@dataclass
class ChannelClass:
    channel: int
    switch_count: int
    switch_times: list
    singular_intervals: list
    singular_everywhere: bool

    @property
    def regular(self) -> bool:
        return not self.singular_intervals

    @property
    def label(self) -> str:
        if self.singular_everywhere:
            return "singular"
        return "regular" if self.regular else "partially-singular"

    def to_dict(self) -> dict:
        return {
            "channel": self.channel + 1,
            "label": self.label,
            "switch_count": self.switch_count,
            "switch_times": self.switch_times,
            "singular_intervals": self.singular_intervals,
        }


@dataclass
class Classification:
    channels: list
    abnormal: bool
    sg_tol: float
    window: int

    def singular_channels(self) -> list:
        return [c.channel for c in self.channels if c.singular_everywhere]

    def to_dict(self) -> dict:
        return {
            "channels": [c.to_dict() for c in self.channels],
            "abnormal": self.abnormal,
            "sg_tol": self.sg_tol,
            "window": self.window,
        }


def classify_extremal(ext: Extremal, sg_tol: float | None = None, window: int | None = None) -> Classification:
    """Per-channel regular/singular labels and the abnormality flag.

    A channel is singular on a sub-interval when ``|phi| <= sg_tol`` at
    ``window`` or more consecutive nodes.  The extremal is flagged abnormal when
    ``|H| <= sg_tol`` at every node.
    """
    sg = ext.options.sg_tol if sg_tol is None else sg_tol
    w = ext.options.singular_window if window is None else window
    channels = []
    for i in range(ext.m):
        runs = _band_runs(ext.phi[:, i], sg, w)
        intervals = [[float(ext.t[a]), float(ext.t[b - 1])] for a, b in runs]
        everywhere = bool(np.all(np.abs(ext.phi[:, i]) <= sg))
        times = ext.switch_times(i)
        channels.append(ChannelClass(i, len(times), times, intervals, everywhere))
    abnormal = bool(np.all(np.abs(ext.H) <= sg))
    return Classification(channels, abnormal, sg, w)
