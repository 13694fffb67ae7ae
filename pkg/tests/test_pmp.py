import math
import random
from fractions import Fraction

import numpy as np
import pytest

from extremalkit.expr import VariableRegistry
from extremalkit.lie import VectorField
from extremalkit.mech import AffineSystem, build_affine, random_mechanical_spec
from extremalkit.pmp import (HOLD, SIGN_CHANGE, ZERO, ChatteringError, IntegratorOptions,
                             MaximumPrincipleViolation, bang_bang_control, classify_extremal,
                             hamiltonian, integrate_batch, integrate_extremal, switching_derivatives)
from extremalkit.schema import trajectory_csv
from extremalkit.uuv import UUVParams, build_uuv, kinetic_energy

UUV = build_uuv()


def double_integrator():
    reg = VariableRegistry.build(("y", "s"))
    return AffineSystem(VectorField.parse(reg, ["s", "0"]), [VectorField.parse(reg, ["0", "1"])], [(-1, 1)])


def rational_state(rng):
    t = Fraction(rng.randint(-9, 9), rng.randint(1, 9))
    cs = ((1 - t * t) / (1 + t * t), 2 * t / (1 + t * t))
    v = [Fraction(rng.randint(-9, 9), rng.randint(1, 5)) for _ in range(5)]
    return v[:2] + [cs] + v[2:]


def test_hamiltonian_examples():
    x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]
    assert hamiltonian(UUV, x, [0] * 6, [1, -1, 1]) == 0
    lam = [0.3, -0.2, 0.5, 1.0, 0.7, -0.4]
    lam_f = float(np.dot(lam, UUV.drift.numeric(x)))
    assert hamiltonian(UUV, x, lam, [0, 0, 0]) == pytest.approx(lam_f, abs=1e-14)
    # pure rotation: v = 0, Om = w
    w, l3, l6, u3 = Fraction(3, 2), Fraction(2), Fraction(-1, 3), Fraction(1)
    pt = [0, 0, (Fraction(3, 5), Fraction(4, 5)), 0, 0, w]
    H = hamiltonian(UUV, pt, [0, 0, l3, 0, 0, l6], [0, 0, u3])
    assert H == l3 * w + l6 / UUVParams().I * u3
    with pytest.raises(ValueError):
        hamiltonian(UUV, x, [1, 2], [0, 0, 0])


def test_bang_bang_control():
    bounds = [(-1, 1)] * 3
    assert bang_bang_control([0.5, -0.2, 0.0], bounds, prev_u=[0, 0, 1]) == [1, -1, 1]
    assert bang_bang_control([1, 2, 3], [(-1, 2), (-3, 4), (-5, 6)]) == [2, 4, 6]
    assert bang_bang_control([0.0], [(-1, 1)], prev_u=[1], policy=ZERO) == [0.0]
    assert bang_bang_control([0.0], [(-1, 1)], policy=None, law_value=[0.25]) == [0.25]


def test_options_validation():
    for bad in (dict(step=0), dict(sg_tol=0), dict(depth=0), dict(in_band="nope")):
        with pytest.raises(ValueError):
            IntegratorOptions(**bad)
    assert IntegratorOptions(step=1e-3, depth=30).resolution == pytest.approx(1e-3 * 2 ** -30)


def test_linear_flow_matches_closed_form():
    # harmonic oscillator drift, a control channel that never acts
    reg = VariableRegistry.build(("p", "q"))
    sys = AffineSystem(VectorField.parse(reg, ["q", "-p"]), [VectorField.parse(reg, ["0", "0"])], [(-1, 1)],
                       check_independence=False)
    ext = integrate_extremal(sys, [1.0, 0.5], [0.2, -0.7], 1.0, IntegratorOptions(step=1e-3))
    c, s = math.cos(1.0), math.sin(1.0)
    assert np.allclose(ext.x[-1], [c + 0.5 * s, 0.5 * c - s], atol=1e-8)
    # adjoint of a rotation flow is the same rotation
    assert np.allclose(ext.lam[-1], [0.2 * c - 0.7 * s, -0.7 * c - 0.2 * s], atol=1e-8)


def test_switching_time_localized():
    # phi = lam_2(t) = 1 - t
    ext = integrate_extremal(double_integrator(), [0.0, 0.0], [1.0, 1.0], 2.0, IntegratorOptions(step=1e-2))
    cls = classify_extremal(ext)
    assert cls.channels[0].switch_count == 1
    assert abs(cls.channels[0].switch_times[0] - 1.0) < 1e-9
    assert ext.u[0, 0] == 1 and ext.u[-1, 0] == -1
    assert cls.channels[0].regular


def test_zero_adjoint_rejected():
    with pytest.raises(MaximumPrincipleViolation):
        integrate_extremal(UUV, [0] * 6, [0] * 6, 1.0)
    with pytest.raises(ValueError):
        integrate_extremal(UUV, [0] * 6, [1] * 6, 0.0)


def test_adjoint_scaling_leaves_trajectory_unchanged():
    x0 = [0.0, 0.0, 0.3, 0.8, -0.5, 0.4]
    lam0 = np.array([0.3, -0.7, 0.5, 0.9, -0.6, 0.4])
    opts = IntegratorOptions(step=1e-3)
    a = integrate_extremal(UUV, x0, lam0, 2.0, opts)
    b = integrate_extremal(UUV, x0, 3.5 * lam0, 2.0, opts)
    assert [e.kind for e in a.events] == [e.kind for e in b.events]
    assert np.allclose([e.t for e in a.events], [e.t for e in b.events], atol=1e-9)
    assert np.allclose(a.x[-1], b.x[-1], atol=1e-9)
    assert np.allclose(3.5 * a.H, b.H, atol=1e-9)


def test_free_motion_conserves_energy_and_hamiltonian():
    # a huge band puts every channel in band, the zero policy then gives u = 0
    opts = IntegratorOptions(step=1e-3, sg_tol=1e6, in_band=ZERO)
    x0 = [0.0, 0.0, 0.3, 0.8, -0.5, 0.4]
    ext = integrate_extremal(UUV, x0, [0.3, -0.7, 0.5, 0.9, -0.6, 0.4], 5.0, opts)
    assert np.all(ext.u == 0)
    p = UUVParams()
    E = np.array([kinetic_energy(p, x) for x in ext.x])
    assert np.max(np.abs(E - E[0])) <= 1e-8
    assert np.max(np.abs(ext.H - ext.H[0])) <= 1e-6


def test_pure_rotation_keeps_translation_at_rest():
    ext = integrate_extremal(UUV, [0, 0, 0, 0, 0, 0.2], [0, 0, 1, 0, 0, 0.5], 2.0)
    assert np.max(np.abs(ext.x[:, 3:5])) <= 1e-12
    assert np.max(np.abs(ext.phi[:, :2])) <= 1e-10
    # lam_6 drops at rate lam_3, so phi_3 = (0.5 - t) / I
    nodes = ext.event_nodes()
    for k in range(0, len(ext.t), 97):
        if k not in nodes:
            assert ext.phi[k, 2] == pytest.approx((0.5 - ext.t[k]) / 2.0, abs=1e-10)
    cls = classify_extremal(ext)
    assert cls.singular_channels() == [0, 1]
    assert ext.switch_times(2) == pytest.approx([0.5], abs=1e-9)


def test_hamiltonian_constant_on_bang_bang_run():
    x0 = [0.0, 0.0, 0.3, 0.8, -0.5, 0.4]
    ext = integrate_extremal(UUV, x0, [0.3, -0.7, 0.5, 0.9, -0.6, 0.4], 5.0, IntegratorOptions(step=1e-3))
    assert any(e.kind == SIGN_CHANGE for e in ext.events)
    assert np.max(np.abs(ext.H - ext.H[0])) <= 1e-6
    for i in range(3):
        lo, hi = UUV.bounds[i]
        assert np.all((ext.u[:, i] >= lo) & (ext.u[:, i] <= hi))


def test_first_derivative_matches_finite_difference_on_smooth_arc():
    x0 = [0.0, 0.0, 0.3, 0.8, -0.5, 0.4]
    lam0 = [0.3, -0.7, 0.5, 0.9, -0.6, 0.4]
    ext = integrate_extremal(UUV, x0, lam0, 0.05, IntegratorOptions(step=1e-4))
    assert not ext.events
    k = 250
    for i in range(3):
        fd = (ext.phi[k + 1, i] - ext.phi[k - 1, i]) / (ext.t[k + 1] - ext.t[k - 1])
        sw = switching_derivatives(UUV, ext.x[k], ext.lam[k], ext.u[k])
        assert abs(fd - sw.phi_dot[i]) <= 1e-5


def test_second_derivative_forms_agree_exactly():
    rng = random.Random(21)
    for _ in range(50):
        x = rational_state(rng)
        lam = [Fraction(rng.randint(-9, 9), rng.randint(1, 7)) for _ in range(6)]
        u = [Fraction(rng.randint(-3, 3), 3) for _ in range(3)]
        sw = switching_derivatives(UUV, x, lam, u)
        assert sw.commuting
        assert sw.phi_ddot == sw.phi_ddot_alpha
        assert all(isinstance(v, Fraction) for v in sw.phi_ddot)


def test_second_derivative_matches_finite_difference():
    ext = integrate_extremal(UUV, [0.0, 0.0, 0.3, 0.8, -0.5, 0.4], [0.3, -0.7, 0.5, 0.9, -0.6, 0.4], 0.05,
                             IntegratorOptions(step=1e-4))
    k = 250
    for i in range(3):
        d = [switching_derivatives(UUV, ext.x[j], ext.lam[j], ext.u[j]).phi_dot[i] for j in (k - 1, k + 1)]
        fd = (d[1] - d[0]) / (ext.t[k + 1] - ext.t[k - 1])
        assert abs(fd - switching_derivatives(UUV, ext.x[k], ext.lam[k], ext.u[k]).phi_ddot[i]) <= 1e-5


def test_switching_derivatives_vanish_for_zero_adjoint():
    sw = switching_derivatives(UUV, [0, 0, (1, 0), 1, 2, 3], [0] * 6, [1, 1, 1])
    assert sw.phi == sw.phi_dot == sw.phi_ddot == [0, 0, 0]


def test_noncommuting_system_has_no_second_derivative():
    reg = VariableRegistry.build(("a", "b"))
    sys = AffineSystem(VectorField.parse(reg, ["0", "0"]),
                       [VectorField.parse(reg, ["1", "0"]), VectorField.parse(reg, ["a", "1"])], [(-1, 1)] * 2)
    sw = switching_derivatives(sys, [1, 1], [1, 1], [1, 1])
    assert not sw.commuting and sw.phi_ddot is None
    # [g_2, g_1] = (-1, 0) and [g_1, g_2] = (1, 0) enter through the other channel
    assert sw.phi_dot == [-1, 1]


def test_alpha_form_skipped_without_constant_input_matrix():
    rng = random.Random(22)
    sys = build_affine(random_mechanical_spec(rng, r=2), [(-1, 1)] * 2)
    assert sys.fully_actuated
    sw = switching_derivatives(sys, [(1, 0), 0, 1, 1], [1, 1, 1, 1], [1, 1])
    assert sw.phi_ddot is not None and sw.phi_ddot_alpha is None


def test_chattering_guard():
    opts = IntegratorOptions(step=1e-2, chatter_limit=1)
    with pytest.raises(ChatteringError):
        integrate_extremal(double_integrator(), [0.0, 0.0], [1.0, 1.0], 2.0, opts)


def test_abnormal_flag_needs_vanishing_hamiltonian():
    ext = integrate_extremal(UUV, [0, 0, 0, 0, 0, 0], [0, 0, 0, 0, 0, 1], 1.0)
    assert not classify_extremal(ext).abnormal
    assert float(ext.H[0]) == pytest.approx(0.5)
    # start the rotation with Om = -lam6 beta / (I lam3): H = 0 throughout
    ext = integrate_extremal(UUV, [0, 0, 0, 0, 0, -0.25], [0, 0, 1, 0, 0, 0.5], 2.0)
    assert classify_extremal(ext).abnormal


def test_batch_keeps_input_order():
    jobs = [([0, 0, 0, 0, 0, w], [0, 0, 1, 0, 0, 0.5], 1.0) for w in (0.1, 0.2, 0.3)]
    out = integrate_batch(UUV, jobs, IntegratorOptions(step=1e-2))
    assert [e.x[0, 5] for e in out] == [0.1, 0.2, 0.3]


def test_hold_policy_reports_singular_runs():
    ext = integrate_extremal(UUV, [0, 0, 0, 0, 0, 0.2], [0, 0, 1, 0, 0, 0.5], 1.0, IntegratorOptions(in_band=HOLD))
    entries = [e for e in ext.events if e.kind == "singular-entry"]
    assert sorted(e.channel for e in entries) == [0, 1]


def test_trajectory_csv_header():
    ext = integrate_extremal(double_integrator(), [0.0, 0.0], [1.0, 1.0], 0.01, IntegratorOptions(step=1e-2))
    head = trajectory_csv(ext).splitlines()[0]
    assert head == "t,x1,x2,lam1,lam2,u1,phi1,H"
