import copy
from fractions import Fraction

import numpy as np
import pytest

from extremalkit.expr import VariableRegistry
from extremalkit.lie import VectorField, degree_class
from extremalkit.mech import AffineSystem, check_commutativity
from extremalkit.pmp import SIGN_CHANGE, Event, IntegratorOptions, classify_extremal, integrate_extremal
from extremalkit.uuv import (KINDS, ROTATION, SINGULAR_CHANNELS, TRANSLATE_1, TRANSLATE_3, UUVParams,
                             PureMotionSpec, abnormal_rotation_spec, build_uuv, pure_motion_extremal,
                             verify_prop8)

UUV = build_uuv()


def test_control_fields_are_scaled_unit_vectors():
    p = UUVParams()
    for i, mass in enumerate((p.m1, p.m3, p.I)):
        comps = [c.constant_value() for c in UUV.controls[i]]
        want = [0] * 6
        want[3 + i] = 1 / mass
        assert comps == want


def test_structure_for_other_parameters():
    sys = build_uuv(UUVParams(m1=Fraction(1, 2), m3=7, I=3, bounds=((-2, 1), (-1, 3), (-1, 1))))
    assert check_commutativity(sys).passed
    dc = degree_class(sys.drift)
    assert (dc.a, dc.b) == (1, 2)


@pytest.mark.parametrize("kwargs", [dict(m1=0), dict(I=-1), dict(m1=2, m3=2),
                                    dict(bounds=((0, 1), (-1, 1), (-1, 1))), dict(bounds=((-1, 1),))])
def test_parameter_validation(kwargs):
    with pytest.raises(ValueError):
        UUVParams(**kwargs)


def test_pure_motion_spec_validation():
    with pytest.raises(ValueError):
        PureMotionSpec("spin")
    with pytest.raises(ValueError):
        PureMotionSpec(ROTATION, seeds=(0, 0))
    with pytest.raises(ValueError):
        PureMotionSpec(ROTATION, T=0)


def affine_fit_residual(t, y):
    A = np.vstack([t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(np.max(np.abs(A @ coef - y)))


def test_rotation_closed_form():
    spec = PureMotionSpec(ROTATION, velocity=0.0, seeds=(1.0, 0.5), T=2.0)
    ext = pure_motion_extremal(UUV, spec)
    assert np.max(np.abs(ext.phi[:, :2])) <= 1e-10
    assert affine_fit_residual(ext.t, ext.phi[:, 2]) <= 1e-9
    times = ext.switch_times(2)
    assert len(times) == 1
    assert abs(times[0] - spec.closed_form_switch(UUVParams())) <= 2 * ext.options.resolution
    assert np.max(np.abs(ext.x[:, 3:5])) <= 1e-12
    # angular rate piecewise affine: slope beta/I then alpha/I
    rate = np.diff(ext.x[:, 5]) / np.diff(ext.t)
    assert np.allclose(rate[ext.t[1:] < 0.49], 0.5)
    assert np.allclose(rate[ext.t[:-1] > 0.51], -0.5)


def test_rotation_velocities_stay_zero_for_long_runs():
    ext = integrate_extremal(UUV, [0.3, -0.1, 0.7, 0, 0, 0.4], [0, 0, 1, 0, 0, 2.0], 5.0, IntegratorOptions(step=1e-3))
    assert np.max(np.abs(ext.x[:, 3:5])) <= 1e-12


@pytest.mark.parametrize("kind", KINDS)
def test_pure_motions_are_two_singular(kind):
    spec = PureMotionSpec(kind, pose=(0.2, -0.4, 0.6), velocity=0.3, seeds=(1.0, 0.7), T=2.0)
    ext = pure_motion_extremal(UUV, spec)
    cls = classify_extremal(ext)
    assert tuple(cls.singular_channels()) == SINGULAR_CHANNELS[kind]
    for i in SINGULAR_CHANNELS[kind]:
        assert np.max(np.abs(ext.phi[:, i])) <= 1e-10
        assert np.all(ext.u[:, i] == 0)
    rep = verify_prop8(ext, UUV)
    assert rep.applicable and rep.passed and rep.kind == kind
    assert rep.switch_count == 1


def test_translation_moves_along_one_body_axis():
    ext = pure_motion_extremal(UUV, PureMotionSpec(TRANSLATE_3, pose=(0, 0, 0.5), velocity=0.2, T=1.0))
    assert np.max(np.abs(ext.x[:, [4, 5]])) <= 1e-12
    assert np.allclose(ext.x[:, 2], 0.5)
    heading = np.array([np.cos(0.5), -np.sin(0.5)])
    disp = ext.x[-1, :2] - ext.x[0, :2]
    assert abs(disp[0] * heading[1] - disp[1] * heading[0]) <= 1e-12
    ext = pure_motion_extremal(UUV, PureMotionSpec(TRANSLATE_1, pose=(0, 0, 0.5), velocity=0.2, T=1.0))
    assert np.max(np.abs(ext.x[:, [3, 5]])) <= 1e-12


def test_switching_happens_where_velocity_vanishes():
    # the switch of a rotation from rest at t = 0.5 leaves the vehicle spinning; still v1 = v3 = 0 there
    ext = pure_motion_extremal(UUV, PureMotionSpec(ROTATION, velocity=0.0, seeds=(1.0, 0.5)))
    rep = verify_prop8(ext, UUV)
    assert rep.checks["switching_in_zero_set"]
    assert rep.switch_states[0][3] == 0 and rep.switch_states[0][4] == 0


def test_no_switching_when_seed_has_no_zero():
    ext = pure_motion_extremal(UUV, PureMotionSpec(ROTATION, seeds=(0.0, 1.0), T=1.0))
    rep = verify_prop8(ext, UUV)
    assert rep.passed and rep.switch_count == 0
    assert not classify_extremal(ext).abnormal


def test_abnormal_rotation_switches_at_rest():
    spec = abnormal_rotation_spec(UUVParams())
    ext = pure_motion_extremal(UUV, spec)
    cls = classify_extremal(ext)
    assert cls.abnormal
    rep = verify_prop8(ext, UUV)
    assert rep.passed and rep.checks["abnormal_switch_at_rest"]
    assert abs(rep.switch_states[0][5]) <= 1e-8


def test_bang_bang_run_is_not_applicable():
    ext = integrate_extremal(UUV, [0, 0, 0.3, 0.8, -0.5, 0.4], [0.3, -0.7, 0.5, 0.9, -0.6, 0.4], 2.0)
    rep = verify_prop8(ext, UUV)
    assert not rep.applicable and not rep.passed
    assert rep.message.startswith("not applicable")


def test_injected_double_switch_fails():
    ext = pure_motion_extremal(UUV, PureMotionSpec(ROTATION, velocity=0.0, seeds=(1.0, 0.5)))
    bad = copy.deepcopy(ext)
    bad.events.append(Event(2, 1.5, SIGN_CHANGE))
    rep = verify_prop8(bad, UUV)
    assert not rep.passed
    assert not rep.checks["at_most_one_switching"]
    assert rep.switch_times == pytest.approx([0.5, 1.5], abs=1e-9)
    assert "at_most_one_switching" in rep.message


def test_pure_motions_need_the_vehicle():
    reg = VariableRegistry.build(("a", "b"))
    raw = AffineSystem(VectorField.parse(reg, ["b", "0"]), [VectorField.parse(reg, ["0", "1"])], [(-1, 1)])
    with pytest.raises(ValueError):
        pure_motion_extremal(raw, PureMotionSpec(ROTATION))
