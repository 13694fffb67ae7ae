import random
from fractions import Fraction

import pytest

from extremalkit.expr import VariableRegistry
from extremalkit.lie import VectorField
from extremalkit.mech import AffineSystem, BuildError, build_affine, random_mechanical_spec
from extremalkit.pmp import IntegratorOptions, integrate_extremal, switching_derivatives
from extremalkit.singular import (INCONCLUSIVE, VERIFIED, ChainError, PreconditionError, SingularSystemError,
                                  TheoremOneQuery, abnormal_span_check, concat_check, full_control,
                                  prop1_check, random_points, sample_points, singular_control_solve,
                                  span_dimension, theorem1_check)
from extremalkit.uuv import UUVParams, build_uuv

UUV = build_uuv()
ALL = {0, 1, 2}


def collinear_system():
    reg = VariableRegistry.build(("a", "b"))
    return AffineSystem(VectorField.parse(reg, ["a + b", "a + b"]), [VectorField.parse(reg, ["1", "1"])], [(-1, 1)])


def rational_state(rng):
    t = Fraction(rng.randint(-9, 9), rng.randint(1, 9))
    cs = ((1 - t * t) / (1 + t * t), 2 * t / (1 + t * t))
    v = [Fraction(rng.randint(-9, 9), rng.randint(1, 5)) for _ in range(5)]
    return v[:2] + [cs] + v[2:]


def test_chain_validation():
    with pytest.raises(ChainError):
        TheoremOneQuery({0}, {0}, [{0}, {0}]).validate(3)
    with pytest.raises(ChainError):
        TheoremOneQuery(set(), {0, 1}, [{0, 1}, {0, 2}]).validate(3)  # J_1 not inside J_0
    with pytest.raises(ChainError):
        TheoremOneQuery(set(), {0, 1}, [{0}, {0}]).validate(3)  # J_0 != K1 | K2
    with pytest.raises(ChainError):
        TheoremOneQuery(set(), {0}, [{0}]).validate(3)
    with pytest.raises(ChainError):
        TheoremOneQuery(set(), {0, 1}, [{0, 1}, set()]).validate(3)
    with pytest.raises(ChainError):
        TheoremOneQuery(set(), {0, 5}, [{0, 5}, {0}]).validate(3)
    with pytest.raises(ChainError):
        TheoremOneQuery(set(), ALL, [ALL, ALL, {0}], J_prime=[{1}]).validate(3)  # J_2 not inside J'_1
    TheoremOneQuery(set(), ALL, [ALL, ALL, {0}], J_prime=[{0, 1}]).validate(3)


def test_no_common_accumulation_of_all_switching_zeros():
    pts = random_points(UUV, 5, seed=1)
    v = theorem1_check(UUV, TheoremOneQuery(set(), ALL, [ALL, ALL]), pts)
    assert v.status == VERIFIED and v.min_rank == 6
    assert "no common accumulation point" in v.conclusion


def test_no_totally_singular_extremal():
    pts = random_points(UUV, 5, seed=2)
    v = theorem1_check(UUV, TheoremOneQuery(ALL, set(), [ALL, ALL]), pts)
    assert v.asserted
    assert any("condition 2" in n for n in v.notes)
    v = theorem1_check(UUV, TheoremOneQuery({0, 1}, {2}, [ALL, ALL]), pts)
    assert v.asserted and v.conclusion.startswith("either")


def test_level_one_is_automatic_on_mechanical_builds():
    pts = random_points(UUV, 2, seed=3)
    v = theorem1_check(UUV, TheoremOneQuery(ALL, set(), [ALL, ALL]), pts, debug=True)
    level1 = [e for p in v.points for e in p.memberships if e.l == 1]
    assert level1 and all(e.rule == "commuting controls" for e in level1)


def test_short_chain_fails_condition_one_at_level_two():
    pts = random_points(UUV, 3, seed=4)
    v = theorem1_check(UUV, TheoremOneQuery({0, 1}, set(), [{0, 1}, {0, 1}, {0, 1}]), pts)
    assert v.status == INCONCLUSIVE and v.conclusion is None
    assert any(f.startswith("condition 1") for f in v.failures())


def test_rank_deficient_system_is_never_asserted():
    sys = collinear_system()
    v = theorem1_check(sys, TheoremOneQuery({0}, set(), [{0}, {0}]), [[1, 2], [Fraction(1, 3), -1]])
    assert v.status == INCONCLUSIVE and not v.rank_ok and v.min_rank == 1
    with pytest.raises(ValueError):
        theorem1_check(sys, TheoremOneQuery({0}, set(), [{0}, {0}]), [])


def test_verdict_needs_every_point():
    sys = collinear_system()
    q = TheoremOneQuery({0}, set(), [{0}, {0}])
    assert theorem1_check(sys, q, [[1, 2]] * 3).status == INCONCLUSIVE


def test_lemma_dimension_on_random_builds():
    rng = random.Random(31)
    for _ in range(3):
        sys = build_affine(random_mechanical_spec(rng, r=3), [(-1, 1)] * 3)
        for J0, J1 in (({0, 1, 2}, {0, 1, 2}), ({0, 2}, {2}), ({1}, {1})):
            for pt in random_points(sys, 3, seed=rng.randint(0, 999)):
                rank, d = span_dimension(sys, J0, J1, pt)
                assert rank == d


def test_prop1_on_vehicle_stays_inconclusive():
    # [g_a, [f, g_b]] points along the third control, so these spans stop at five
    for K1, K2, seed in (({0, 1}, set(), 5), (set(), {0, 1}, 6)):
        chain = TheoremOneQuery(K1, K2, [{0, 1}, {0, 1}])
        v = prop1_check(UUV, K1, K2, {2}, chain, random_points(UUV, 4, seed=seed))
        assert v.chain.conditions_hold
        assert v.status == INCONCLUSIVE and v.ranks == [5] * 4 and v.conclusion is None


def test_prop1_asserts_on_full_span():
    reg = VariableRegistry.build(("a", "b"))
    sys = AffineSystem(VectorField.parse(reg, ["b", "0"]),
                       [VectorField.parse(reg, ["0", "1"]), VectorField.parse(reg, ["1", "0"])], [(-1, 1)] * 2)
    chain = TheoremOneQuery({0}, set(), [{0}, {0}])
    v = prop1_check(sys, {0}, set(), {1}, chain, [[0, 0], [1, -2]])
    assert v.asserted and v.ranks == [2, 2]
    assert v.conclusion.endswith("at the tested states (extremal u_i-singular for i in {1})")
    v = prop1_check(sys, {0}, set(), {1}, chain, [[0, 0]], from_extremal=True)
    assert "whole extremal" in v.conclusion


def test_prop1_input_errors():
    chain = TheoremOneQuery({0, 1}, set(), [{0, 1}, {0, 1}])
    pts = random_points(UUV, 1, seed=7)
    with pytest.raises(ChainError):
        prop1_check(UUV, {0, 1}, set(), {1}, chain, pts)
    with pytest.raises(ChainError):
        prop1_check(UUV, {0, 1}, set(), set(), chain, pts)
    with pytest.raises(ChainError):
        prop1_check(UUV, {0}, set(), {2}, chain, pts)


def test_prop1_rank_deficient_system():
    reg = VariableRegistry.build(("a", "b"))
    sys = AffineSystem(VectorField.parse(reg, ["a + b", "a + b"]),
                       [VectorField.parse(reg, ["1", "1"]), VectorField.parse(reg, ["2", "2"])], [(-1, 1)] * 2,
                       check_independence=False)
    chain = TheoremOneQuery({0}, set(), [{0}, {0}])
    v = prop1_check(sys, {0}, set(), {1}, chain, [[1, 1]])
    assert v.status == INCONCLUSIVE and v.ranks == [1] and v.conclusion is None


def test_abnormal_span_gated_on_flag():
    pts = random_points(UUV, 3, seed=8)
    v = abnormal_span_check(UUV, 2, pts, abnormal=False)
    assert v.status == INCONCLUSIVE and v.notes
    v = abnormal_span_check(UUV, 2, pts, abnormal=True)
    assert v.ranks == [6, 6, 6] and v.asserted
    with pytest.raises(ChainError):
        abnormal_span_check(UUV, 3, pts, abnormal=True)


def test_singular_controls_vanish_on_pure_rotation():
    x = [0, 0, (Fraction(3, 5), Fraction(4, 5)), 0, 0, Fraction(1, 2)]
    sol = singular_control_solve(UUV, x, [0, 0, 1, 0, 0, Fraction(1, 2)], 2, 1)
    assert sol.exact and sol.u == [0, 0] and sol.residual == 0
    assert sol.determinant == Fraction(-4, 225)
    assert sol.all_feasible
    assert full_control(sol, 3, 1) == [0, 0, 1]


def test_singular_controls_null_second_derivatives():
    rng = random.Random(33)
    solved = 0
    for _ in range(20):
        x = rational_state(rng)
        lam = [Fraction(rng.randint(-9, 9), rng.randint(1, 4)) for _ in range(6)]
        k = rng.randrange(3)
        # on a u_i-singular arc phi_i = lam_(4+i) / mass_i vanishes for i != k
        for i in range(3):
            if i != k:
                lam[3 + i] = 0
        try:
            sol = singular_control_solve(UUV, x, lam, k, Fraction(1))
        except (PreconditionError, SingularSystemError):
            continue
        solved += 1
        sw = switching_derivatives(UUV, x, lam, full_control(sol, 3, Fraction(1)))
        for i in sol.channels:
            assert sw.phi_ddot_alpha[i] == 0
            assert sw.phi_ddot[i] == 0
    assert solved > 10


def test_singular_controls_float_path():
    x = [0.0, 0.0, 0.4, 0.3, -0.2, 0.5]
    lam = [0.1, 0.2, 0.3, 0.0, 0.5, 0.0]
    sol = singular_control_solve(UUV, x, lam, 1, -1.0)
    assert not sol.exact and sol.residual <= 1e-10
    sw = switching_derivatives(UUV, x, lam, full_control(sol, 3, -1.0))
    assert all(abs(sw.phi_ddot[i]) <= 1e-9 for i in sol.channels)


def test_singular_control_errors():
    x = [0, 0, (1, 0), 0, 0, 0]
    with pytest.raises(PreconditionError):
        singular_control_solve(UUV, x, [1, 0, 0, 0, 0, 0], 2, 1)
    circle = build_uuv(UUVParams(m1=2, m3=2, allow_circular=True))
    with pytest.raises(SingularSystemError):
        singular_control_solve(circle, x, [0, 0, 1, 0, 0, 1], 2, 1)
    reg = VariableRegistry.build(("a", "b"))
    raw = AffineSystem(VectorField.parse(reg, ["b", "0"]), [VectorField.parse(reg, ["0", "1"])], [(-1, 1)])
    with pytest.raises(BuildError):
        singular_control_solve(raw, [0, 0], [1, 1], 0, 1)


def test_concatenations_of_pure_motions_rejected():
    for S1, S2 in (({0, 2}, {1, 2}), ({0, 1}, {1, 2})):
        v = concat_check(UUV, S1, S2)
        assert v.path == "fast" and v.asserted


def test_concatenation_junction_path():
    junction = random_points(UUV, 1, seed=9)[0]
    v = concat_check(UUV, {0, 2}, {1, 2}, junction=junction, force_general=True)
    assert v.path == "junction" and v.rank == 6 and v.asserted
    v = concat_check(UUV, {0}, {0}, junction=junction)
    assert v.status == INCONCLUSIVE and v.rank < 6
    with pytest.raises(ValueError):
        concat_check(UUV, {0}, {0})
    with pytest.raises(ChainError):
        concat_check(UUV, set(), {0})
    with pytest.raises(ChainError):
        concat_check(UUV, {0}, {1}, chains=[[{1}, {1}], [{1}, {1}]], junction=junction)


def test_sampling_skips_event_nodes():
    ext = integrate_extremal(UUV, [0, 0, 0, 0, 0, 0.2], [0, 0, 1, 0, 0, 0.5], 1.0, IntegratorOptions(step=1e-2))
    pts = sample_points(ext, max_points=20)
    assert 0 < len(pts) <= 20
    event_states = [list(map(float, ext.x[i])) for i in ext.event_nodes()]
    assert not any(p in event_states for p in pts if p != pts[0])


def test_two_switching_functions_share_no_accumulation_point():
    pts = random_points(UUV, 4, seed=10)
    for i in range(3):
        K2 = ALL - {i}
        v = theorem1_check(UUV, TheoremOneQuery({i}, K2, [ALL, ALL]), pts)
        assert v.asserted and v.min_rank == 6
