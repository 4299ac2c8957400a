import random
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from infdyn.observables import (
    BACKWARD_OK,
    FAIL,
    FORWARD_OK,
    DenominatorZero,
    TestFunction,
    default_pairs,
    family_member,
    genericity_scale_check,
    hopf_average,
    quadrature_integral,
    uniform_hopf_profile,
    uniqueness_criterion_check,
)
from infdyn.section import StaircaseSystem
from infdyn.singular import MatchFailed, SaddleConnectionFound, perturb_ring
from infdyn.staircase import Direction, SectionPoint, WidthSequence

HALF = F(1, 2)
RING1 = WidthSequence.ringed_at(1, [HALF])
SLOPE = Direction(F(2 * 1234567, 2000003))
RING_SYS = StaircaseSystem(RING1, SLOPE)


def ring_points(n, seed):
    rng = random.Random(seed)
    return [SectionPoint(rng.choice([0, 1]), F(rng.randrange(2 * 2 ** 20), 2 ** 20)) for _ in range(n)]


# ---------------------------------------------------------------- test functions


@pytest.mark.parametrize("j", range(0, 40, 3))
def test_closed_form_integral_matches_quadrature(j):
    f = family_member(2, j)
    assert abs(float(f.integral()) - quadrature_integral(f)) < 1e-12


def test_family_is_positive_on_the_ring():
    f = family_member(1, 9)
    for k in (0, 1):
        for i in range(64):
            assert f.value(SectionPoint(k, F(i, 32))) >= F(1, 8)
    assert f.value(SectionPoint(3, F(1, 3))) == 0


def test_tent_outside_support_rejected():
    from infdyn.observables import Tent

    with pytest.raises(ValueError):
        TestFunction((0,), (Tent(1, 2, 0),))


# ---------------------------------------------------------------- Hopf averages


def test_equal_functions_give_ratio_one():
    f = family_member(1, 5)
    rep = hopf_average(RING_SYS, f, f, SectionPoint(0, F(1, 3)), 10 ** 4)
    assert rep.ratio == [1.0] * len(rep.checkpoints)
    assert rep.checkpoints == [100, 1000, 10000]


@settings(max_examples=20)
@given(st.integers(1, 12), st.integers(0, 12), st.fractions(F(1, 7), 9, max_denominator=9))
def test_scale_invariance_exact(j, n, c):
    hj, hn = family_member(1, j), family_member(1, n)
    z = SectionPoint(1, F(5, 7))
    a = hopf_average(RING_SYS, hj, hn, z, 300, checkpoints=[10, 300], backend="rational")
    b = hopf_average(RING_SYS, hj.scaled(c), hn.scaled(c), z, 300, checkpoints=[10, 300], backend="rational")
    assert a.ratio == b.ratio
    assert a.target == b.target


def test_constant_denominator_is_a_birkhoff_average():
    hj, floor = family_member(1, 6), family_member(1, 0)
    z = SectionPoint(0, F(1, 3))
    rep = hopf_average(RING_SYS, hj, floor, z, 500, checkpoints=[1, 50, 500], backend="rational")
    for ell, num, ratio in zip(rep.checkpoints, rep.numerator, rep.ratio):
        assert ratio == num / (F(1, 8) * (ell + 1))


def test_rational_and_float_backends_agree():
    hj, hn = family_member(1, 3), family_member(1, 4)
    z = SectionPoint(0, F(1, 3))
    a = hopf_average(RING_SYS, hj, hn, z, 1000, backend="rational")
    b = hopf_average(RING_SYS, hj, hn, z, 1000)
    assert all(abs(float(x) - y) < 1e-9 for x, y in zip(a.ratio, b.ratio))


def test_denominator_zero():
    hn = TestFunction((0,), (), F(1, 4))
    with pytest.raises(DenominatorZero):
        hopf_average(StaircaseSystem(WidthSequence.constant(0), SLOPE), hn, hn, SectionPoint(1, F(1, 3)), 100)


def test_forward_and_backward_ratios_converge():
    hj, hn = default_pairs(1)[0]
    z = SectionPoint(0, F(1, 3))
    target = float(hj.integral() / hn.integral())
    for sign in (1, -1):
        rep = hopf_average(RING_SYS, hj, hn, z, 10 ** 6, sign=sign)
        assert abs(rep.ratio[-1] / target - 1) < 0.05


# ---------------------------------------------------------------- uniform profile


def test_uniform_profile_identical_functions():
    f = family_member(1, 2)
    prof = uniform_hopf_profile(RING_SYS, f, f, [100, 1000], ring_points(50, 1))
    assert prof.sup_deviation == [0.0, 0.0]


def test_uniform_profile_shrinks():
    hj, hn = default_pairs(1)[0]
    prof = uniform_hopf_profile(RING_SYS, hj, hn, [10 ** 4, 10 ** 6], ring_points(1000, 0))
    assert prof.skipped == 0
    assert 0 <= prof.sup_deviation[1] < prof.sup_deviation[0]


def test_uniform_profile_gate():
    hj, hn = default_pairs(1)[0]
    sys = StaircaseSystem(RING1, Direction(0))
    with pytest.raises(SaddleConnectionFound):
        uniform_hopf_profile(sys, hj, hn, [100], ring_points(5, 0), gate=(1, 10))


# ---------------------------------------------------------------- criterion


def test_criterion_on_the_ring():
    rep = uniqueness_criterion_check(RING_SYS, default_pairs(1), ring_points(8, 3), [10 ** 6], 0.05)
    assert rep.certified
    assert set(rep.verdicts) <= {FORWARD_OK, BACKWARD_OK}


def test_criterion_does_not_certify_periodic_widths():
    sys = StaircaseSystem(WidthSequence.constant(HALF), Direction(F(1913, 4096)))
    rep = uniqueness_criterion_check(sys, default_pairs(1), ring_points(8, 3), [10 ** 5], 0.05)
    assert not rep.certified and FAIL in rep.verdicts


def test_criterion_empty_pairs_vacuous():
    rep = uniqueness_criterion_check(RING_SYS, [], ring_points(3, 0), [100], 0.01)
    assert rep.certified and rep.certified_fraction == 1.0


# ---------------------------------------------------------------- genericity


def test_genericity_identity_passes():
    rep = genericity_scale_check(RING1, RING1, [SLOPE], 1, 50, 1e-9)
    assert rep.all_pass and rep.a2_deviation == 0 and rep.new_intervals == 0


def test_genericity_small_perturbation_regression():
    d = Direction(F(2280699, 2000003))
    rep = genericity_scale_check(RING1, perturb_ring(RING1, 1, F(1, 10000)), [d], 1, 1000, 1e-3)
    assert rep.A0 and rep.A1 and rep.A3 and rep.A2
    assert rep.a2_deviation == pytest.approx(1.5330e-4, rel=1e-3)


def test_genericity_large_perturbation_fails():
    d = Direction(F(2280699, 2000003))
    try:
        rep = genericity_scale_check(RING1, perturb_ring(RING1, 1, F(2, 5)), [d], 1, 1000, 1e-3)
    except MatchFailed:
        return
    assert not rep.all_pass
