from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from conftest import fractions_in
from infdyn.rational import circle_distance
from infdyn.singular import (
    MatchFailed,
    SaddleConnectionFound,
    continuity_partition,
    continuity_witness,
    detect_saddle,
    min_gap_or_zero,
    perturb_ring,
    ring_levels,
    separation_iota,
    sigma_set,
    zeta_map,
)
from infdyn.staircase import Direction, Moved, SectionPoint, SingularHit, Tail, WidthSequence, step

HALF = F(1, 2)
RING1 = WidthSequence.ringed_at(1, [HALF])
GENERIC = Direction(F(2 * 1234567, 2000003))


def D(delta):
    return Direction(2 * F(delta))


# ---------------------------------------------------------------- sigma


def test_sigma_example():
    w = WidthSequence(0, (F(3, 10), HALF), Tail("constant", HALF))
    pts = sigma_set(w, D(F(1, 10)), 1).points[1]
    assert {p.x for p in pts} == {F(1, 5), F(7, 5), F(19, 10)}
    assert not any(p.blocking for p in pts)


@pytest.mark.parametrize("N", [1, 2, 4])
def test_blocking_points_sit_on_the_ring_walls(N):
    w = WidthSequence.ringed_at(N, [F(1, 3)] * (2 * N - 1))
    d = D(F(2, 7))
    blocking = sigma_set(w, d, N).blocking()
    assert sorted(p.level for p in blocking) == [-N + 1, N]
    top = [p for p in blocking if p.level == N][0]
    assert top.x == (2 - d.delta) % 2 == (2 - w(N) - d.delta) % 2


def test_vertical_direction_sigma_is_the_slit_ends():
    for pts in sigma_set(WidthSequence.constant(HALF), D(0), 2).points.values():
        assert {p.x for p in pts} == {HALF, F(3, 2), F(0)}


def test_sigma_points_are_singular_and_gaps_are_not():
    w = WidthSequence.ringed_at(2, [F(1, 3), F(3, 5), F(1, 4)])
    d = D(F(5, 23))
    for k, pts in sigma_set(w, d, 2).points.items():
        xs = sorted(p.x for p in pts)
        for x in xs:
            assert isinstance(step(w, d, SectionPoint(k, x)), SingularHit)
        for a, b in zip(xs, xs[1:] + [xs[0] + 2]):
            assert isinstance(step(w, d, SectionPoint(k, ((a + b) / 2) % 2)), Moved)


# ---------------------------------------------------------------- partitions


def test_partition_at_zero_is_sigma():
    w, d = WidthSequence.ringed_at(2, [F(1, 3), HALF, F(1, 4)]), D(F(3, 11))
    part = continuity_partition(w, d, 2, 0)
    sig = sigma_set(w, d, 2)
    assert {(c.level, c.x) for c in part.all_cuts()} == {(p.level, p.x) for p in sig.all()}
    assert part.total_length() == 2 * 4


def test_partition_one_step_on_the_ring():
    part = continuity_partition(RING1, D(F(1, 8)), 1, 1)
    assert len({(c.level, c.x) for c in part.all_cuts()}) <= 2 * 3 * 2
    assert part.total_length() == 4
    assert part.min_gap > 0


def test_partition_level_shift_invariance():
    w, d = WidthSequence.constant(F(2, 5)), D(F(3, 13))
    a = continuity_partition(w, d, 1, 4, levels=range(0, 2))
    b = continuity_partition(w, d, 1, 4, levels=range(7, 9))
    for k in (0, 1):
        assert [c.x for c in a.cuts[k]] == [c.x for c in b.cuts[k + 7]]


def test_partition_reports_saddle_connection():
    with pytest.raises(SaddleConnectionFound):
        continuity_partition(WidthSequence.constant(HALF), D(0), 1, 3)


def test_partition_midpoints_survive_and_ends_agree():
    d = D(F(40503, 100003))
    part = continuity_partition(RING1, d, 1, 40)
    assert continuity_witness(part, RING1, d) == []
    for iv in part.intervals[::7]:
        p = SectionPoint(iv.level, iv.midpoint)
        for _ in range(40):
            out = step(RING1, d, p)
            assert isinstance(out, Moved)
            p = out.point


def test_partition_deterministic_under_level_order():
    w, d = WidthSequence.ringed_at(2, [F(1, 3), HALF, F(1, 4)]), D(F(7, 31))
    a = continuity_partition(w, d, 2, 5)
    b = continuity_partition(w, d, 2, 5, levels=range(-1, 3))
    assert sorted(a.all_cuts()) == sorted(b.all_cuts())


@settings(max_examples=60)
@given(fractions_in(-1, 1, 24), st.integers(0, 6))
def test_min_gap_positive_iff_no_saddle(delta, ell):
    d = D(delta)
    gap = min_gap_or_zero(RING1, d, 1, ell)
    assert (gap > 0) == (detect_saddle(RING1, d, 1, ell) is None)


# ---------------------------------------------------------------- iota and saddles


def test_iota_vertical_is_zero():
    assert separation_iota(WidthSequence.constant(HALF), D(0), 1, 0) == 0


def test_iota_generic_is_exhaustive_min():
    d, ell = D(F(4021, 10007)), 6
    got = separation_iota(RING1, d, 1, ell)
    back = continuity_partition(RING1, d, 1, ell).all_cuts()
    fwd = continuity_partition(RING1, d.reversed(), 1, ell).all_cuts()
    brute = min(circle_distance(a.x, b.x) for a in back for b in fwd if a.level == b.level)
    assert got == brute > 0


def test_detect_saddle_examples():
    assert detect_saddle(RING1, D(0), 1, 0) is None
    wit = detect_saddle(WidthSequence.constant(HALF), D(0), 1, 5)
    assert wit is not None and wit.steps <= 5
    assert detect_saddle(RING1, GENERIC, 1, 1000) is None


# ---------------------------------------------------------------- matching maps


def test_zeta_identity():
    Z = zeta_map(RING1, RING1, GENERIC, 1, 20)
    assert Z.new_intervals == [] and Z.sup_deviation == 0
    assert all(a == b for a, b in Z.pairs)


@pytest.mark.parametrize("sign", [1, -1])
def test_zeta_perturbations(sign):
    ell = 20
    devs = []
    for eps in (F(1, 100), F(1, 1000), F(1, 10000)):
        Z = zeta_map(RING1, perturb_ring(RING1, 1, eps), GENERIC, 1, ell, sign)
        assert len(Z.new_intervals) <= 2 * (ell + 1)
        assert all(iv.length <= eps for iv in Z.new_intervals)
        assert Z.sup_deviation == eps
        devs.append(Z.sup_deviation)
        # injective and order preserving on each level
        for k in ring_levels(1):
            src = sorted((s.a, s) for s, _ in Z.pairs if s.level == k)
            imgs = [Z.apply(k, s.midpoint) for _, s in src]
            lifted = [(p.x - src[0][1].a) % 2 for p in imgs]
            assert lifted == sorted(lifted) and len(set(lifted)) == len(lifted)
    assert devs[0] > devs[1] > devs[2]


def test_zeta_fails_for_large_perturbation():
    with pytest.raises(MatchFailed):
        zeta_map(RING1, perturb_ring(RING1, 1, F(2, 5)), Direction(F(2280699, 2000003)), 1, 1000)
