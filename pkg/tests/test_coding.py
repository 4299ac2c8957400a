import random
from fractions import Fraction as F

import pytest

from infdyn import windtree as wt
from infdyn.coding import (
    Census,
    cylinder_census,
    itineraries,
    itinerary,
    random_ring_points,
    shift_conjugacy_check,
)
from infdyn.section import StaircaseSystem, orbit
from infdyn.singular import continuity_partition
from infdyn.staircase import Direction, SectionPoint, WidthSequence, step

HALF = F(1, 2)
RING1 = WidthSequence.ringed_at(1, [HALF])
SLOPE = Direction(F(2 * 1234567, 2000003))
RING_SYS = StaircaseSystem(RING1, SLOPE)


def test_no_slits_stay_forever():
    sys = StaircaseSystem(WidthSequence.constant(0), Direction(F(2, 7)))
    it = itinerary(sys, SectionPoint(3, F(1, 5)), 25)
    assert it.text == "S" * 25 and it.complete


def test_truncated_at_singularity():
    sys = StaircaseSystem(WidthSequence.constant(HALF), Direction(HALF))
    it = itinerary(sys, SectionPoint(0, F(5, 4)), 10)
    assert it.word == () and not it.complete


def test_letters_match_orbit_trace():
    rng = random.Random(3)
    for _ in range(30):
        z = SectionPoint(rng.choice([0, 1]), F(rng.randrange(2000), 1000))
        rec = orbit(RING_SYS, z, 200)
        it = itinerary(RING_SYS, z, 200)
        assert "".join(o.slit.value for o in rec.outcomes if hasattr(o, "slit")) == it.text


def test_exact_and_engine_itineraries_agree():
    pts = random_ring_points(1, 60, seed=4, denominator=997)
    fast = itineraries(RING_SYS, pts, 150)
    for p, it in zip(pts, fast):
        assert itinerary(RING_SYS, p, 150).word == it.word


def test_shift_conjugacy_exact_small():
    rng = random.Random(6)
    for _ in range(40):
        z = SectionPoint(rng.choice([0, 1]), F(rng.randrange(2 * 4099), 4099))
        out = step(RING1, SLOPE, z)
        if not hasattr(out, "point"):
            continue
        for mode in ("slit", "refined"):
            assert itinerary(RING_SYS, out.point, 50, mode).word == itinerary(RING_SYS, z, 51, mode).shift().word


def test_shift_conjugacy_engine():
    rep = shift_conjugacy_check(RING_SYS, random_ring_points(1, 2000, seed=1), 300)
    assert rep.holds and rep.checked + rep.skipped == 2000


def test_same_partition_interval_same_prefix():
    ell = 30
    d = Direction(F(2 * 40503, 100003))
    part = continuity_partition(RING1, d, 1, ell)
    sys = StaircaseSystem(RING1, d)
    for iv in part.intervals[::5]:
        a = SectionPoint(iv.level, (iv.a + iv.length / 3) % 2)
        b = SectionPoint(iv.level, (iv.a + 2 * iv.length / 3) % 2)
        assert itinerary(sys, a, ell).word == itinerary(sys, b, ell).word


def test_modes_validated():
    with pytest.raises(ValueError):
        itinerary(RING_SYS, SectionPoint(0, F(1, 3)), 3, mode="letters")
    with pytest.raises(ValueError):
        itinerary(RING_SYS, SectionPoint(0, F(1, 3)), -1)


def test_windtree_piece_mode():
    g = wt.Configuration(F(1), wt.Union_((wt.Ringed(2, F(1)), wt.Explicit(((0, 0),)))))
    sys = wt.WindtreeSystem(wt.WindtreeTable(g, (F(7), F(3))))
    b = wt.BoundaryState(0, F(1, 7), 1)
    long = itinerary(sys, b, 9, mode="piece")
    nxt = sys.forward(b).point
    assert itinerary(sys, nxt, 8, mode="piece").word == long.shift().word
    assert all(comp[1] in (1, 2, 3, 4) for comp, _ in long.word)
    with pytest.raises(TypeError):
        itinerary(sys, b, 3)


# ---------------------------------------------------------------- census


def test_census_depth_zero():
    c = cylinder_census(RING_SYS, 0, 50, N=1)
    assert c.counts == {"": 50} and c.frequencies() == {"": 1.0}


def test_census_no_slits():
    sys = StaircaseSystem(WidthSequence.constant(0), Direction(F(2, 7)))
    pts = [SectionPoint(0, F(i, 97)) for i in range(1, 150)]
    assert cylinder_census(sys, 12, pts).frequencies() == {"S" * 12: 1.0}


def test_census_needs_ring():
    with pytest.raises(ValueError):
        cylinder_census(StaircaseSystem(WidthSequence.constant(HALF), SLOPE), 3, 10, N=1)
    with pytest.raises(ValueError):
        cylinder_census(RING_SYS, 3, 10)


def test_census_json_roundtrip():
    c = cylinder_census(RING_SYS, 6, 500, N=1)
    assert Census.from_json(c.to_json()) == c
    assert abs(sum(c.frequencies().values()) - 1) < 1e-12


def test_census_stable_between_sample_sizes():
    small = cylinder_census(RING_SYS, 10, 10 ** 4, N=1, seed=0).frequencies()
    big = cylinder_census(RING_SYS, 10, 10 ** 5, N=1, seed=1).frequencies()
    words = set(small) | set(big)
    assert max(abs(small.get(w, 0) - big.get(w, 0)) for w in words) < 0.02
