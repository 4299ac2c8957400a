import random
from fractions import Fraction as F

import pytest

from infdyn.engine import OK, SINGULAR, LatticeMap, lattice_for, tag_of
from infdyn.staircase import Direction, Moved, SectionPoint, SingularHit, Tail, WidthSequence, step


def random_case(rng):
    den = rng.choice([7, 12, 30, 97])
    ws = tuple(F(rng.randrange(den + 1), den) for _ in range(9))
    w = WidthSequence(-4, ws, Tail("constant", F(rng.randrange(den + 1), den)))
    d = Direction(F(rng.randrange(-4 * den, 4 * den), den), rng.choice([1, -1]))
    p = SectionPoint(rng.randint(-3, 3), F(rng.randrange(2 * den), den))
    return w, d, p


def exact_orbit(w, d, p, n):
    pts = []
    for _ in range(n):
        out = step(w, d, p)
        if not isinstance(out, Moved):
            return pts, out
        p = out.point
        pts.append(p)
    return pts, None


@pytest.mark.parametrize("compiled", [True, False])
def test_engine_matches_exact_step(compiled):
    rng = random.Random(11)
    for _ in range(150):
        w, d, p = random_case(rng)
        lat = lattice_for(w, d, [p])
        if not compiled:
            lat.compiled = False
        arr = lat.orbit(p, 60)
        pts, stop = exact_orbit(w, d, p, 60)
        assert [arr.point(i) for i in range(len(arr))] == pts
        if stop is None:
            assert arr.status == OK
        else:
            assert arr.status == SINGULAR
            assert set(tag_of(lat, stop.level, arr.singular_u)) == set(stop.tags)


def test_words_match_level_changes():
    w = WidthSequence.periodic([F(1, 3), F(2, 5)])
    d = Direction(F(2 * 4021, 10007))
    starts = [SectionPoint(k, F(i, 10007)) for k in (-1, 0, 2) for i in (1, 500, 9000)]
    lat = lattice_for(w, d, starts)
    for p, wd in zip(starts, lat.words(starts, 300)):
        pts, _ = exact_orbit(w, d, p, 300)
        levels = [p.level] + [q.level for q in pts]
        assert list(wd) == [b - a for a, b in zip(levels, levels[1:])]


def test_off_lattice_point_is_rejected():
    lat = LatticeMap(WidthSequence.constant(F(1, 2)), Direction(F(1, 2)))
    with pytest.raises(ValueError):
        lat.to_int(F(1, 3))


def test_one_sided_limits_pass_a_singular_point():
    w, d = WidthSequence.constant(F(1, 2)), Direction(F(1, 2))
    # x = 2 - w - delta runs into the upper slit end; both one-sided limits survive
    x = F(5, 4)
    assert isinstance(step(w, d, SectionPoint(0, x)), SingularHit)
    lat = lattice_for(w, d, [SectionPoint(0, x)])
    left, right = lat.words([SectionPoint(0, x)], 1, side=-1), lat.words([SectionPoint(0, x)], 1, side=1)
    assert len(left[0]) == 1 and len(right[0]) == 1
    assert left[0][0] != right[0][0]
    assert len(lat.words([SectionPoint(0, x)], 1)[0]) == 0


def test_huge_denominator_uses_python_path():
    big = 2 ** 62 + 1
    w, d = WidthSequence.constant(F(1, 3)), Direction(F(2 * 12345, big))
    p = SectionPoint(0, F(1, 3))
    lat = lattice_for(w, d, [p])
    assert not lat.compiled
    arr = lat.orbit(p, 25)
    assert [arr.point(i) for i in range(len(arr))] == exact_orbit(w, d, p, 25)[0]
