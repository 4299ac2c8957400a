"""Singular sets, continuity partitions and the matching maps between them.

Identities
----------
A singular point is identified by the cone point its orbit runs into:
an *atom* ``(level, tag)`` with tag in {corner, lower, upper}.  When two
cone points sit at the same place (a zero width), the point carries both
atoms and is called blocking.  A cut of the continuity partition is the
``j``-th backward image of a singular point and is identified by
``(atoms, j)``; pairing partitions across parameters goes through these
identities, never through positions.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .rational import TWO, circle_distance
from .staircase import Direction, Moved, SectionPoint, WidthSequence, inverse_step, sigma_points, step


class SaddleConnectionFound(Exception):
    def __init__(self, witness: "SaddleWitness"):
        super().__init__(
            f"saddle connection: {witness.start} -> {witness.end} after {witness.steps} steps"
        )
        self.witness = witness


class MatchFailed(Exception):
    pass


@dataclass(frozen=True)
class SaddleWitness:
    start: tuple  # atoms of the cone point the segment leaves (or, backwards, enters)
    steps: int  # section crossings strictly between the two cone points
    end: tuple  # atoms of the other cone point


def ring_levels(N: int) -> range:
    return range(-N + 1, N + 1)


# --------------------------------------------------------------------------
# Sigma sets


@dataclass(frozen=True)
class SigmaPoint:
    level: int
    x: Fraction
    atoms: Tuple[Tuple[int, str], ...]

    @property
    def blocking(self) -> bool:
        return len(self.atoms) > 1


@dataclass
class SingularSet:
    points: Dict[int, List[SigmaPoint]]

    def all(self) -> List[SigmaPoint]:
        return [p for k in sorted(self.points) for p in self.points[k]]

    def blocking(self) -> List[SigmaPoint]:
        return [p for p in self.all() if p.blocking]


def _sigma_on(w, d, levels) -> SingularSet:
    out = {}
    for k in levels:
        by_x: Dict[Fraction, list] = {}
        for tag, x in sigma_points(w, d, k).items():
            by_x.setdefault(x, []).append((k, tag))
        out[k] = [SigmaPoint(k, x, tuple(atoms)) for x, atoms in sorted(by_x.items())]
    return SingularSet(out)


def sigma_set(w: WidthSequence, d: Direction, N: int) -> SingularSet:
    """Points of the ring whose next crossing runs into a cone point."""
    return _sigma_on(w, d, ring_levels(N))


# --------------------------------------------------------------------------
# Continuity partitions


@dataclass(frozen=True, order=True)
class Cut:
    level: int
    x: Fraction
    atoms: Tuple[Tuple[int, str], ...]
    j: int

    @property
    def identity(self):
        return (self.atoms, self.j)


@dataclass(frozen=True)
class Interval:
    level: int
    a: Fraction  # left cut position
    b: Fraction  # right cut position, lifted so that b >= a (may exceed 2)
    left: Cut
    right: Cut

    @property
    def length(self) -> Fraction:
        return self.b - self.a

    @property
    def midpoint(self) -> Fraction:
        return ((self.a + self.b) / 2) % TWO


@dataclass
class ContinuityPartition:
    levels: range
    ell: int
    cuts: Dict[int, List[Cut]]
    intervals: List[Interval]

    @property
    def min_gap(self) -> Fraction:
        return min(iv.length for iv in self.intervals)

    def total_length(self) -> Fraction:
        return sum((iv.length for iv in self.intervals), Fraction(0))

    def all_cuts(self) -> List[Cut]:
        return [c for k in sorted(self.cuts) for c in self.cuts[k]]

    def locate(self, level: int, x: Fraction) -> Optional[Interval]:
        """The interval whose interior contains (level, x); None on a cut."""
        for iv in self.intervals:
            if iv.level != level:
                continue
            if iv.a < x < iv.b or iv.a < x + 2 < iv.b:
                return iv
        return None


def _backward_cuts(w, d, levels, ell) -> List[Cut]:
    inside = set(levels)
    cuts = []
    for sp in _sigma_on(w, d, levels).all():
        p = SectionPoint(sp.level, sp.x)
        for j in range(ell + 1):
            if p.level in inside:
                cuts.append(Cut(p.level, p.x, sp.atoms, j))
            if j == ell:
                break
            out = inverse_step(w, d, p)
            if not isinstance(out, Moved):
                raise SaddleConnectionFound(
                    SaddleWitness(sp.atoms, j, tuple((out.level, t) for t in out.tags))
                )
            p = out.point
    return cuts


def _intervals(cuts_by_level) -> List[Interval]:
    intervals = []
    for k in sorted(cuts_by_level):
        row = cuts_by_level[k]
        n = len(row)
        for i, c in enumerate(row):
            nxt = row[(i + 1) % n]
            b = nxt.x if i + 1 < n else nxt.x + TWO
            intervals.append(Interval(k, c.x, b, c, nxt))
    return intervals


def continuity_partition(w: WidthSequence, d: Direction, N: int, ell: int,
                         levels: Optional[range] = None) -> ContinuityPartition:
    """Cut the ring at the backward images ``T^-j`` of its singular set, ``j = 0..ell``.

    Orbits are followed on the whole staircase; only cuts inside the ring are
    kept.  ``levels`` overrides the ring window.
    """
    if ell < 0:
        raise ValueError("ell must be >= 0")
    levels = ring_levels(N) if levels is None else levels
    by_level: Dict[int, List[Cut]] = {k: [] for k in levels}
    for c in _backward_cuts(w, d, levels, ell):
        by_level[c.level].append(c)
    for k in by_level:
        by_level[k].sort()
    by_level = {k: v for k, v in by_level.items() if v}
    return ContinuityPartition(levels, ell, by_level, _intervals(by_level))


def min_gap_or_zero(w, d, N, ell) -> Fraction:
    try:
        return continuity_partition(w, d, N, ell).min_gap
    except SaddleConnectionFound:
        return Fraction(0)


def continuity_witness(part: ContinuityPartition, w: WidthSequence, d: Direction,
                       depth: Optional[int] = None) -> List[Interval]:
    """Intervals whose inward endpoint limits disagree within ``depth`` steps.

    Both one-sided orbits and the midpoint orbit are run on the lattice
    engine; an empty list means every interval passed.
    """
    from .engine import LatticeMap

    depth = part.ell if depth is None else depth
    ivs = part.intervals
    reach = depth + max(abs(k) for k in part.levels) + 2
    lefts = [SectionPoint(iv.level, iv.a) for iv in ivs]
    rights = [SectionPoint(iv.level, iv.b % TWO) for iv in ivs]
    mids = [SectionPoint(iv.level, iv.midpoint) for iv in ivs]
    lattice = LatticeMap(w, d, -reach, reach, [p.x for p in lefts + rights + mids])
    wl = lattice.words(lefts, depth, side=1)
    wr = lattice.words(rights, depth, side=-1)
    wm = lattice.words(mids, depth, side=0)
    bad = []
    for iv, a, b, m in zip(ivs, wl, wr, wm):
        if len(a) != depth or len(b) != depth or len(m) != depth:
            bad.append(iv)
        elif not ((a == b).all() and (a == m).all()):
            bad.append(iv)
    return bad


# --------------------------------------------------------------------------
# Saddle connections and separation


def detect_saddle(w: WidthSequence, d: Direction, N: int, ell: int) -> Optional[SaddleWitness]:
    """Search for a cone-to-cone segment of at most ``ell`` steps leaving the ring's cone points.

    Runs forward from the points that have just left a cone point, which is
    the time reverse of how :func:`continuity_partition` finds the same
    connections.
    """
    rev = d.reversed()
    for k in ring_levels(N):
        by_x: Dict[Fraction, list] = {}
        for tag, x in sigma_points(w, rev, k).items():
            by_x.setdefault(x, []).append((k, tag))
        for x, atoms in sorted(by_x.items()):
            p = SectionPoint(k, x)
            for m in range(ell):
                out = step(w, d, p)
                if not isinstance(out, Moved):
                    return SaddleWitness(tuple(atoms), m, tuple((out.level, t) for t in out.tags))
                p = out.point
    return None


def _forward_images(w, d, levels, ell) -> List[Cut]:
    return _backward_cuts(w, d.reversed(), levels, ell)


def separation_iota(w: WidthSequence, d: Direction, N: int, ell: int) -> Fraction:
    """Least circle distance between backward singular orbits and forward ones, ``ell`` steps each.

    Zero means the two families share a point, i.e. a saddle connection of
    length at most ``2 ell``.
    """
    levels = ring_levels(N)
    plus = _backward_cuts(w, d, levels, ell)
    minus = _forward_images(w, d, levels, ell)
    best = None
    by_level: Dict[int, List[Fraction]] = {}
    for c in minus:
        by_level.setdefault(c.level, []).append(c.x)
    for k in by_level:
        by_level[k].sort()
    for c in plus:
        row = by_level.get(c.level)
        if not row:
            continue
        i = bisect.bisect_left(row, c.x)
        for cand in (row[i % len(row)], row[i - 1]):
            dist = circle_distance(c.x, cand)
            if best is None or dist < best:
                best = dist
    if best is None:
        raise ValueError("no singular points inside the ring")
    return best


# --------------------------------------------------------------------------
# Matching maps


@dataclass
class MatchingMap:
    pairs: List[Tuple[Interval, Interval]]  # (interval for w, interval for the ringed parameter)
    new_intervals: List[Interval]
    sup_deviation: Fraction
    direction_sign: int = 1

    def domain_complement_measure(self) -> Fraction:
        return sum((iv.length for iv in self.new_intervals), Fraction(0))

    def apply(self, level: int, x: Fraction) -> Optional[SectionPoint]:
        """Affine image of (level, x); None where the map is undefined."""
        for src, dst in self.pairs:
            if src.level != level:
                continue
            for lift in (x, x + TWO):
                if src.a < lift < src.b:
                    t = (lift - src.a) / src.length
                    return SectionPoint(dst.level, (dst.a + t * dst.length) % TWO)
        return None


def _lifted_distance(a, b):
    return circle_distance(a % TWO, b % TWO)


def zeta_map(w_ringed: WidthSequence, w: WidthSequence, d: Direction, N: int, ell: int,
             direction_sign: int = 1) -> MatchingMap:
    """Pair continuity intervals of ``w`` with those of the ringed parameter by cut identity.

    Intervals of ``w`` whose two ends come from the same blocking cut are the
    ones born when a blocking point splits; they are reported separately and
    stay outside the domain.
    """
    if direction_sign not in (1, -1):
        raise ValueError("direction_sign must be +1 or -1")
    dd = d if direction_sign == 1 else d.reversed()
    ref = continuity_partition(w_ringed, dd, N, ell)
    per = continuity_partition(w, dd, N, ell)

    owner: Dict[tuple, Cut] = {}
    for c in ref.all_cuts():
        for atom in c.atoms:
            owner[(atom, c.j)] = c
    ref_by_ends = {}
    for iv in ref.intervals:
        ref_by_ends[(iv.left, iv.right)] = iv
    single = {k for k, row in ref.cuts.items() if len(row) == 1}

    def home(c: Cut) -> Cut:
        homes = {owner.get((atom, c.j)) for atom in c.atoms}
        if len(homes) != 1 or None in homes:
            raise MatchFailed(f"cut {c} has no counterpart for the ringed parameter")
        return homes.pop()

    pairs, new = [], []
    used = set()
    for iv in per.intervals:
        A, B = home(iv.left), home(iv.right)
        if A == B and iv.left != iv.right and not (iv.level in single and iv.length > 1):
            new.append(iv)
            continue
        target = ref_by_ends.get((A, B))
        if target is None or target.level != iv.level:
            raise MatchFailed(f"interval {iv.a}..{iv.b} on level {iv.level} matches nothing")
        if (A, B) in used:
            raise MatchFailed("two intervals map onto the same ringed interval")
        used.add((A, B))
        pairs.append((iv, target))

    dev = Fraction(0)
    for src, dst in pairs:
        dev = max(dev, _lifted_distance(src.a, dst.a), _lifted_distance(src.b, dst.b))
    return MatchingMap(pairs, new, dev, direction_sign)


def perturb_ring(w_ringed: WidthSequence, N: int, eps) -> WidthSequence:
    """Open both ring walls to width ``eps``."""
    return w_ringed.with_widths({N: eps, -N: eps})
