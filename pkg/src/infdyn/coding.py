"""Itineraries through continuity pieces and the shift they conjugate to."""

from __future__ import annotations

import json
import random
from bisect import bisect_left
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .engine import LatticeMap
from .observables import lattice_for_orbits
from .section import SectionSystem, StaircaseSystem
from .singular import ring_levels
from .staircase import Moved, SectionPoint, ringed, step

LETTERS = {-1: "D", 0: "S", 1: "U"}
MODES = ("slit", "refined", "piece")


@dataclass(frozen=True)
class Itinerary:
    word: Tuple
    complete: bool  # False when the orbit hit a singularity before reaching the depth
    mode: str = "slit"

    def __len__(self):
        return len(self.word)

    def shift(self) -> "Itinerary":
        return Itinerary(self.word[1:], self.complete, self.mode)

    @property
    def text(self) -> str:
        return "".join(str(s) for s in self.word)


class _PieceLabels:
    """Index of the continuity piece holding a coordinate, cached per component."""

    def __init__(self, sys: SectionSystem):
        self.sys = sys
        self.cache: Dict = {}

    def __call__(self, comp, coord) -> int:
        cuts = self.cache.get(comp)
        if cuts is None:
            cuts = self.cache[comp] = sorted(set(self.sys.singular_points(comp)))
        return bisect_left(cuts, coord)


def _coord(p):
    return p.x if isinstance(p, SectionPoint) else p.s_coord


def itinerary(sys: SectionSystem, z, depth: int, mode: str = "slit",
              _labels: Optional[_PieceLabels] = None) -> Itinerary:
    """Labels of the pieces visited by ``z, T z, ..., T^{depth-1} z``.

    ``slit`` uses the staircase letters D/S/U, ``refined`` appends the index
    of the one-step continuity piece on the current level, and ``piece``
    uses ``(component, piece index)`` for any section system.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if mode not in MODES:
        raise ValueError(f"unknown alphabet mode {mode!r}")
    if mode != "piece" and not isinstance(sys, StaircaseSystem):
        raise TypeError("slit letters exist only for staircase systems")
    labels = _labels or _PieceLabels(sys)
    word = []
    cur = z
    for _ in range(depth):
        out = sys.forward(cur)
        if getattr(out, "singular", False) or not hasattr(out, "point"):
            return Itinerary(tuple(word), False, mode)
        comp = sys.component_of(cur)
        if mode == "piece":
            word.append((comp, labels(comp, _coord(cur))))
        else:
            letter = out.slit.value
            word.append(letter if mode == "slit" else f"{letter}{labels(comp, cur.x)}")
        cur = out.point
    return Itinerary(tuple(word), True, mode)


def itineraries(sys: StaircaseSystem, points: Sequence[SectionPoint], depth: int,
                lattice: Optional[LatticeMap] = None) -> List[Itinerary]:
    """Slit itineraries of many points at once on the integer engine."""
    points = list(points)
    if not points:
        return []
    lat = lattice or lattice_for_orbits(sys.w, sys.d, points, depth)
    words = lat.words(points, depth)
    return [Itinerary(tuple(LETTERS[int(v)] for v in wd), len(wd) == depth) for wd in words]


@dataclass
class ConjugacyReport:
    checked: int
    mismatches: int
    skipped: int  # starts whose first step is singular

    @property
    def holds(self) -> bool:
        return self.mismatches == 0


def shift_conjugacy_check(sys: StaircaseSystem, points: Sequence[SectionPoint], depth: int) -> ConjugacyReport:
    """Compare ``itinerary(T z, depth)`` with ``shift(itinerary(z, depth + 1))`` by two separate runs."""
    starts, images = [], []
    skipped = 0
    for z in points:
        out = step(sys.w, sys.d, z)
        if isinstance(out, Moved):
            starts.append(z)
            images.append(out.point)
        else:
            skipped += 1
    lat = lattice_for_orbits(sys.w, sys.d, starts + images, depth + 1)
    long_words = lat.words(starts, depth + 1)
    short_words = lat.words(images, depth)
    bad = 0
    for lw, sw in zip(long_words, short_words):
        complete = len(lw) == depth + 1
        if complete and not np.array_equal(lw[1:], sw):
            bad += 1
        elif not complete and not np.array_equal(lw[1:], sw[: max(len(lw) - 1, 0)]):
            bad += 1
    return ConjugacyReport(len(starts), bad, skipped)


# --------------------------------------------------------------------------
# Cylinder census


@dataclass
class Census:
    depth: int
    counts: Dict[str, int]

    def frequencies(self) -> Dict[str, float]:
        total = sum(self.counts.values())
        return {k: v / total for k, v in sorted(self.counts.items())} if total else {}

    def to_json(self) -> str:
        return json.dumps({"depth": self.depth, "counts": dict(sorted(self.counts.items()))}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Census":
        data = json.loads(text)
        return cls(int(data["depth"]), {str(k): int(v) for k, v in data["counts"].items()})


def random_ring_points(N: int, n: int, seed: int = 0, denominator: int = 2 ** 20) -> List[SectionPoint]:
    """``n`` reproducible lattice points spread over the levels of the N-ring."""
    rng = random.Random(seed)
    levels = ring_levels(N)
    return [SectionPoint(rng.choice(levels), Fraction(rng.randrange(2 * denominator), denominator))
            for _ in range(n)]


def cylinder_census(sys: StaircaseSystem, depth: int, sample: Union[int, Sequence[SectionPoint]],
                    N: Optional[int] = None, seed: int = 0) -> Census:
    """Counts of completed depth-``depth`` slit words over a sample of the compact ring.

    ``sample`` is either explicit points or a count, in which case points are
    drawn with :func:`random_ring_points` (and ``N`` is required).
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if isinstance(sample, int):
        if N is None:
            raise ValueError("a sample size needs the ring size N")
        points = random_ring_points(N, sample, seed)
    else:
        points = list(sample)
    if N is not None and not ringed(sys.w, N):
        raise ValueError(f"width sequence is not {N}-ringed")
    if depth == 0:
        return Census(0, {"": len(points)} if points else {})
    counts = Counter(it.text for it in itineraries(sys, points, depth) if it.complete)
    return Census(depth, dict(counts))
