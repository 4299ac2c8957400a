"""Piecewise isometries on countable unions of circles.

Both the staircase return map and the wind-tree billiard map are exposed
through :class:`SectionSystem`: a component index, a circumference per
component, the finite list of points on each component where the forward
map is discontinuous, and a translation law on the pieces in between.
Everything here is generic over that interface.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Iterable, List, Optional, Sequence, Tuple

from .rational import TWO, as_fraction
from .staircase import (
    Direction,
    Moved,
    SectionPoint,
    WidthSequence,
    inverse_step,
    sigma_points,
    step,
)

Arc = Tuple[Hashable, Fraction, Fraction]  # (component, a, b) with a < b


class SectionSystem:
    """Interface shared by the staircase and wind-tree section maps."""

    def forward(self, p):
        raise NotImplementedError

    def backward(self, p):
        raise NotImplementedError

    def measure(self, component) -> Fraction:
        raise NotImplementedError

    def singular_points(self, component) -> List[Fraction]:
        """Coordinates on ``component`` where the forward map is undefined."""
        raise NotImplementedError

    def piece_image(self, component, a: Fraction, b: Fraction) -> List[Arc]:
        """Image of an open arc ``(a, b)`` containing no singular point."""
        raise NotImplementedError

    def make_point(self, component, coord):
        raise NotImplementedError

    def component_of(self, p):
        raise NotImplementedError

    def weight(self, component, a: Fraction, b: Fraction) -> Fraction:
        """Invariant measure of the arc ``(a, b)``; plain length unless overridden."""
        return b - a


class StaircaseSystem(SectionSystem):
    def __init__(self, w: WidthSequence, d: Direction):
        self.w, self.d = w, d

    def forward(self, p):
        return step(self.w, self.d, p)

    def backward(self, p):
        return inverse_step(self.w, self.d, p)

    def measure(self, component) -> Fraction:
        return TWO

    def singular_points(self, component) -> List[Fraction]:
        return sorted(set(sigma_points(self.w, self.d, component).values()))

    def make_point(self, component, coord):
        return SectionPoint(component, coord)

    def component_of(self, p):
        return p.level

    def piece_image(self, component, a, b):
        mid = (a + b) / 2
        out = step(self.w, self.d, SectionPoint(component, mid))
        if not isinstance(out, Moved):
            raise ValueError(f"singular point inside the piece ({a}, {b}) on level {component}")
        start = (out.point.x - (mid - a)) % TWO
        return _arcs_on_circle(out.point.level, start, b - a, TWO)

    def reversed(self) -> "StaircaseSystem":
        return StaircaseSystem(self.w, self.d.reversed())


def _arcs_on_circle(component, start, length, circumference) -> List[Arc]:
    end = start + length
    if end <= circumference:
        return [(component, start, end)]
    return [(component, start, circumference), (component, Fraction(0), end - circumference)]


# --------------------------------------------------------------------------
# Orbits


@dataclass
class OrbitRecord:
    start: object
    outcomes: list = field(default_factory=list)
    termination: str = "budget"  # "budget" | "singular" | "escape"

    def points(self) -> list:
        return [o.point for o in self.outcomes if isinstance(o, Moved) or hasattr(o, "point")]

    def __len__(self):
        return len(self.outcomes)


def orbit(sys: SectionSystem, p, budget: int) -> OrbitRecord:
    """Exact forward iteration, stopping early only at a singular hit."""
    if budget < 0:
        raise ValueError("budget must be >= 0")
    rec = OrbitRecord(p)
    cur = p
    for _ in range(budget):
        out = sys.forward(cur)
        rec.outcomes.append(out)
        if getattr(out, "singular", False):
            rec.termination = "singular"
            break
        if not hasattr(out, "point"):
            rec.termination = "escape"
            break
        cur = out.point
    return rec


def reverse_orbit(sys: SectionSystem, rec: OrbitRecord) -> list:
    """Walk a completed orbit backwards; returns the points from the end to the start."""
    pts = rec.points()
    if not pts:
        return [rec.start]
    path = [pts[-1]]
    cur = pts[-1]
    for _ in range(len(pts)):
        out = sys.backward(cur)
        if getattr(out, "singular", False) or not hasattr(out, "point"):
            break
        cur = out.point
        path.append(cur)
    return path


# --------------------------------------------------------------------------
# Interval transport and boxes


def pushforward_interval(sys: SectionSystem, component, interval) -> List[Arc]:
    """Split ``[a, b)`` at the discontinuities and translate each piece."""
    a, b = (as_fraction(v) for v in interval)
    if not 0 <= a < b <= sys.measure(component):
        raise ValueError(f"bad interval [{a}, {b}) on component {component}")
    cuts = [c for c in sys.singular_points(component) if a < c < b]
    edges = [a] + cuts + [b]
    images: List[Arc] = []
    for lo, hi in zip(edges, edges[1:]):
        images.extend(sys.piece_image(component, lo, hi))
    return images


def arc_length(arcs: Iterable[Arc], sys: Optional[SectionSystem] = None) -> Fraction:
    """Total measure of arcs, weighted by ``sys.weight`` when a system is given."""
    if sys is None:
        return sum((b - a for _, a, b in arcs), Fraction(0))
    return sum((sys.weight(c, a, b) for c, a, b in arcs), Fraction(0))


def box_escape_measure(sys: SectionSystem, Y: Iterable, _cache: Optional[dict] = None) -> Fraction:
    """Exact measure of ``T(Y) minus Y`` for a finite set of components."""
    Y = set(Y)
    cache = {} if _cache is None else _cache
    leaked = Fraction(0)
    for comp in sorted(Y):
        if comp not in cache:
            cache[comp] = pushforward_interval(sys, comp, (0, sys.measure(comp)))
        for c, a, b in cache[comp]:
            if c not in Y:
                leaked += b - a
    return leaked


def staircase_escape_closed_form(w: WidthSequence, Y: Iterable[int]) -> Fraction:
    """Escape measure from slit widths alone: up-slits into ``k+1`` and down-slits into ``k-1``."""
    Y = set(Y)
    total = Fraction(0)
    for k in Y:
        if k + 1 not in Y:
            total += w(k)
        if k - 1 not in Y:
            total += w(k - 1)
    return total


def symmetric_boxes(m_values: Sequence[int], lo_offset: int = 1) -> List[range]:
    """Boxes ``{-m + lo_offset, ..., m}`` for each m."""
    return [range(-m + lo_offset, m + 1) for m in m_values]


DISCLAIMER = (
    "finite-depth check of the box-sequence hypothesis; conservativity itself "
    "is a limit statement and is not proved by this computation"
)


@dataclass
class ConservativityReport:
    epsilon: Fraction
    escapes: List[Fraction]
    sizes: List[int]
    finite_measure: bool
    increasing: bool
    growing: bool
    certified_from: Optional[int]  # first box index from which every escape is <= epsilon
    disclaimer: str = DISCLAIMER

    @property
    def satisfied(self) -> bool:
        return self.certified_from is not None and self.finite_measure and self.growing


def certify_conservativity(sys: SectionSystem, boxes: Sequence[Iterable], epsilon) -> ConservativityReport:
    """Evaluate the three box-sequence conditions on a finite list of boxes."""
    boxes = [frozenset(b) for b in boxes]
    if not boxes:
        raise ValueError("box sequence is empty")
    for small, big in zip(boxes, boxes[1:]):
        if not small <= big:
            raise ValueError("box sequence is not increasing")
    eps = as_fraction(epsilon)
    images: dict = {}
    escapes = [box_escape_measure(sys, b, images) for b in boxes]
    finite = all(len(b) < float("inf") and all(sys.measure(c) < float("inf") for c in b) for b in boxes)
    certified = None
    for i in range(len(escapes) - 1, -1, -1):
        if escapes[i] <= eps:
            certified = i
        else:
            break
    return ConservativityReport(
        epsilon=eps,
        escapes=escapes,
        sizes=[len(b) for b in boxes],
        finite_measure=finite,
        increasing=True,
        growing=len(boxes) == 1 or len(boxes[-1]) > len(boxes[0]),
        certified_from=certified,
    )
