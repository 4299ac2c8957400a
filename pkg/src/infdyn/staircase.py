"""Staircase surfaces and the exact first-return map to the section X.

The surface is modelled as a bi-infinite chain of flat tori of circumference
2, one per level, where torus ``k`` carries two horizontal slits on its
section-parallel circle:

* the lower slit ``u in (0, w[k-1])``, shared with torus ``k - 1``;
* the upper slit ``u in (2 - w[k], 2)``, shared with torus ``k + 1``.

Flowing through the lower slit shifts ``u`` by ``-w[k-1]`` and drops one
level, through the upper slit shifts by ``+w[k]`` and climbs one level; the
same pairing holds in both time directions.  This is the planar staircase
of 2x1 rectangles with opposite sides glued by vertical translation, written
in per-level coordinates (see :func:`flow_trace` for the planar picture).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

from .rational import TWO, InvalidScalar, as_fraction, mod2, to_str

HALF = Fraction(1, 2)

DECAY_RULES = {
    # w_k = 1/(|k| + 2)
    "inverse_abs_plus_two": lambda k: Fraction(1, abs(k) + 2),
}


# --------------------------------------------------------------------------
# Width sequences


@dataclass(frozen=True)
class Tail:
    """How a width sequence continues outside its explicit window."""

    kind: str  # "constant" | "zero" | "periodic" | "decay"
    value: Optional[Fraction] = None
    rule: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("constant", "zero", "periodic", "decay"):
            raise ValueError(f"unknown tail kind {self.kind!r}")
        if self.kind == "constant":
            if self.value is None:
                raise ValueError("constant tail needs a value")
            v = as_fraction(self.value)
            if not 0 <= v <= 1:
                raise ValueError(f"tail width {v} outside [0, 1]")
            object.__setattr__(self, "value", v)
        if self.kind == "decay" and self.rule not in DECAY_RULES:
            raise ValueError(f"unknown decay rule {self.rule!r}")

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "constant":
            out["value"] = to_str(self.value)
        if self.kind == "decay":
            out["rule"] = self.rule
        return out

    @classmethod
    def from_json(cls, data: dict) -> "Tail":
        kind = data["kind"]
        value = as_fraction(data["value"]) if "value" in data else None
        return cls(kind, value, data.get("rule"))


@dataclass(frozen=True)
class WidthSequence:
    """A total width function ``k -> w_k`` on all integer levels."""

    window_start: int
    window: tuple
    tail: Tail = field(default_factory=lambda: Tail("zero"))

    def __post_init__(self):
        window = tuple(as_fraction(v) for v in self.window)
        for v in window:
            if not 0 <= v <= 1:
                raise ValueError(f"width {v} outside [0, 1]")
        if self.tail.kind == "periodic" and not window:
            raise ValueError("periodic tail requires a non-empty window")
        object.__setattr__(self, "window", window)
        object.__setattr__(self, "window_start", int(self.window_start))

    def __call__(self, k: int) -> Fraction:
        i = k - self.window_start
        n = len(self.window)
        if 0 <= i < n:
            return self.window[i]
        kind = self.tail.kind
        if kind == "zero":
            return Fraction(0)
        if kind == "constant":
            return self.tail.value
        if kind == "periodic":
            return self.window[i % n]
        return DECAY_RULES[self.tail.rule](k)

    @property
    def period(self) -> Optional[int]:
        if self.tail.kind == "periodic":
            return len(self.window)
        if self.tail.kind in ("zero", "constant") and not self.window:
            return 1
        return None

    # constructors -----------------------------------------------------

    @classmethod
    def constant(cls, c) -> "WidthSequence":
        return cls(0, (as_fraction(c),), Tail("periodic"))

    @classmethod
    def periodic(cls, values, start: int = 0) -> "WidthSequence":
        return cls(start, tuple(values), Tail("periodic"))

    @classmethod
    def decay(cls) -> "WidthSequence":
        return cls(0, (), Tail("decay", rule="inverse_abs_plus_two"))

    @classmethod
    def ringed_at(cls, N: int, inner, outside=HALF) -> "WidthSequence":
        """Widths ``w_{-N} = w_N = 0`` with ``inner`` listing ``w_{-N+1..N-1}``.

        ``outside`` fills every level beyond the ring.
        """
        inner = tuple(as_fraction(v) for v in inner)
        if len(inner) != 2 * N - 1:
            raise ValueError(f"need {2 * N - 1} inner widths, got {len(inner)}")
        window = (Fraction(0),) + inner + (Fraction(0),)
        return cls(-N, window, Tail("constant", as_fraction(outside)))

    def with_widths(self, updates: dict) -> "WidthSequence":
        """Copy with selected levels overridden (window grows as needed)."""
        levels = set(updates) | set(range(self.window_start, self.window_start + len(self.window)))
        lo, hi = min(levels), max(levels)
        window = [as_fraction(updates[k]) if k in updates else self(k) for k in range(lo, hi + 1)]
        tail = self.tail
        if tail.kind == "periodic":
            # a periodic tail cannot survive an edit; freeze it over a wide band instead
            raise ValueError("cannot override levels of a periodic width sequence")
        return WidthSequence(lo, tuple(window), tail)

    # serialization ----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "window_start": self.window_start,
            "window": [to_str(v) for v in self.window],
            "tail": self.tail.to_json(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "WidthSequence":
        return cls(int(data["window_start"]), tuple(as_fraction(v) for v in data["window"]),
                   Tail.from_json(data.get("tail", {"kind": "zero"})))


def ringed(w: WidthSequence, N: int) -> bool:
    """True iff ``w_N = w_{-N} = 0`` and ``w_j`` avoids {0, 1} for ``|j| < N``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if w(N) != 0 or w(-N) != 0:
        return False
    return all(w(j) not in (0, 1) for j in range(-N + 1, N))


# --------------------------------------------------------------------------
# Directions, points, outcomes


@dataclass(frozen=True)
class Direction:
    """Slope ``tau`` = horizontal displacement per unit of vertical travel.

    ``vertical_sign = -1`` runs the flow backwards, i.e. selects the inverse
    return map.
    """

    slope: Fraction
    vertical_sign: int = 1

    def __post_init__(self):
        object.__setattr__(self, "slope", as_fraction(self.slope))
        if self.vertical_sign not in (1, -1):
            raise ValueError("vertical_sign must be +1 or -1")

    @property
    def delta(self) -> Fraction:
        """Horizontal displacement over half a level."""
        return self.slope / 2

    def reversed(self) -> "Direction":
        return Direction(self.slope, -self.vertical_sign)


@dataclass(frozen=True, order=True)
class SectionPoint:
    level: int
    x: Fraction

    def __post_init__(self):
        x = as_fraction(self.x)
        if not 0 <= x < 2:
            x = mod2(x)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "level", int(self.level))

    def __repr__(self):
        return f"SectionPoint({self.level}, {self.x})"


class Slit(enum.Enum):
    DOWN = "D"
    STAY = "S"
    UP = "U"

    @property
    def level_change(self) -> int:
        return {"D": -1, "S": 0, "U": 1}[self.value]


# singularity tags on a level's boundary circle
CORNER = "corner"  # u = 0 (= 2)
LOWER = "lower"  # u = w[k-1], far end of the slit to level k-1
UPPER = "upper"  # u = 2 - w[k], near end of the slit to level k+1


@dataclass(frozen=True)
class Moved:
    point: SectionPoint
    slit: Slit

    singular = False


@dataclass(frozen=True)
class SingularHit:
    level: int
    tags: tuple  # every tag whose location equals u (several at blocking points)
    u: Fraction

    singular = True


StepOutcome = Union[Moved, SingularHit]


def singular_u(w: WidthSequence, k: int) -> dict:
    """Tag -> boundary u-coordinate of the three cone points seen from level k."""
    return {CORNER: Fraction(0), LOWER: mod2(w(k - 1)), UPPER: mod2(TWO - w(k))}


def _tags_at(w, k, u):
    return tuple(tag for tag, loc in singular_u(w, k).items() if loc == u)


# --------------------------------------------------------------------------
# The return map


def step(w: WidthSequence, d: Direction, p: SectionPoint) -> StepOutcome:
    """One application of the first-return map in direction ``d``."""
    k, s = p.level, d.vertical_sign
    shift = s * d.delta
    u = mod2(p.x + shift)
    lower, upper = w(k - 1), TWO - w(k)
    if 0 < u < lower:
        return Moved(SectionPoint(k - 1, u - lower + shift), Slit.DOWN)
    if upper < u:
        return Moved(SectionPoint(k + 1, u + w(k) + shift), Slit.UP)
    if lower < u < upper:
        return Moved(SectionPoint(k, u + shift), Slit.STAY)
    return SingularHit(k, _tags_at(w, k, u), u)


def inverse_step(w: WidthSequence, d: Direction, p: SectionPoint) -> StepOutcome:
    return step(w, d.reversed(), p)


def sigma_points(w: WidthSequence, d: Direction, k: int) -> dict:
    """Tag -> section x on level k whose next crossing hits a cone point."""
    shift = d.vertical_sign * d.delta
    return {tag: mod2(u - shift) for tag, u in singular_u(w, k).items()}


# --------------------------------------------------------------------------
# Continuous flow in the planar picture


@dataclass
class FlowTrace:
    start: tuple  # planar starting point
    segments: list  # [((x0, y0), (x1, y1)), ...]; consecutive ones may jump across a gluing
    crossings: list  # SectionPoints met after the start, in order
    stop: str  # "budget" | "singular"
    singular_at: Optional[tuple] = None  # planar location of the cone point

    def points(self) -> list:
        """Polyline vertices (jumps appear as repeated breaks)."""
        pts = [self.start]
        for a, b in self.segments:
            if a != pts[-1]:
                pts.append(a)
            pts.append(b)
        return pts


class _Columns:
    """Left edges X_k of the planar rectangles, X_0 = 0."""

    def __init__(self, w):
        self.w = w
        self._x = {0: Fraction(0)}

    def __call__(self, k):
        xs = self._x
        if k in xs:
            return xs[k]
        if k > 0:
            top = max(j for j in xs if j <= k)
            for j in range(top, k):
                xs[j + 1] = xs[j] + TWO - self.w(j)
        else:
            bottom = min(j for j in xs if j >= k)
            for j in range(bottom, k, -1):
                xs[j - 1] = xs[j] - TWO + self.w(j - 1)
        return xs[k]


def flow_trace(w: WidthSequence, d: Direction, p: SectionPoint, height_budget) -> FlowTrace:
    """Follow the straight-line flow through the planar 2x1-rectangle staircase.

    Rectangle ``k`` is ``[X_k, X_k + 2] x [k - 1/2, k + 1/2]`` with
    ``X_{k+1} = X_k + 2 - w_k``.  Left and right sides of a rectangle are glued;
    an exposed top point is glued to the exposed bottom point straight below
    it.  Nothing here consults the case formulas of :func:`step`, so the
    section crossings are an independent check on it.
    """
    budget = as_fraction(height_budget)
    if budget < 0:
        raise ValueError("height_budget must be >= 0")
    X = _Columns(w)
    s = d.vertical_sign
    rate = s * d.slope  # horizontal motion per unit of vertical travel
    j, u, yl = p.level, p.x, Fraction(0)
    segments, crossings = [], []
    remaining = budget

    def planar(j, u, yl):
        return (X(j) + u, j + yl)

    def move(dv):
        # straight motion by vertical amount dv inside rectangle j, wrapping at side walls
        nonlocal u, yl
        while dv > 0:
            if rate > 0 and u >= 2:
                u -= 2
            elif rate < 0 and u <= 0:
                u += 2
            if rate > 0:
                to_wall = (2 - u) / rate
            elif rate < 0:
                to_wall = u / -rate
            else:
                to_wall = dv
            part = min(dv, to_wall)
            start = planar(j, u, yl)
            u += rate * part
            yl += s * part
            segments.append((start, planar(j, u, yl)))
            dv -= part

    origin = planar(j, u, yl)
    while True:
        # section -> rectangle edge
        half = min(HALF, remaining)
        move(half)
        remaining -= half
        if half < HALF:
            return FlowTrace(origin, segments, crossings, "budget")
        if u in (0, 2):
            return FlowTrace(origin, segments, crossings, "singular", planar(j, u, yl))
        gx = X(j) + u
        if s > 0:
            w_up = w(j)
            if u > 2 - w_up:
                j, u = j + 1, gx - X(j + 1)
            elif u == 2 - w_up:
                return FlowTrace(origin, segments, crossings, "singular", planar(j, u, yl))
            else:
                i = j
                while True:
                    lo, hi = X(i), X(i) + w(i - 1)
                    if gx == lo or gx == hi:
                        return FlowTrace(origin, segments, crossings, "singular", (gx, i - HALF))
                    if lo < gx < hi:
                        i -= 1
                        continue
                    break
                j, u = i, gx - X(i)
            yl = -HALF
        else:
            w_down = w(j - 1)
            if u < w_down:
                j, u = j - 1, gx - X(j - 1)
            elif u == w_down:
                return FlowTrace(origin, segments, crossings, "singular", planar(j, u, yl))
            else:
                i = j
                while True:
                    lo, hi = X(i) + 2 - w(i), X(i) + 2
                    if gx == lo or gx == hi:
                        return FlowTrace(origin, segments, crossings, "singular", (gx, i + HALF))
                    if lo < gx < hi:
                        i += 1
                        continue
                    break
                j, u = i, gx - X(i)
            yl = HALF
        # rectangle edge -> next section
        half = min(HALF, remaining)
        move(half)
        remaining -= half
        if half < HALF:
            return FlowTrace(origin, segments, crossings, "budget")
        crossings.append(SectionPoint(j, mod2(u)))
        if remaining == 0:
            return FlowTrace(origin, segments, crossings, "budget")
