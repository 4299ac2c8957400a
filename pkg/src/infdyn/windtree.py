"""Wind-tree tables: configurations of diagonal squares and the billiard map between them.

A tree is the closed L1 ball of diameter ``s`` about its center, so its
sides have slopes +1 and -1.  Vertices and sides are named by compass
direction::

        N
    NW / \\ NE
      W   E
    SW \\ / SE
        S

A billiard direction ``phi = (dx, dy)`` never parallel to a side visits at
most the four directions ``(c, s), (s, c), (-c, -s), (-s, -c)``.  They are
told apart by the signs of ``(dx + dy, dy - dx)``, the coordinates in the
frame of the tree diagonals: quadrant 1 = (+, +) points up, 2 left, 3 down,
4 right.  A direction of quadrant ``q`` leaves a tree through the two sides
meeting at the vertex it points to (N, W, S, E).  The boundary coordinate
on that pair is the projection onto the perpendicular diagonal, measured
from the start of the pair in counterclockwise order.

All geometry is exact (Fractions); only reported flight lengths and the
spherical metric are floats.
"""

from __future__ import annotations

import functools
import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .rational import as_fraction, to_str

Point = Tuple[Fraction, Fraction]

SIDES = ("NE", "NW", "SW", "SE")
NORMALS = {"NE": (1, 1), "NW": (-1, 1), "SW": (-1, -1), "SE": (1, -1)}
QUADRANT_SIDES = {1: ("NE", "NW"), 2: ("NW", "SW"), 3: ("SW", "SE"), 4: ("SE", "NE")}


class CornerError(ValueError):
    """A boundary state sits on a tree vertex where the side is ambiguous."""


def _pt(p) -> Point:
    return (as_fraction(p[0]), as_fraction(p[1]))


def l1(p: Point, q: Point = (0, 0)) -> Fraction:
    return abs(p[0] - q[0]) + abs(p[1] - q[1])


# --------------------------------------------------------------------------
# Directions


def quadrant(phi) -> int:
    dx, dy = phi
    u, v = dx + dy, dy - dx
    if u == 0 or v == 0:
        raise ValueError(f"direction {phi} is parallel to a tree side")
    if u > 0:
        return 1 if v > 0 else 4
    return 2 if v > 0 else 3


def reflect(phi, side: str):
    dx, dy = phi
    if side in ("NW", "SE"):  # slope +1
        return (dy, dx)
    return (-dy, -dx)  # slope -1


def direction_class(theta) -> Dict[int, Tuple[Fraction, Fraction]]:
    """The four directions reachable from ``theta``, keyed by quadrant."""
    c, s = _pt(theta)
    members = [(c, s), (s, c), (-c, -s), (-s, -c)]
    out = {quadrant(m): m for m in members}
    if len(out) != 4:
        raise ValueError(f"direction {theta} does not give four distinct directions")
    return out


# --------------------------------------------------------------------------
# Configurations


class Source:
    """Where centers come from.  Subclasses are immutable and pure."""

    def centers_in_region(self, xmin, xmax, ymin, ymax) -> List[Point]:
        raise NotImplementedError

    def bound(self) -> Optional[Fraction]:
        """An L1 radius containing every center, or None for infinite sources."""
        return None

    def min_separation(self) -> Optional[Fraction]:
        """A proven lower bound on L1 distances, when the source knows one."""
        return None

    def to_json(self) -> dict:
        raise NotImplementedError


class _Grid:
    """Spatial hash of a finite point set with square cells of side ``cell``."""

    def __init__(self, points: Sequence[Point], cell: Fraction):
        self.cell = cell
        self.cells: Dict[Tuple[int, int], List[Point]] = {}
        for p in points:
            self.cells.setdefault(self._key(p), []).append(p)

    def _key(self, p):
        return (math.floor(p[0] / self.cell), math.floor(p[1] / self.cell))

    def query(self, xmin, xmax, ymin, ymax) -> List[Point]:
        i0, j0 = self._key((xmin, ymin))
        i1, j1 = self._key((xmax, ymax))
        if (i1 - i0 + 1) * (j1 - j0 + 1) > 4 * len(self.cells) + 16:
            cand = [p for pts in self.cells.values() for p in pts]
        else:
            cand = []
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    cand.extend(self.cells.get((i, j), ()))
        return [p for p in cand if xmin <= p[0] <= xmax and ymin <= p[1] <= ymax]


@dataclass(frozen=True)
class Explicit(Source):
    centers: Tuple[Point, ...]

    def __post_init__(self):
        pts = tuple(sorted(set(_pt(c) for c in self.centers)))
        object.__setattr__(self, "centers", pts)

    @functools.cached_property
    def _grid(self):
        span = [abs(c) for p in self.centers for c in p]
        cell = max(Fraction(1), max(span, default=Fraction(1)) / 64)
        return _Grid(self.centers, cell)

    def centers_in_region(self, xmin, xmax, ymin, ymax):
        return sorted(self._grid.query(xmin, xmax, ymin, ymax))

    def bound(self):
        return max((l1(p) for p in self.centers), default=Fraction(0))

    def to_json(self):
        return {"kind": "explicit", "centers": [[to_str(x), to_str(y)] for x, y in self.centers]}


@dataclass(frozen=True)
class Lattice(Source):
    spacing: Fraction
    offset: Point = (Fraction(0), Fraction(0))

    def __post_init__(self):
        object.__setattr__(self, "spacing", as_fraction(self.spacing))
        object.__setattr__(self, "offset", _pt(self.offset))
        if self.spacing <= 0:
            raise ValueError("lattice spacing must be positive")

    def centers_in_region(self, xmin, xmax, ymin, ymax):
        h, (ox, oy) = self.spacing, self.offset
        i0, i1 = math.ceil((xmin - ox) / h), math.floor((xmax - ox) / h)
        j0, j1 = math.ceil((ymin - oy) / h), math.floor((ymax - oy) / h)
        return [(ox + i * h, oy + j * h) for i in range(i0, i1 + 1) for j in range(j0, j1 + 1)]

    def min_separation(self):
        return self.spacing

    def to_json(self):
        return {"kind": "lattice", "spacing": to_str(self.spacing),
                "offset": [to_str(self.offset[0]), to_str(self.offset[1])]}


@functools.lru_cache(maxsize=1 << 16)
def hash_displacement(p: Point, seed: int, amplitude: Fraction) -> Point:
    """Deterministic displacement in ``[-amplitude, amplitude]^2`` with denominator 2^16."""
    digest = hashlib.sha256(f"{seed}|{to_str(p[0])}|{to_str(p[1])}".encode()).digest()
    a = int.from_bytes(digest[:4], "big") % 65537
    b = int.from_bytes(digest[4:8], "big") % 65537
    return (amplitude * Fraction(2 * a - 65536, 65536), amplitude * Fraction(2 * b - 65536, 65536))


@functools.lru_cache(maxsize=1 << 16)
def _displaced(p: Point, seed: int, amplitude: Fraction) -> Point:
    dx, dy = hash_displacement(p, seed, amplitude)
    return (p[0] + dx, p[1] + dy)


@dataclass(frozen=True)
class Perturbed(Source):
    base: Source
    amplitude: Fraction
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "amplitude", as_fraction(self.amplitude))
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")

    def centers_in_region(self, xmin, xmax, ymin, ymax):
        a = self.amplitude
        out = []
        for p in self.base.centers_in_region(xmin - a, xmax + a, ymin - a, ymax + a):
            q = _displaced(p, self.seed, a)
            if xmin <= q[0] <= xmax and ymin <= q[1] <= ymax:
                out.append(q)
        return sorted(out)

    def bound(self):
        b = self.base.bound()
        return None if b is None else b + 2 * self.amplitude

    def min_separation(self):
        base = self.base.min_separation()
        return None if base is None else base - 4 * self.amplitude

    def to_json(self):
        return {"kind": "perturbed", "base": self.base.to_json(),
                "amplitude": to_str(self.amplitude), "seed": self.seed}


def ring_centers(n: int, s: Fraction) -> List[Point]:
    """The 8n centers covering ``|x| + |y| = n s``, counterclockwise from (ns, 0)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    s = as_fraction(s)
    half = s / 2
    edge = [(n * s - j * half, j * half) for j in range(2 * n)]  # (ns, 0) up to, not including, (0, ns)
    out = []
    for rot in range(4):
        for x, y in edge:
            for _ in range(rot):
                x, y = -y, x
            out.append((x, y))
    return out


@dataclass(frozen=True)
class Ringed(Source):
    n: int
    s: Fraction

    def __post_init__(self):
        object.__setattr__(self, "s", as_fraction(self.s))

    @functools.cached_property
    def _explicit(self):
        return Explicit(tuple(ring_centers(self.n, self.s)))

    def centers_in_region(self, xmin, xmax, ymin, ymax):
        return self._explicit.centers_in_region(xmin, xmax, ymin, ymax)

    def bound(self):
        return self.n * self.s

    def min_separation(self):
        return self.s

    def to_json(self):
        return {"kind": "ringed", "n": self.n, "s": to_str(self.s)}


@dataclass(frozen=True)
class Union_(Source):
    parts: Tuple[Source, ...]

    def centers_in_region(self, xmin, xmax, ymin, ymax):
        pts = set()
        for part in self.parts:
            pts.update(part.centers_in_region(xmin, xmax, ymin, ymax))
        return sorted(pts)

    def bound(self):
        bounds = [p.bound() for p in self.parts]
        return None if any(b is None for b in bounds) else max(bounds, default=Fraction(0))

    def to_json(self):
        return {"kind": "union", "parts": [p.to_json() for p in self.parts]}


class HardCoreViolation(ValueError):
    pass


@dataclass(frozen=True)
class Configuration:
    s: Fraction
    source: Source

    def __post_init__(self):
        object.__setattr__(self, "s", as_fraction(self.s))
        if self.s <= 0:
            raise ValueError("tree diameter must be positive")
        sep = self.source.min_separation()
        if sep is not None and sep < self.s:
            raise HardCoreViolation(f"source only guarantees separation {sep} < s = {self.s}")

    def centers_in_region(self, xmin, xmax, ymin, ymax, check: bool = True) -> List[Point]:
        pts = self.source.centers_in_region(*(as_fraction(v) for v in (xmin, xmax, ymin, ymax)))
        if check and self.source.min_separation() is None:
            check_hard_core(pts, self.s)
        return pts

    def to_json(self) -> dict:
        return {"s": to_str(self.s), "source": self.source.to_json()}

    @classmethod
    def from_json(cls, data: dict) -> "Configuration":
        return cls(as_fraction(data["s"]), source_from_json(data["source"], as_fraction(data["s"])))


def check_hard_core(points: Sequence[Point], s: Fraction) -> None:
    grid = _Grid(points, s)
    for p in points:
        for q in grid.query(p[0] - s, p[0] + s, p[1] - s, p[1] + s):
            if q != p and l1(p, q) < s:
                raise HardCoreViolation(f"centers {p} and {q} are closer than {s}")


def source_from_json(data: dict, s: Fraction) -> Source:
    kind = data["kind"]
    if kind == "explicit":
        return Explicit(tuple((as_fraction(x), as_fraction(y)) for x, y in data["centers"]))
    if kind == "lattice":
        return Lattice(as_fraction(data["spacing"]), _pt(data.get("offset", (0, 0))))
    if kind == "perturbed":
        return Perturbed(source_from_json(data["base"], s), as_fraction(data["amplitude"]), int(data.get("seed", 0)))
    if kind == "ringed":
        return Ringed(int(data["n"]), as_fraction(data.get("s", s)))
    if kind == "union":
        return Union_(tuple(source_from_json(p, s) for p in data["parts"]))
    raise ValueError(f"unknown configuration source {kind!r}")


def ringed_config(n: int, s) -> Configuration:
    s = as_fraction(s)
    return Configuration(s, Ringed(n, s))


def explicit(s, centers: Iterable) -> Configuration:
    return Configuration(as_fraction(s), Explicit(tuple(_pt(c) for c in centers)))


def empty(s=1) -> Configuration:
    return explicit(s, ())


# --------------------------------------------------------------------------
# Enumeration


def _angle_cmp(p: Point, q: Point) -> int:
    def half(v):
        x, y = v
        if x == 0 and y == 0:
            return -1
        return 0 if (y > 0 or (y == 0 and x > 0)) else 1

    hp, hq = half(p), half(q)
    if hp != hq:
        return -1 if hp < hq else 1
    if hp == -1:
        return 0
    cross = p[0] * q[1] - p[1] * q[0]
    return -1 if cross > 0 else (1 if cross < 0 else 0)


def _enum_cmp(p: Point, q: Point) -> int:
    dp, dq = l1(p), l1(q)
    if dp != dq:
        return -1 if dp < dq else 1
    c = _angle_cmp(p, q)
    if c:
        return c
    return (p > q) - (p < q)


def enumerate_trees(g: Configuration, R) -> List[Point]:
    """Centers with L1 distance at most R from the origin: by distance, then angle, then coordinates."""
    R = as_fraction(R)
    pts = [p for p in g.centers_in_region(-R, R, -R, R) if l1(p) <= R]
    return sorted(pts, key=functools.cmp_to_key(_enum_cmp))


class TreeIndex:
    """Lazy enumeration of a configuration, growing its radius on demand."""

    def __init__(self, g: Configuration):
        self.g = g
        self.radius = Fraction(-1)
        self.order: List[Point] = []
        self.rank: Dict[Point, int] = {}

    def _grow(self, radius):
        self.radius = as_fraction(radius)
        self.order = enumerate_trees(self.g, self.radius)
        self.rank = {p: i for i, p in enumerate(self.order)}

    def index_of(self, center: Point) -> int:
        center = _pt(center)
        if l1(center) > self.radius:
            self._grow(max(2 * self.radius, l1(center), self.g.s))
        try:
            return self.rank[center]
        except KeyError:
            raise KeyError(f"{center} is not a tree of the configuration") from None

    def center_of(self, i: int) -> Point:
        bound = self.g.source.bound()
        while i >= len(self.order):
            if bound is not None and self.radius >= bound:
                raise IndexError(f"configuration has only {len(self.order)} trees")
            self._grow(max(2 * self.radius, self.g.s))
        return self.order[i]


# --------------------------------------------------------------------------
# Tree geometry


def side_constant(c: Point, r: Fraction, side: str) -> Fraction:
    """Sides NE/SW lie on x + y = const, NW/SE on y - x = const."""
    cx, cy = c
    return {
        "NE": cx + cy + r,
        "SW": cx + cy - r,
        "NW": cy - cx + r,
        "SE": cy - cx - r,
    }[side]


def side_x_range(c: Point, r: Fraction, side: str) -> Tuple[Fraction, Fraction]:
    cx = c[0]
    return (cx, cx + r) if side in ("NE", "SE") else (cx - r, cx)


def vertices(c: Point, r: Fraction) -> List[Point]:
    cx, cy = c
    return [(cx + r, cy), (cx, cy + r), (cx - r, cy), (cx, cy - r)]


def chain_point(c: Point, r: Fraction, q: int, t: Fraction) -> Tuple[Point, Optional[str]]:
    """Boundary point at coordinate t of the outgoing pair for quadrant q, and its side (None at the middle vertex)."""
    cx, cy = c
    first, second = QUADRANT_SIDES[q]
    side = first if t < r else second if t > r else None
    if q == 1:
        x = cx + r - t
        y = cx + cy + r - x if t <= r else x + cy - cx + r
    elif q == 2:
        y = cy + r - t
        x = y - (cy - cx + r) if t <= r else cx + cy - r - y
    elif q == 3:
        x = cx - r + t
        y = cx + cy - r - x if t <= r else x + cy - cx - r
    else:
        y = cy - r + t
        x = y - (cy - cx - r) if t <= r else cx + cy + r - y
    return (x, y), side


def chain_coord(c: Point, r: Fraction, q: int, p: Point) -> Fraction:
    cx, cy = c
    x, y = p
    return {1: cx + r - x, 2: cy + r - y, 3: x - cx + r, 4: y - cy + r}[q]


def is_vertex(c: Point, r: Fraction, p: Point) -> bool:
    return p in vertices(c, r)


def ray_side_hit(P: Point, phi, c: Point, r: Fraction, side: str) -> Optional[Tuple[Fraction, Point]]:
    """First parameter lambda > 0 where P + lambda phi meets ``side`` from outside the tree."""
    nx, ny = NORMALS[side]
    if phi[0] * nx + phi[1] * ny >= 0:
        return None
    const = side_constant(c, r, side)
    if side in ("NE", "SW"):
        lam = (const - (P[0] + P[1])) / (phi[0] + phi[1])
    else:
        lam = (const - (P[1] - P[0])) / (phi[1] - phi[0])
    if lam <= 0:
        return None
    H = (P[0] + lam * phi[0], P[1] + lam * phi[1])
    lo, hi = side_x_range(c, r, side)
    if not lo <= H[0] <= hi:
        return None
    return lam, H


# --------------------------------------------------------------------------
# Billiard outcomes


@dataclass(frozen=True, order=True)
class BoundaryState:
    tree_index: int
    s_coord: Fraction
    quadrant: int


@dataclass(frozen=True)
class Hit:
    point: BoundaryState
    flight_length: float
    lam: Fraction  # exact flight parameter along the (unnormalized) direction vector
    center: Point
    side: str

    singular = False


@dataclass(frozen=True)
class CornerStop:
    corner: Point
    lam: Fraction

    singular = True


@dataclass(frozen=True)
class Escape:
    traveled: float

    singular = False


BilliardOutcome = Union[Hit, CornerStop, Escape]


@dataclass
class _RawHit:
    lam: Fraction
    point: Point
    center: Point
    side: str
    corner: bool


class WindtreeTable:
    """A configuration together with a direction class and an escape radius."""

    def __init__(self, g: Configuration, theta, R_max=None, chunk=None):
        self.g = g
        self.s = g.s
        self.r = g.s / 2
        self.dirs = direction_class(theta)
        self.theta = _pt(theta)
        self.R_max = as_fraction(R_max) if R_max is not None else 10_000 * g.s
        self.chunk = as_fraction(chunk) if chunk is not None else 4 * g.s
        self.index = TreeIndex(g)

    # geometry of states -------------------------------------------------

    def locate(self, b: BoundaryState) -> Tuple[Point, Point, Optional[str]]:
        """(center, boundary point, side) of a state."""
        if not 0 <= b.s_coord <= self.s:
            raise ValueError(f"s_coord {b.s_coord} outside [0, {self.s}]")
        c = self.index.center_of(b.tree_index)
        p, side = chain_point(c, self.r, b.quadrant, b.s_coord)
        return c, p, side

    def state_at(self, center: Point, p: Point, phi) -> BoundaryState:
        q = quadrant(phi)
        return BoundaryState(self.index.index_of(center), chain_coord(center, self.r, q, p), q)

    def direction(self, b: BoundaryState):
        return self.dirs[b.quadrant]

    # ray casting ----------------------------------------------------------

    def _best(self, P, phi, centers, lam_max=None) -> Optional[_RawHit]:
        """Nearest side hit among ``centers``; ties at one lambda are flagged as corners.

        Same computation as :func:`ray_side_hit`, unrolled: this is the inner
        loop of every billiard step.
        """
        fx, fy = (int(v) if v.denominator == 1 else v for v in map(as_fraction, phi))
        r = self.r
        px, py = P
        psum, pdiff = px + py, py - px
        dplus, dminus = fx + fy, fy - fx
        facing = [side for side in SIDES if NORMALS[side][0] * fx + NORMALS[side][1] * fy < 0]
        # a tree meets the line through P only if |phi x (c - P)| <= r |phi|_inf
        reach = r * max(abs(fx), abs(fy))
        best: Optional[_RawHit] = None
        corner_at_best = False
        for c in centers:
            cx, cy = c
            ux, uy = cx - px, cy - py
            if abs(fx * uy - fy * ux) > reach or fx * ux + fy * uy < -reach:
                continue
            for side in facing:
                if side == "NE":
                    lam = (cx + cy + r - psum) / dplus
                elif side == "SW":
                    lam = (cx + cy - r - psum) / dplus
                elif side == "NW":
                    lam = (cy - cx + r - pdiff) / dminus
                else:
                    lam = (cy - cx - r - pdiff) / dminus
                if lam <= 0 or (lam_max is not None and lam > lam_max):
                    continue
                if best is not None and lam > best.lam:
                    continue
                hx = px + lam * fx
                lo, hi = (cx, cx + r) if side in ("NE", "SE") else (cx - r, cx)
                if not lo <= hx <= hi:
                    continue
                H = (hx, py + lam * fy)
                corner = hx == lo or hx == hi  # the ends of a side are vertices
                if best is None or lam < best.lam:
                    best = _RawHit(lam, H, c, side, corner)
                    corner_at_best = corner
                else:
                    corner_at_best = corner_at_best or corner or H != best.point
        if best is not None and corner_at_best:
            best.corner = True
        return best

    def cast(self, P: Point, phi) -> Optional[_RawHit]:
        """First tree boundary met by the open ray from P; None past R_max."""
        sup = max(abs(phi[0]), abs(phi[1]))
        step = self.chunk / sup
        pad = self.r
        lam0 = Fraction(0)
        limit = self.R_max / sup
        while lam0 < limit:
            lam1 = lam0 + step
            xs = (P[0] + lam0 * phi[0], P[0] + lam1 * phi[0])
            ys = (P[1] + lam0 * phi[1], P[1] + lam1 * phi[1])
            centers = self.g.centers_in_region(min(xs) - pad, max(xs) + pad, min(ys) - pad, max(ys) + pad)
            best = self._best(P, phi, centers, lam1)
            if best is not None:
                return best
            lam0 = lam1
        return None

    def cast_linear(self, P: Point, phi, centers: Sequence[Point]) -> Optional[_RawHit]:
        """Oracle: test every given tree."""
        return self._best(P, phi, centers)

    # the billiard map ---------------------------------------------------

    def step(self, b: BoundaryState) -> BilliardOutcome:
        c, P, _ = self.locate(b)
        phi = self.direction(b)
        hit = self.cast(P, phi)
        if hit is None:
            return Escape(float(self.R_max))
        if hit.corner:
            return CornerStop(hit.point, hit.lam)
        out = reflect(phi, hit.side)
        nb = self.state_at(hit.center, hit.point, out)
        return Hit(nb, float(hit.lam) * math.hypot(float(phi[0]), float(phi[1])), hit.lam, hit.center, hit.side)

    def reverse(self, b: BoundaryState) -> BoundaryState:
        """Same point, direction that retraces the arrival: ``-reflect(phi)`` across the state's side."""
        c, P, side = self.locate(b)
        if side is None:
            raise CornerError("state sits on the middle vertex of its side pair")
        if b.s_coord in (0, self.s):
            raise CornerError("state sits on an end vertex of its side pair")
        ref = reflect(self.direction(b), side)
        back = (-ref[0], -ref[1])
        return BoundaryState(b.tree_index, chain_coord(c, self.r, quadrant(back), P), quadrant(back))

    def backward_step(self, b: BoundaryState) -> BilliardOutcome:
        out = self.step(self.reverse(b))
        if isinstance(out, Hit):
            rb = self.reverse(out.point)
            return Hit(rb, out.flight_length, out.lam, out.center, out.side)
        return out


def billiard_step(g: Configuration, theta, b: BoundaryState, R_max=None) -> BilliardOutcome:
    return WindtreeTable(g, theta, R_max).step(b)


# --------------------------------------------------------------------------
# Interval transport


def transverse_width(table: WindtreeTable, b_lo: BoundaryState, b_hi: BoundaryState) -> Fraction:
    """Flow-transverse width of the boundary segment between two states of one chain.

    This (up to the constant |phi|) is the quantity the billiard map
    preserves: ``|phi x (P_hi - P_lo)|`` summed over the sides crossed.
    """
    if (b_lo.tree_index, b_lo.quadrant) != (b_hi.tree_index, b_hi.quadrant):
        raise ValueError("states lie on different chains")
    c = table.index.center_of(b_lo.tree_index)
    phi = table.direction(b_lo)
    ts = sorted([b_lo.s_coord, b_hi.s_coord])
    r = table.r
    if ts[0] < r < ts[1]:
        ts = [ts[0], r, ts[1]]
    total = Fraction(0)
    for t0, t1 in zip(ts, ts[1:]):
        p0, _ = chain_point(c, r, b_lo.quadrant, t0)
        p1, _ = chain_point(c, r, b_lo.quadrant, t1)
        total += abs(phi[0] * (p1[1] - p0[1]) - phi[1] * (p1[0] - p0[0]))
    return total


def _strip_corners(table: WindtreeTable, c: Point, q: int, a: Fraction, b: Fraction, lam_max: Fraction):
    """Singular coordinates in (a, b) whose corner lies within ``lam_max`` along the ray."""
    r, phi = table.r, table.dirs[q]
    pa, _ = chain_point(c, r, q, a)
    pb, _ = chain_point(c, r, q, b)
    pts = [pa, pb, (pa[0] + lam_max * phi[0], pa[1] + lam_max * phi[1]),
           (pb[0] + lam_max * phi[0], pb[1] + lam_max * phi[1])]
    xs, ys = [p[0] for p in pts], [p[1] for p in pts]
    found = set()
    for tc in table.g.centers_in_region(min(xs) - r, max(xs) + r, min(ys) - r, max(ys) + r):
        if tc == c:
            continue
        for V in vertices(tc, r):
            t = _back_project(c, r, q, phi, V)
            if t is None or not a < t < b:
                continue
            P, _ = chain_point(c, r, q, t)
            hit = table.cast(P, phi)
            if hit is not None and hit.corner and hit.point == V:
                found.add(t)
    # the middle vertex of the pair is itself a corner
    if a < r < b:
        found.add(r)
    return sorted(found)


def _back_project(c, r, q, phi, V) -> Optional[Fraction]:
    """Coordinate t on the chain whose ray through phi passes V (None if V is behind)."""
    for side in QUADRANT_SIDES[q]:
        const = side_constant(c, r, side)
        # solve P = V - mu phi on the side line, mu > 0
        if side in ("NE", "SW"):
            den = phi[0] + phi[1]
            mu = ((V[0] + V[1]) - const) / den
        else:
            den = phi[1] - phi[0]
            mu = ((V[1] - V[0]) - const) / den
        if mu <= 0:
            continue
        P = (V[0] - mu * phi[0], V[1] - mu * phi[1])
        lo, hi = side_x_range(c, r, side)
        if lo <= P[0] <= hi:
            return chain_coord(c, r, q, P)
    return None


def windtree_pieces(table: WindtreeTable, b: BoundaryState, a: Fraction, bb: Fraction) -> List[Fraction]:
    """Cut points of (a, bb) on the chain of ``b`` where the billiard map is discontinuous."""
    c = table.index.center_of(b.tree_index)
    q, phi = b.quadrant, table.dirs[b.quadrant]
    lam = 2 * table.s / max(abs(phi[0]), abs(phi[1]))
    limit = table.R_max / max(abs(phi[0]), abs(phi[1]))
    pending = [(a, bb)]
    cuts: set = set()
    while pending:
        todo = []
        for lo, hi in pending:
            inner = _strip_corners(table, c, q, lo, hi, lam)
            cuts.update(inner)
            edges = [lo] + inner + [hi]
            for x0, x1 in zip(edges, edges[1:]):
                P, _ = chain_point(c, table.r, q, (x0 + x1) / 2)
                hit = table.cast(P, phi)
                if hit is not None and hit.lam > lam:
                    todo.append((x0, x1))
        if todo and lam >= limit:
            break
        lam *= 2
        pending = todo
    return sorted(cuts)


@dataclass
class TransportedPiece:
    source: Tuple[Fraction, Fraction]
    target: Tuple[BoundaryState, BoundaryState]  # images of the piece's two ends (limits from inside)
    width_in: Fraction
    width_out: Fraction


def pushforward_chain_interval(table: WindtreeTable, b: BoundaryState, a, bb) -> List[TransportedPiece]:
    """Transport ``[a, bb]`` on the chain of ``b`` one step, piece by piece.

    On each continuity piece the map is affine; the end images are
    extrapolated from two interior points, and both widths are reported.
    """
    a, bb = as_fraction(a), as_fraction(bb)
    cuts = windtree_pieces(table, b, a, bb)
    edges = [a] + cuts + [bb]
    out = []
    for lo, hi in zip(edges, edges[1:]):
        imgs = []
        for t in (lo + (hi - lo) / 3, lo + 2 * (hi - lo) / 3):
            res = table.step(BoundaryState(b.tree_index, t, b.quadrant))
            if not isinstance(res, Hit):
                raise ValueError(f"interior point {t} of a continuity piece did not hit a side")
            imgs.append(res.point)
        i1, i2 = imgs
        if (i1.tree_index, i1.quadrant) != (i2.tree_index, i2.quadrant):
            raise ValueError("continuity piece straddles two chains")
        slope = (i2.s_coord - i1.s_coord) / ((hi - lo) / 3)
        t_lo = i1.s_coord - slope * ((hi - lo) / 3)
        t_hi = i2.s_coord + slope * ((hi - lo) / 3)
        img_lo = BoundaryState(i1.tree_index, t_lo, i1.quadrant)
        img_hi = BoundaryState(i1.tree_index, t_hi, i1.quadrant)
        w_in = transverse_width(table, BoundaryState(b.tree_index, lo, b.quadrant),
                                BoundaryState(b.tree_index, hi, b.quadrant))
        out.append(TransportedPiece((lo, hi), (img_lo, img_hi), w_in, transverse_width(table, img_lo, img_hi)))
    return out


# --------------------------------------------------------------------------
# Configuration space metric


def _sphere(p: Point) -> Tuple[float, float, float]:
    x, y = float(p[0]), float(p[1])
    r = math.hypot(x, y)
    colat = 2 * math.atan2(1.0, r)  # 2 arctan(1/r), equal to pi at the origin
    lon = math.atan2(y, x)
    return (math.sin(colat) * math.cos(lon), math.sin(colat) * math.sin(lon), math.cos(colat))


NORTH = (0.0, 0.0, 1.0)


def _geodesic(u, v) -> float:
    cross = (u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0])
    return math.atan2(math.sqrt(sum(c * c for c in cross)), sum(a * b for a, b in zip(u, v)))


def _projected(g: Configuration, R: Fraction):
    pts = [p for p in g.centers_in_region(-R, R, -R, R) if p[0] ** 2 + p[1] ** 2 <= R * R]
    return [NORTH] + [_sphere(p) for p in pts]


def _directed(A, B) -> float:
    return max(min(_geodesic(a, b) for b in B) for a in A)


def hausdorff_distance(g1: Configuration, g2: Configuration, R) -> Tuple[float, float]:
    """Hausdorff distance of the projected, north-pole-completed sets, truncated at radius R.

    Returns ``(distance, truncation_bound)``: every center farther than R lies
    within ``2 arctan(1/R)`` of the north pole, so the untruncated value differs
    by at most that bound.
    """
    R = as_fraction(R)
    A, B = _projected(g1, R), _projected(g2, R)
    d = max(_directed(A, B), _directed(B, A))
    bound = 2 * math.atan2(1.0, float(R)) if R > 0 else math.pi
    return d, bound


# --------------------------------------------------------------------------
# Ring diagnostics


def ring_side_crossings(center: Point, r: Fraction, n: int, s: Fraction) -> List[Tuple[str, Point]]:
    """Points where the ring line ``|x| + |y| = ns`` meets the tree boundary, with the side of each."""
    found = []
    for side in SIDES:
        lo, hi = side_x_range(center, r, side)
        const = side_constant(center, r, side)
        # sample the side as a segment and intersect with each of the four ring edges
        if side in ("NE", "SW"):
            p0, p1 = (lo, const - lo), (hi, const - hi)
        else:
            p0, p1 = (lo, const + lo), (hi, const + hi)
        for sx, sy in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
            # ring edge: sx x + sy y = ns with sx x >= 0, sy y >= 0
            f0 = sx * p0[0] + sy * p0[1] - n * s
            f1 = sx * p1[0] + sy * p1[1] - n * s
            if f0 == f1:
                if f0 == 0:
                    found.append((side, None))  # the side runs along the ring line
                continue
            t = f0 / (f0 - f1)
            if not 0 <= t <= 1:
                continue
            X = (p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1]))
            if sx * X[0] >= 0 and sy * X[1] >= 0:
                found.append((side, X))
    uniq = []
    for item in found:
        if item not in uniq:
            uniq.append(item)
    return uniq


def side_midpoint(center: Point, r: Fraction, side: str) -> Point:
    cx, cy = center
    h = r / 2
    return {"NE": (cx + h, cy + h), "NW": (cx - h, cy + h), "SW": (cx - h, cy - h), "SE": (cx + h, cy - h)}[side]


OPPOSITE = {"NE": "SW", "SW": "NE", "NW": "SE", "SE": "NW"}


# --------------------------------------------------------------------------
# Section-system view


class WindtreeSystem:
    """The billiard map as a section system: components are ``(tree_index, quadrant)``."""

    def __init__(self, table: WindtreeTable):
        self.table = table

    def forward(self, p: BoundaryState):
        return self.table.step(p)

    def backward(self, p: BoundaryState):
        return self.table.backward_step(p)

    def measure(self, component) -> Fraction:
        return self.table.s

    def make_point(self, component, coord) -> BoundaryState:
        return BoundaryState(component[0], as_fraction(coord), component[1])

    def component_of(self, p: BoundaryState):
        return (p.tree_index, p.quadrant)

    def singular_points(self, component) -> List[Fraction]:
        b = self.make_point(component, 0)
        return [Fraction(0)] + windtree_pieces(self.table, b, Fraction(0), self.table.s) + [self.table.s]

    def piece_image(self, component, a, b):
        (piece,) = pushforward_chain_interval(self.table, self.make_point(component, a), a, b)
        lo, hi = piece.target
        return [((lo.tree_index, lo.quadrant), min(lo.s_coord, hi.s_coord), max(lo.s_coord, hi.s_coord))]

    def weight(self, component, a, b) -> Fraction:
        return transverse_width(self.table, self.make_point(component, a), self.make_point(component, b))
