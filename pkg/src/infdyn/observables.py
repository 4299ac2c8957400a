"""Test functions, Hopf ratio averages and the genericity checks built on them.

The test-function family is fixed once and for all: on every level of the
ring a dyadic tent (height 1, half-width one grid cell, wrapping around the
circle) plus an optional constant floor ``2^-q`` on the whole ring.  Members
are enumerated by :func:`family_member`, so an experiment can name its
functions by index and be reproduced exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .engine import LatticeMap
from .rational import TWO, as_fraction
from .singular import (
    MatchFailed,
    SaddleConnectionFound,
    detect_saddle,
    continuity_partition,
    perturb_ring,
    ring_levels,
    separation_iota,
    zeta_map,
)
from .staircase import Direction, Moved, SectionPoint, WidthSequence, step


class DenominatorZero(ZeroDivisionError):
    pass


# --------------------------------------------------------------------------
# Test functions


@dataclass(frozen=True)
class Tent:
    level: int
    r: int  # grid of 2^r cells on [0, 2)
    i: int  # peak at node i * 2 / 2^r
    height: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "height", as_fraction(self.height))
        if self.r < 1:
            raise ValueError("tents need at least two grid cells")
        if not 0 <= self.i < 2 ** self.r:
            raise ValueError("tent node out of range")

    @property
    def cell(self) -> Fraction:
        return TWO / 2 ** self.r

    def value(self, x: Fraction) -> Fraction:
        peak = self.i * self.cell
        dist = (x - peak) % TWO
        dist = min(dist, TWO - dist)
        if dist >= self.cell:
            return Fraction(0)
        return self.height * (1 - dist / self.cell)

    def integral(self) -> Fraction:
        return self.height * self.cell


@dataclass(frozen=True)
class TestFunction:
    """Sum of tents plus ``floor`` on every level of ``support``."""

    support: Tuple[int, ...]
    tents: Tuple[Tent, ...] = ()
    floor: Fraction = Fraction(0)

    __test__ = False  # keep pytest from collecting the class

    def __post_init__(self):
        object.__setattr__(self, "floor", as_fraction(self.floor))
        object.__setattr__(self, "support", tuple(self.support))
        for t in self.tents:
            if t.level not in self.support:
                raise ValueError(f"tent on level {t.level} outside the support")

    def value(self, p: SectionPoint) -> Fraction:
        if p.level not in self.support:
            return Fraction(0)
        return self.floor + sum((t.value(p.x) for t in self.tents if t.level == p.level), Fraction(0))

    def integral(self) -> Fraction:
        return self.floor * TWO * len(self.support) + sum((t.integral() for t in self.tents), Fraction(0))

    def scaled(self, c) -> "TestFunction":
        c = as_fraction(c)
        tents = tuple(Tent(t.level, t.r, t.i, t.height * c) for t in self.tents)
        return TestFunction(self.support, tents, self.floor * c)

    @property
    def resolution(self) -> int:
        return max([t.r for t in self.tents], default=0)

    def nodes(self, r: int, level: int) -> np.ndarray:
        """Values at the 2^r + 1 grid nodes of [0, 2] on one level (piecewise linear between)."""
        M = 2 ** r
        out = np.zeros(M + 1)
        if level not in self.support:
            return out
        out += float(self.floor)
        for t in self.tents:
            if t.level != level:
                continue
            for node in range(M + 1):
                out[node] += float(t.value(Fraction(2 * node, M)))
        return out


def tabulate(functions: Sequence[TestFunction]) -> Tuple[np.ndarray, int]:
    """Node tables for the engine: shape (functions, levels, 2^r + 1) and the first level."""
    r = max([f.resolution for f in functions], default=0)
    r = max(r, 1)
    levels = sorted({k for f in functions for k in f.support})
    if not levels:
        return np.zeros((len(functions), 1, 2 ** r + 1)), 0
    lo, hi = levels[0], levels[-1]
    tables = np.zeros((len(functions), hi - lo + 1, 2 ** r + 1))
    for a, f in enumerate(functions):
        for k in range(lo, hi + 1):
            tables[a, k - lo] = f.nodes(r, k)
    return tables, lo


def family_member(N: int, j: int, q: int = 3) -> TestFunction:
    """The ``j``-th function of the fixed dense family on the ring of size N (j >= 0).

    Enumeration: j = 0 is the bare floor; after that resolution r = 1, 2, 3, ...
    and within a resolution level-major then node order, each tent sitting
    on the floor ``2^-q``.
    """
    levels = tuple(ring_levels(N))
    floor = Fraction(1, 2 ** q)
    if j == 0:
        return TestFunction(levels, (), floor)
    j -= 1
    for r in itertools.count(1):
        block = len(levels) * 2 ** r
        if j < block:
            level = levels[j // 2 ** r]
            return TestFunction(levels, (Tent(level, r, j % 2 ** r),), floor)
        j -= block
    raise AssertionError("unreachable")


def quadrature_integral(f: TestFunction, r: int = 16) -> float:
    """Trapezoid rule on a fine dyadic grid; exact for grids finer than every tent."""
    total = 0.0
    for k in f.support:
        vals = f.nodes(max(r, f.resolution), k)
        h = 2.0 / (len(vals) - 1)
        total += h * (vals.sum() - 0.5 * (vals[0] + vals[-1]))
    return total


# --------------------------------------------------------------------------
# Hopf averages


@dataclass
class RatioReport:
    checkpoints: List[int]
    numerator: List[float]
    denominator: List[float]
    target: Fraction
    direction_sign: int = 1
    truncated: bool = False

    @property
    def ratio(self) -> List[float]:
        return [n / d for n, d in zip(self.numerator, self.denominator)]

    def rows(self):
        t = float(self.target)
        for ell, n, d in zip(self.checkpoints, self.numerator, self.denominator):
            yield ell, n, d, n / d, t, abs(n / d - t)


def default_checkpoints(ell: int) -> List[int]:
    cps = [10 ** e for e in range(2, 30) if 10 ** e < ell]
    return cps + [ell]


def _staircase_of(sys):
    w, d = getattr(sys, "w", None), getattr(sys, "d", None)
    if not isinstance(w, WidthSequence) or not isinstance(d, Direction):
        raise TypeError("Hopf averages are implemented for staircase systems")
    return w, d


def lattice_for_orbits(w: WidthSequence, d: Direction, points, ell: int) -> LatticeMap:
    reach = ell + max([abs(p.level) for p in points], default=0) + 2
    if w.period:
        return LatticeMap(w, d, extra=[p.x for p in points])
    return LatticeMap(w, d, -reach, reach, [p.x for p in points])


def hopf_sums(w: WidthSequence, d: Direction, functions: Sequence[TestFunction], points,
              checkpoints: Sequence[int]) -> np.ndarray:
    """Float partial sums, shape (points, functions, checkpoints); NaN after a singular stop."""
    points = list(points)
    if not points:
        return np.zeros((0, len(functions), len(checkpoints)))
    tables, tlo = tabulate(functions)
    lattice = lattice_for_orbits(w, d, points, max(checkpoints))
    out, _ = lattice.hopf_sums(points, tables, tlo, checkpoints)
    return out


def _exact_sums(w, d, fj, fn, z, checkpoints):
    nums, dens = [], []
    num = den = Fraction(0)
    p = z
    last = max(checkpoints)
    cps = set(checkpoints)
    truncated = False
    for i in range(last + 1):
        if i > 0:
            out = step(w, d, p)
            if not isinstance(out, Moved):
                truncated = True
                break
            p = out.point
        num += fj.value(p)
        den += fn.value(p)
        if i in cps:
            nums.append(num)
            dens.append(den)
    return nums, dens, truncated


def hopf_average(sys, h_j: TestFunction, h_n: TestFunction, z: SectionPoint, ell: int,
                 sign: int = 1, checkpoints: Optional[Sequence[int]] = None,
                 backend: str = "float64") -> RatioReport:
    """``sum_{k<=l} h_j(T^k z) / sum_{k<=l} h_n(T^k z)`` at each checkpoint (``T^-1`` if sign = -1)."""
    w, d = _staircase_of(sys)
    if sign == -1:
        d = d.reversed()
    elif sign != 1:
        raise ValueError("sign must be +1 or -1")
    cps = sorted(checkpoints) if checkpoints else default_checkpoints(ell)
    target = h_j.integral() / h_n.integral()
    if backend == "rational":
        nums, dens, truncated = _exact_sums(w, d, h_j, h_n, z, cps)
        cps = cps[: len(nums)]
    elif backend == "float64":
        sums = hopf_sums(w, d, [h_j, h_n], [z], cps)[0]
        ok = ~np.isnan(sums[0])
        truncated = not ok.all()
        cps = [c for c, good in zip(cps, ok) if good]
        nums = [float(v) for v in sums[0][ok]]
        dens = [float(v) for v in sums[1][ok]]
    else:
        raise ValueError(f"unknown backend {backend!r}")
    for c, den in zip(cps, dens):
        if den == 0:
            raise DenominatorZero(f"h_n orbit sum vanishes at l = {c}")
    return RatioReport(list(cps), nums, dens, target, sign, truncated)


@dataclass
class UniformProfile:
    ells: List[int]
    sup_deviation: List[float]
    skipped: int  # grid points dropped because their orbit hit a singularity


def uniform_hopf_profile(sys, h_j: TestFunction, h_n: TestFunction, ell_list: Sequence[int],
                         grid: Sequence[SectionPoint], sign: int = 1,
                         gate: Optional[Tuple[int, int]] = None) -> UniformProfile:
    """``sup_z |H_l(z) - target|`` over a grid, for each l.

    ``gate = (N, ell)`` first runs :func:`detect_saddle` and raises
    :class:`SaddleConnectionFound` if the direction carries a short connection.
    """
    w, d = _staircase_of(sys)
    if gate is not None:
        witness = detect_saddle(w, d, *gate)
        if witness is not None:
            raise SaddleConnectionFound(witness)
    if sign == -1:
        d = d.reversed()
    ells = sorted(ell_list)
    target = float(h_j.integral() / h_n.integral())
    sums = hopf_sums(w, d, [h_j, h_n], grid, ells)
    good = ~np.isnan(sums).any(axis=(1, 2))
    num, den = sums[good, 0, :], sums[good, 1, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        dev = np.abs(num / den - target)
    sup = [float(v) for v in dev.max(axis=0)] if dev.size else [0.0] * len(ells)
    return UniformProfile(ells, sup, int((~good).sum()))


# --------------------------------------------------------------------------
# The uniqueness criterion, checked on samples


FORWARD_OK, BACKWARD_OK, FAIL = "forward-ok", "backward-ok", "fail"


@dataclass
class CriterionReport:
    verdicts: List[str]
    deviations: List[Tuple[float, float]]  # worst relative deviation (forward, backward) per point

    @property
    def certified_fraction(self) -> float:
        if not self.verdicts:
            return 1.0
        return sum(v != FAIL for v in self.verdicts) / len(self.verdicts)

    @property
    def certified(self) -> bool:
        return all(v != FAIL for v in self.verdicts)


def uniqueness_criterion_check(sys, pairs: Sequence[Tuple[TestFunction, TestFunction]],
                               z_sample: Sequence[SectionPoint], ell_list: Sequence[int],
                               tol: float) -> CriterionReport:
    """Per point: do all pairs' forward (else backward) Hopf ratios sit within ``tol`` of the target?

    ``tol`` is relative and must hold at every listed l.
    """
    w, d = _staircase_of(sys)
    z_sample = list(z_sample)
    if not pairs:
        return CriterionReport([FORWARD_OK] * len(z_sample), [(0.0, 0.0)] * len(z_sample))
    funcs, index = [], {}
    for f in (f for pair in pairs for f in pair):
        if f not in index:
            index[f] = len(funcs)
            funcs.append(f)
    ells = sorted(ell_list)
    worst = {}
    for sign, dd in ((1, d), (-1, d.reversed())):
        sums = hopf_sums(w, dd, funcs, z_sample, ells)
        dev = np.zeros(len(z_sample))
        for hj, hn in pairs:
            target = float(hj.integral() / hn.integral())
            with np.errstate(divide="ignore", invalid="ignore"):
                r = sums[:, index[hj], :] / sums[:, index[hn], :]
                rel = np.abs(r / target - 1)
            rel = np.where(np.isfinite(rel), rel, np.inf)
            dev = np.maximum(dev, rel.max(axis=1))
        worst[sign] = dev
    verdicts, devs = [], []
    for i in range(len(z_sample)):
        f, b = float(worst[1][i]), float(worst[-1][i])
        verdicts.append(FORWARD_OK if f <= tol else BACKWARD_OK if b <= tol else FAIL)
        devs.append((f, b))
    return CriterionReport(verdicts, devs)


# --------------------------------------------------------------------------
# Genericity scale checks


@dataclass
class GenericityReport:
    radius: Fraction
    min_inner_width: Fraction
    eta_ringed: Fraction
    eta: Fraction
    iota_ringed: Fraction
    iota: Fraction
    a2_deviation: float  # smallest gamma that passes A2 is anything above this
    gamma: float
    new_intervals: int
    details: Dict[str, object] = field(default_factory=dict)

    @property
    def A0(self) -> bool:
        return self.radius < self.min_inner_width

    @property
    def A1(self) -> bool:
        return self.eta > self.eta_ringed / 2

    @property
    def A2(self) -> bool:
        return self.a2_deviation < self.gamma

    @property
    def A3(self) -> bool:
        return self.iota > self.iota_ringed / 2

    @property
    def all_pass(self) -> bool:
        return self.A0 and self.A1 and self.A2 and self.A3

    def as_dict(self) -> dict:
        return {
            "A0": self.A0, "A1": self.A1, "A2": self.A2, "A3": self.A3,
            "radius": str(self.radius), "min_inner_width": str(self.min_inner_width),
            "eta_ringed": str(self.eta_ringed), "eta": str(self.eta),
            "iota_ringed": str(self.iota_ringed), "iota": str(self.iota),
            "a2_deviation": self.a2_deviation, "gamma": self.gamma,
            "new_intervals": self.new_intervals,
        }


def perturbation_radius(w_ringed: WidthSequence, w: WidthSequence, levels: Iterable[int]) -> Fraction:
    return max(abs(w(k) - w_ringed(k)) for k in levels)


def default_pairs(N: int) -> List[Tuple[TestFunction, TestFunction]]:
    """Six fixed pairs from the family: tents against the floor and against each other."""
    m = family_member
    return [
        (m(N, 1), m(N, 0)),
        (m(N, 2), m(N, 0)),
        (m(N, 5), m(N, 0)),
        (m(N, 8), m(N, 0)),
        (m(N, 3), m(N, 4)),
        (m(N, 7), m(N, 12)),
    ]


def _a2_deviation(w_ringed, w, d, N, ell, pairs, sign):
    Z = zeta_map(w_ringed, w, d, N, ell, sign)
    dd = d if sign == 1 else d.reversed()
    src = [SectionPoint(s.level, s.midpoint) for s, _ in Z.pairs]
    dst = [SectionPoint(t.level, t.midpoint) for _, t in Z.pairs]
    funcs, index = [], {}
    for f in (f for pair in pairs for f in pair):
        if f not in index:
            index[f] = len(funcs)
            funcs.append(f)
    a = hopf_sums(w, dd, funcs, src, [ell])[:, :, 0]
    b = hopf_sums(w_ringed, dd, funcs, dst, [ell])[:, :, 0]
    worst = 0.0
    for hj, hn in pairs:
        ha = a[:, index[hj]] / a[:, index[hn]]
        hb = b[:, index[hj]] / b[:, index[hn]]
        diff = np.abs(ha - hb)
        diff = np.where(np.isfinite(diff), diff, np.inf)
        if diff.size:
            worst = max(worst, float(diff.max()))
    return worst, Z


def genericity_scale_check(w_ringed: WidthSequence, w: WidthSequence, d_set: Sequence[Direction],
                           N: int, ell: int, gamma: float,
                           pairs: Optional[Sequence[Tuple[TestFunction, TestFunction]]] = None) -> GenericityReport:
    """A0 to A3 for one perturbation of a ringed parameter over a set of directions.

    A1 uses the matched intervals only: the intervals born from split
    blocking points are as small as the perturbation and are not part of
    the domain where the comparison is made.
    """
    pairs = default_pairs(N) if pairs is None else list(pairs)
    inner = range(-N + 1, N)
    radius = perturbation_radius(w_ringed, w, range(-N, N + 1))
    min_inner = min(w_ringed(k) for k in inner)
    eta_r = eta = iota_r = iota = None
    dev = 0.0
    new = 0
    for d in d_set:
        for sign in (1, -1):
            dev_s, Z = _a2_deviation(w_ringed, w, d, N, ell, pairs, sign)
            dev = max(dev, dev_s)
            new = max(new, len(Z.new_intervals))
            e = min(s.length for s, _ in Z.pairs)
            eta = e if eta is None else min(eta, e)
            dd = d if sign == 1 else d.reversed()
            er = continuity_partition(w_ringed, dd, N, ell).min_gap
            eta_r = er if eta_r is None else min(eta_r, er)
        i_r = separation_iota(w_ringed, d, N, ell)
        i_w = separation_iota(w, d, N, ell)
        iota_r = i_r if iota_r is None else min(iota_r, i_r)
        iota = i_w if iota is None else min(iota, i_w)
    return GenericityReport(radius, min_inner, eta_r, eta, iota_r, iota, dev, float(gamma), new)
