"""Periodic staircases as skew products, conformal measures and Maharam measures.

For a ``p``-periodic width sequence the level shift by ``p`` commutes with
the return map, so the map factors through the base ``{0..p-1} x [0, 2)``.
Writing ``psi`` for the level change of one step gives the skew product
``(x, n) -> (tau x, n + psi x)`` with ``n`` counting periods crossed.

A measure ``mu`` on the base with ``mu(tau A) = int_A e^{a psi} d mu`` turns
into the invariant measure ``e^{-a n} d mu(x)`` upstairs; two values of
``a`` give two invariant measures that are not multiples of each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .rational import TWO, as_fraction
from .section import StaircaseSystem
from .staircase import Direction, Moved, SectionPoint, WidthSequence, step


class NonConvergence(RuntimeError):
    def __init__(self, message, residuals):
        super().__init__(message)
        self.residuals = list(residuals)


@dataclass(frozen=True)
class Piece:
    comp: int
    a: Fraction
    b: Fraction
    psi: int  # periods crossed: -1, 0 or +1
    target: int
    ta: Fraction  # image of a; the piece maps onto [ta, ta + b - a)


@dataclass
class SkewSystem:
    w: WidthSequence
    d: Direction
    p: int
    pieces: List[Piece]

    def piece_at(self, comp: int, x: Fraction) -> Optional[Piece]:
        for pc in self.pieces:
            if pc.comp == comp and pc.a < x < pc.b:
                return pc
        return None

    def tau(self, comp: int, x: Fraction):
        """One base step; None on a piece boundary (a singular point)."""
        pc = self.piece_at(comp, x)
        if pc is None:
            return None
        return pc.target, pc.ta + (x - pc.a), pc.psi

    def skew_step(self, comp: int, x: Fraction, n: int):
        out = self.tau(comp, x)
        if out is None:
            return None
        c, y, psi = out
        return c, y, n + psi

    def piece_lengths(self) -> List[Tuple[int, Fraction]]:
        return [(pc.psi, pc.b - pc.a) for pc in self.pieces]

    def psi_profile(self) -> Dict[int, Fraction]:
        """Total base length carrying each cocycle value (pieces split at the wrap are merged)."""
        out: Dict[int, Fraction] = {}
        for pc in self.pieces:
            out[pc.psi] = out.get(pc.psi, Fraction(0)) + (pc.b - pc.a)
        return dict(sorted(out.items()))


def _level_split(level: int, p: int) -> Tuple[int, int]:
    """Level -> (component, period index) with 0 <= component < p."""
    n, comp = divmod(level, p)
    return comp, n


def quotient_base(w: WidthSequence, d: Direction) -> SkewSystem:
    """Fold a periodic staircase onto one period of levels."""
    p = w.period
    if not p:
        raise ValueError("quotient_base needs a periodic width sequence")
    start = w.window_start if w.window else 0
    sys = StaircaseSystem(w, d)
    pieces = []
    for comp in range(p):
        level = start + comp
        cuts = sys.singular_points(level)
        edges = [Fraction(0)] + [c for c in cuts if 0 < c < TWO] + [TWO]
        for lo, hi in zip(edges, edges[1:]):
            mid = (lo + hi) / 2
            out = step(w, d, SectionPoint(level, mid))
            assert isinstance(out, Moved)
            ta = (out.point.x - (mid - lo)) % TWO
            # psi counts period boundaries crossed, which for p = 1 is the level change
            tcomp, psi = _level_split(out.point.level - start, p)
            if ta + (hi - lo) <= TWO:
                pieces.append(Piece(comp, lo, hi, psi, tcomp, ta))
            else:
                split = lo + (TWO - ta)
                pieces.append(Piece(comp, lo, split, psi, tcomp, ta))
                pieces.append(Piece(comp, split, hi, psi, tcomp, Fraction(0)))
    return SkewSystem(w, d, p, pieces)


# --------------------------------------------------------------------------
# Conformal measures


@dataclass
class ConformalMeasure:
    p: int
    cells: int  # cells per component
    a: float
    density: np.ndarray  # shape (p, cells); total mass sum(density) * cell width == 1
    residual: float
    iterations: int
    method: str
    residual_trace: List[float] = field(default_factory=list)

    @property
    def cell_width(self) -> float:
        return 2.0 / self.cells

    def cell_masses(self) -> np.ndarray:
        return self.density * self.cell_width

    def total_mass(self) -> float:
        return float(self.cell_masses().sum())

    def _cumulative(self):
        key = (id(self.density), self.density.shape)
        if getattr(self, "_cum_key", None) != key:
            # extended precision keeps differences of nearby partial sums accurate
            masses = self.cell_masses().astype(np.longdouble)
            zeros = np.zeros((self.p, 1), dtype=np.longdouble)
            self._cum = np.concatenate([zeros, np.cumsum(masses, axis=1)], axis=1)
            self._cell_ld = np.concatenate([masses, zeros], axis=1)
            self._cum_key = key
        return self._cum, self._cell_ld

    def _at(self, comp, x):
        cum, cell = self._cumulative()
        t = np.asarray(x, dtype=np.float64) * (self.cells / 2.0)
        i = np.clip(np.floor(t).astype(np.int64), 0, self.cells)
        frac = (t - i).astype(np.longdouble)
        return cum[comp, i] + frac * cell[comp, i]

    def mass(self, comp: int, lo, hi):
        """Measure of ``[lo, hi)`` on one component (arrays allowed), ``0 <= lo <= hi <= 2``."""
        out = (self._at(comp, hi) - self._at(comp, lo)).astype(np.float64)
        return float(out) if np.ndim(out) == 0 else out

    def rows(self):
        for comp in range(self.p):
            for i in range(self.cells):
                yield comp, Fraction(2 * i, self.cells), Fraction(2 * (i + 1), self.cells), float(self.density[comp, i])


def _aligned(skew: SkewSystem, cells: int) -> bool:
    h = TWO / cells
    for pc in skew.pieces:
        for v in (pc.a, pc.b, pc.ta):
            if (v / h).denominator != 1:
                return False
    return True


def _cell_permutation(skew: SkewSystem, cells: int):
    """Target cell index and psi for every (comp, cell) when pieces sit on the grid."""
    h = TWO / cells
    target = np.empty((skew.p, cells), dtype=np.int64)
    psi = np.empty((skew.p, cells), dtype=np.int64)
    for pc in skew.pieces:
        i0, i1 = int(pc.a / h), int(pc.b / h)
        t0 = int(pc.ta / h)
        for i in range(i0, i1):
            target[pc.comp, i] = pc.target * cells + t0 + (i - i0)
            psi[pc.comp, i] = pc.psi
    return target.ravel(), psi.ravel()


def _cycles(perm: np.ndarray) -> List[List[int]]:
    seen = np.zeros(len(perm), dtype=bool)
    cycles = []
    for s in range(len(perm)):
        if seen[s]:
            continue
        cyc = []
        c = s
        while not seen[c]:
            seen[c] = True
            cyc.append(c)
            c = int(perm[c])
        cycles.append(cyc)
    return cycles


def conformal_residual(skew: SkewSystem, mu: ConformalMeasure) -> float:
    """``sup_A |mu(tau A) - int_A e^{a psi} d mu|`` over the cells of ``mu``."""
    h = 2.0 / mu.cells
    lo = np.arange(mu.cells) * h
    hi = lo + h
    image = np.zeros((mu.p, mu.cells))
    weighted = np.zeros((mu.p, mu.cells))
    for pc in skew.pieces:
        a, b, ta = float(pc.a), float(pc.b), float(pc.ta)
        s, e = np.maximum(lo, a), np.minimum(hi, b)
        hit = s < e
        s, e = s[hit], e[hit]
        image[pc.comp, hit] += mu.mass(pc.target, ta + (s - a), ta + (e - a))
        weighted[pc.comp, hit] += math.exp(mu.a * pc.psi) * mu.mass(pc.comp, s, e)
    return float(np.abs(image - weighted).max())


def _solve_aligned(skew: SkewSystem, a: float, cells: int):
    perm, psi = _cell_permutation(skew, cells)
    dens = np.zeros(len(perm))
    for cyc in _cycles(perm):
        drift = int(psi[cyc].sum())
        if a != 0 and drift != 0:
            continue  # no conformal density can live on this cycle
        vals = np.empty(len(cyc))
        v = 1.0
        for pos, c in enumerate(cyc):
            vals[pos] = v
            v *= math.exp(a * psi[c])
        # spread the cycle's Lebesgue share over it in the forced shape
        dens[cyc] = vals * (len(cyc) / vals.sum())
    total = dens.sum() * (2.0 / cells)
    if total == 0:
        raise NonConvergence("every cell cycle drifts; no conformal density on this grid", [math.inf])
    return (dens / total).reshape(skew.p, cells)


def _ulam_operator(skew: SkewSystem, a: float, cells: int):
    h = TWO / cells
    n = skew.p * cells
    M = np.zeros((n, n))
    for pc in skew.pieces:
        i0 = int(pc.a // h)
        i1 = -int(-pc.b // h)
        for i in range(i0, i1):
            s, e = max(pc.a, i * h), min(pc.b, (i + 1) * h)
            if s >= e:
                continue
            ys, ye = pc.ta + (s - pc.a), pc.ta + (e - pc.a)
            j0 = int(ys // h)
            j1 = -int(-ye // h)
            for j in range(j0, j1):
                ov = min(ye, (j + 1) * h) - max(ys, j * h)
                if ov > 0:
                    M[pc.target * cells + j, pc.comp * cells + i] += math.exp(a * pc.psi) * float(ov / h)
    return M


def solve_conformal(skew: SkewSystem, a: float, cells: int = 2 ** 14, tol: float = 1e-10,
                    max_iter: int = 10_000) -> ConformalMeasure:
    """A piecewise-constant density with ``d(mu o tau)/d mu = e^{a psi}``.

    When every piece boundary and translation is a multiple of the cell
    width the base map permutes cells and the density is solved cycle by
    cycle.  Otherwise a damped power iteration of the weighted transfer
    operator runs until the residual drops below ``tol``.
    """
    a = float(a)
    if not math.isfinite(a):
        raise ValueError("a must be finite")
    if _aligned(skew, cells):
        dens = _solve_aligned(skew, a, cells)
        mu = ConformalMeasure(skew.p, cells, a, dens, 0.0, 0, "cycles")
        mu.residual = conformal_residual(skew, mu)
        mu.residual_trace = [mu.residual]
        return mu
    if skew.p * cells > 4096:
        raise ValueError("unaligned grids are solved densely; use at most 4096 cells in total")
    M = _ulam_operator(skew, a, cells)
    rho = np.ones(skew.p * cells)
    trace = []
    for it in range(1, max_iter + 1):
        nxt = 0.5 * (rho + M @ rho)
        nxt /= nxt.sum() * (2.0 / cells)
        change = float(np.abs(nxt - rho).max())
        rho = nxt
        trace.append(change)
        if change < tol:
            break
    mu = ConformalMeasure(skew.p, cells, a, rho.reshape(skew.p, cells), 0.0, it, "ulam", trace)
    mu.residual = conformal_residual(skew, mu)
    if trace[-1] >= tol:
        raise NonConvergence(f"no fixed point after {max_iter} iterations", trace)
    return mu


# --------------------------------------------------------------------------
# Maharam measures


@dataclass
class MaharamMeasure:
    base: ConformalMeasure
    scale: float = 1.0

    @property
    def a(self) -> float:
        return self.base.a

    def weight(self, n: int) -> float:
        return self.scale * math.exp(-self.a * n)

    def fiber_mass(self, n: int) -> float:
        return self.weight(n) * self.base.total_mass()

    def scaled(self, c: float) -> "MaharamMeasure":
        return MaharamMeasure(self.base, self.scale * c)


def maharam_invariance_check(skew: SkewSystem, m: MaharamMeasure, depth: int) -> float:
    """``max |m(T^-1 E) - m(E)|`` over cylinders E = (2^depth-cell of the base) x (fiber |n| <= depth)."""
    mu = m.base
    coarse = 2 ** depth
    if mu.cells % coarse:
        raise ValueError("cylinder grid must coarsen the density grid")
    H = 2.0 / coarse
    masses = mu.cell_masses()
    block = mu.cells // coarse
    # m restricted to fiber 0 of each coarse cell
    direct = masses.reshape(skew.p, coarse, block).sum(axis=2)
    # preimage mass, split by psi: pre[psi][comp, A] = mu{x : tau x in A, psi(x) = psi}
    pre = {psi: np.zeros((skew.p, coarse)) for psi in (-1, 0, 1)}
    for pc in skew.pieces:
        a, b, ta = float(pc.a), float(pc.b), float(pc.ta)
        tb = ta + (b - a)
        j0, j1 = int(ta // H), int(math.ceil(tb / H))
        for j in range(j0, min(j1, coarse)):
            s, e = max(ta, j * H), min(tb, (j + 1) * H)
            if s < e:
                pre.setdefault(pc.psi, np.zeros((skew.p, coarse)))
                pre[pc.psi][pc.target, j] += mu.mass(pc.comp, a + (s - ta), a + (e - ta))
    a = mu.a
    if a == 0:
        # keep this branch free of exp() so the zero-residual case stays exact
        back = sum(pre.values())
        return float(np.abs(back - direct).max()) * m.scale
    # e^{-a(n - psi)} = e^{-a n} e^{a psi}: factor the fiber weight out of every cylinder
    back = sum(math.exp(a * psi) * arr for psi, arr in pre.items())
    base = float(np.abs(back - direct).max())
    heaviest = max(math.exp(-a * n) for n in range(-depth, depth + 1))
    return heaviest * base * m.scale


@dataclass
class NonUniquenessReport:
    a1: float
    a2: float
    residuals: Tuple[float, float]  # conformal solver residuals
    invariance: Tuple[float, float]  # Maharam invariance residuals
    fiber_ratios: List[float]  # m1(fiber n) / m2(fiber n), n = 0, 1, ...

    @property
    def non_proportional(self) -> bool:
        r = self.fiber_ratios
        return any(abs(x - r[0]) > 1e-12 * max(1.0, abs(r[0])) for x in r[1:])


def non_uniqueness_demo(w: WidthSequence, d: Direction, a1: float, a2: float, cells: int = 2 ** 14,
                        depth: int = 10, fibers: int = 3) -> NonUniquenessReport:
    """Two invariant measures on the cover whose fiber masses are not proportional."""
    if a1 == a2:
        raise ValueError("a1 and a2 must differ")
    skew = quotient_base(w, d)
    mus = [solve_conformal(skew, a, cells) for a in (a1, a2)]
    ms = [MaharamMeasure(mu) for mu in mus]
    inv = tuple(maharam_invariance_check(skew, m, depth) for m in ms)
    ratios = [ms[0].fiber_mass(n) / ms[1].fiber_mass(n) for n in range(fibers)]
    return NonUniquenessReport(a1, a2, (mus[0].residual, mus[1].residual), inv, ratios)


def reflect_cells(density: np.ndarray) -> np.ndarray:
    """Density of the image under ``x -> -x mod 2`` on a cell grid (cell i <-> cells - 1 - i)."""
    return density[:, ::-1]


def skew_orbit(skew: SkewSystem, comp: int, x, steps: int):
    """``[(comp, x, n), ...]`` for the skew orbit of ``(comp, x, 0)``."""
    x = as_fraction(x)
    out = []
    n = 0
    for _ in range(steps):
        nxt = skew.skew_step(comp, x, n)
        if nxt is None:
            break
        comp, x, n = nxt
        out.append((comp, x, n))
    return out
