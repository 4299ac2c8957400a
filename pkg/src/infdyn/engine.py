"""Integer lattice engine for long staircase orbits.

With rational widths, slope and start point, an orbit never leaves the
lattice ``(1/Q) Z`` where ``Q`` is the common denominator of everything
involved.  Scaling by ``Q`` turns the return map into integer arithmetic
modulo ``C = 2Q``, which is still exact and runs in compiled loops.

One-sided limits ``x + 0`` / ``x - 0`` are supported through ``side``:
the map is a translation on each continuity piece, so the infinitesimal
offset rides along unchanged and only the case comparisons differ.
Points with ``side = -1`` are kept in ``(0, C]`` rather than ``[0, C)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

import numpy as np

from .rational import common_denominator, lcm_all
from .staircase import CORNER, LOWER, UPPER, Direction, SectionPoint, Slit, WidthSequence

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

# status codes shared by every kernel
OK, SINGULAR, LEFT_WINDOW = 0, 1, 2
SYMBOLS = (Slit.DOWN, Slit.STAY, Slit.UP)  # indexed by level change + 1
INT64_SAFE = 2 ** 60


@njit(cache=True, inline="always")
def _width(k, W, wlo, period, tail):
    i = k - wlo
    if period > 0:
        return W[i % period]
    if 0 <= i < W.shape[0]:
        return W[i]
    return tail


@njit(cache=True, inline="always")
def _reduce(v, C, side):
    if side < 0:
        return (v - 1) % C + 1
    return v % C


@njit(cache=True)
def _advance(k, x, side, sign, D, C, W, wlo, whi, period, tail):
    """One step; returns (level, x, level change, status, u).

    Outside the stored widths a non-negative ``tail`` is used; a negative
    one means the widths there are unknown and the orbit stops.
    """
    if period == 0 and tail < 0 and (k - 1 < wlo or k > whi):
        return k, x, 0, 2, 0
    lower = _width(k - 1, W, wlo, period, tail)
    wk = _width(k, W, wlo, period, tail)
    upper = C - wk
    shift = sign * D
    u = _reduce(x + shift, C, side)
    if side == 0:
        if 0 < u < lower:
            return k - 1, _reduce(u - lower + shift, C, side), -1, 0, u
        if upper < u:
            return k + 1, _reduce(u + wk + shift, C, side), 1, 0, u
        if lower < u < upper:
            return k, _reduce(u + shift, C, side), 0, 0, u
        return k, x, 0, 1, u
    if side > 0:
        if u < lower:
            return k - 1, _reduce(u - lower + shift, C, side), -1, 0, u
        if u >= upper:
            return k + 1, _reduce(u + wk + shift, C, side), 1, 0, u
        return k, _reduce(u + shift, C, side), 0, 0, u
    if u <= lower:
        return k - 1, _reduce(u - lower + shift, C, side), -1, 0, u
    if u > upper:
        return k + 1, _reduce(u + wk + shift, C, side), 1, 0, u
    return k, _reduce(u + shift, C, side), 0, 0, u


@njit(cache=True)
def _orbit_kernel(k, x, side, n, sign, D, C, W, wlo, whi, period, tail, out_k, out_x, out_sym):
    """Fill out_* with the n points following (k, x); returns (count, status, u)."""
    for i in range(n):
        k, x, dk, status, u = _advance(k, x, side, sign, D, C, W, wlo, whi, period, tail)
        if status != 0:
            return i, status, u
        out_k[i] = k
        out_x[i] = x
        out_sym[i] = dk
    return n, 0, 0


@njit(cache=True)
def _symbols_kernel(ks, xs, side, n, sign, D, C, W, wlo, whi, period, tail, out_sym, out_len):
    """Level-change words of length n for a batch of starts."""
    for j in range(ks.shape[0]):
        k = ks[j]
        x = xs[j]
        m = n
        for i in range(n):
            k, x, dk, status, u = _advance(k, x, side, sign, D, C, W, wlo, whi, period, tail)
            if status != 0:
                m = i
                break
            out_sym[j, i] = dk
        out_len[j] = m


@njit(cache=True)
def _stays_kernel(ks, xs, n, sign, D, C, W, wlo, whi, period, tail, klo, khi):
    """Steps survived inside levels [klo, khi] (n if never left, -1 if singular first)."""
    out = np.empty(ks.shape[0], dtype=np.int64)
    for j in range(ks.shape[0]):
        k = ks[j]
        x = xs[j]
        res = n
        for i in range(n):
            k, x, dk, status, u = _advance(k, x, 0, sign, D, C, W, wlo, whi, period, tail)
            if status != 0:
                res = -1
                break
            if k < klo or k > khi:
                res = i
                break
        out[j] = res
    return out


@njit(cache=True)
def _eval_table(tables, f, k, x, C, tlo, M):
    row = k - tlo
    if row < 0 or row >= tables.shape[1]:
        return 0.0
    t = (x / C) * M
    i = int(t)
    if i >= M:
        i = M - 1
    frac = t - i
    a = tables[f, row, i]
    return a + frac * (tables[f, row, i + 1] - a)


@njit(cache=True)
def _hopf_kernel(ks, xs, sign, D, C, W, wlo, whi, period, tail, tables, tlo, M, checkpoints, out, status_out):
    """Partial sums of every tabulated function at every checkpoint.

    out[j, f, c] = sum_{i=0}^{checkpoints[c]} f(T^i z_j); NaN once an orbit
    stops early.  Summation order is fixed, so float results are reproducible.
    """
    nf = tables.shape[0]
    ncp = checkpoints.shape[0]
    last = checkpoints[ncp - 1]
    acc = np.zeros(nf)
    for j in range(ks.shape[0]):
        k = ks[j]
        x = xs[j]
        for f in range(nf):
            acc[f] = 0.0
        c = 0
        status = 0
        for i in range(last + 1):
            if i > 0:
                k, x, dk, status, u = _advance(k, x, 0, sign, D, C, W, wlo, whi, period, tail)
                if status != 0:
                    break
            for f in range(nf):
                acc[f] += _eval_table(tables, f, k, x, C, tlo, M)
            while c < ncp and checkpoints[c] == i:
                for f in range(nf):
                    out[j, f, c] = acc[f]
                c += 1
        while c < ncp:
            for f in range(nf):
                out[j, f, c] = np.nan
            c += 1
        status_out[j] = status


def _advance_py(k, x, side, sign, D, C, W, wlo, whi, period, tail):
    """Arbitrary-precision twin of :func:`_advance` for lattices too fine for int64."""

    def width(j):
        i = j - wlo
        if period > 0:
            return W[i % period]
        if 0 <= i < len(W):
            return W[i]
        return tail

    def reduce(v):
        return (v - 1) % C + 1 if side < 0 else v % C

    if period == 0 and tail < 0 and (k - 1 < wlo or k > whi):
        return k, x, 0, LEFT_WINDOW, 0
    lower, wk = width(k - 1), width(k)
    upper = C - wk
    shift = sign * D
    u = reduce(x + shift)
    if side == 0:
        down, up, stay = 0 < u < lower, upper < u, lower < u < upper
    elif side > 0:
        down, up = u < lower, u >= upper
        stay = not (down or up)
    else:
        down, up = u <= lower, u > upper
        stay = not (down or up)
    if down:
        return k - 1, reduce(u - lower + shift), -1, OK, u
    if up:
        return k + 1, reduce(u + wk + shift), 1, OK, u
    if stay:
        return k, reduce(u + shift), 0, OK, u
    return k, x, 0, SINGULAR, u


@dataclass
class OrbitArrays:
    levels: np.ndarray
    x_num: np.ndarray  # numerators over the lattice denominator Q
    changes: np.ndarray  # -1 / 0 / +1 per step
    Q: int
    status: int
    singular_u: Optional[Fraction] = None

    def __len__(self):
        return len(self.levels)

    def point(self, i) -> SectionPoint:
        return SectionPoint(int(self.levels[i]), Fraction(int(self.x_num[i]), self.Q))

    def x_float(self) -> np.ndarray:
        return self.x_num / self.Q


class LatticeMap:
    """The return map of ``(w, d)`` on the lattice ``(1/Q) Z`` over a level window.

    Periodic sequences store one period and constant tails store the explicit
    window plus the tail value, so neither runs out.  Other tails are stored
    over ``[lo - 1, hi]`` and orbits needing widths beyond it stop with status
    ``LEFT_WINDOW``.
    """

    def __init__(self, w: WidthSequence, d: Direction, lo: int = -64, hi: int = 64,
                 extra: Iterable[Fraction] = ()):
        self.w, self.d = w, d
        self.period = w.period or 0
        tail = None
        if self.period:
            self.wlo = w.window_start if w.window else 0
            widths = [w(self.wlo + i) for i in range(self.period)]
            self.whi = self.wlo + self.period - 1
        elif w.tail.kind in ("zero", "constant"):
            # explicit window plus a constant beyond it: nothing is ever out of range
            self.wlo = w.window_start
            self.whi = w.window_start + len(w.window) - 1
            widths = list(w.window)
            tail = w(self.whi + 1)
        else:
            self.wlo, self.whi = lo - 1, hi
            widths = [w(k) for k in range(lo - 1, hi + 1)]
        known = widths + [d.delta] + ([tail] if tail is not None else [])
        self.Q = lcm_all([common_denominator(known), common_denominator(list(extra))])
        self.C = 2 * self.Q
        self.D = int(d.delta * self.Q)
        self.sign = d.vertical_sign
        self._widths_int = np.array([int(v * self.Q) for v in widths], dtype=object)
        self.tail = int(tail * self.Q) if tail is not None else -1
        self.compiled = 4 * (self.C + abs(self.D)) < INT64_SAFE
        self.W = self._widths_int.astype(np.int64) if self.compiled else None

    # conversions ------------------------------------------------------

    def to_int(self, x: Fraction) -> int:
        v = Fraction(x) * self.Q
        if v.denominator != 1:
            raise ValueError(f"{x} is not on the lattice 1/{self.Q}")
        return int(v)

    def to_fraction(self, n: int) -> Fraction:
        return Fraction(int(n), self.Q)

    def _args(self, sign):
        return (sign, self.D, self.C, self.W, self.wlo, self.whi, self.period, self.tail)

    # python fallback for huge denominators -----------------------------

    def _py_advance(self, k, x, side, sign):
        return _advance_py(k, x, side, sign, self.D, self.C, list(self._widths_int),
                           self.wlo, self.whi, self.period, self.tail)

    # public -----------------------------------------------------------

    def advance(self, level: int, xn: int, side: int = 0, sign: Optional[int] = None):
        """Single step on lattice integers: (level, x, change, status, u)."""
        sign = self.sign if sign is None else sign
        if self.compiled:
            return _advance(level, xn, side, sign, *self._args(sign)[1:])
        return self._py_advance(level, xn, side, sign)

    def orbit(self, p: SectionPoint, n: int, side: int = 0, sign: Optional[int] = None) -> OrbitArrays:
        """The ``n`` points after ``p`` (fewer if the orbit stops)."""
        sign = self.sign if sign is None else sign
        k0, x0 = p.level, self.to_int(p.x)
        if side < 0 and x0 == 0:
            x0 = self.C
        if self.compiled:
            out_k = np.empty(n, dtype=np.int64)
            out_x = np.empty(n, dtype=np.int64)
            out_s = np.empty(n, dtype=np.int8)
            count, status, u = _orbit_kernel(k0, x0, side, n, *self._args(sign), out_k, out_x, out_s)
            levels, xs, syms = out_k[:count], out_x[:count], out_s[:count]
        else:
            levels, xs, syms = [], [], []
            k, x, status, u = k0, x0, OK, 0
            for _ in range(n):
                k, x, dk, status, u = self._py_advance(k, x, side, sign)
                if status:
                    break
                levels.append(k)
                xs.append(x)
                syms.append(dk)
            levels = np.array(levels, dtype=np.int64)
            xs = np.array(xs, dtype=object)
            syms = np.array(syms, dtype=np.int8)
        su = Fraction(int(u), self.Q) if status == SINGULAR else None
        return OrbitArrays(levels, xs, syms, self.Q, int(status), su)

    def words(self, points, n: int, side: int = 0, sign: Optional[int] = None):
        """Level-change words (int8 arrays, -1/0/+1) of length <= n per start."""
        sign = self.sign if sign is None else sign
        ks = np.array([p.level for p in points], dtype=np.int64)
        xs_list = [self.to_int(p.x) for p in points]
        if side < 0:
            xs_list = [x if x else self.C for x in xs_list]
        if self.compiled:
            xs = np.array(xs_list, dtype=np.int64)
            out = np.zeros((len(points), n), dtype=np.int8)
            lens = np.zeros(len(points), dtype=np.int64)
            _symbols_kernel(ks, xs, side, n, *self._args(sign), out, lens)
            return [out[j, :lens[j]] for j in range(len(points))]
        words = []
        for k, x in zip(ks.tolist(), xs_list):
            word = []
            for _ in range(n):
                k, x, dk, status, u = self._py_advance(k, x, side, sign)
                if status:
                    break
                word.append(dk)
            words.append(np.array(word, dtype=np.int8))
        return words

    def survival(self, points, n: int, klo: int, khi: int, sign: Optional[int] = None) -> np.ndarray:
        """Steps each orbit spends inside levels [klo, khi] (capped at n; -1 = singular)."""
        sign = self.sign if sign is None else sign
        if not self.compiled:
            raise OverflowError("survival needs an int64-sized lattice")
        ks = np.array([p.level for p in points], dtype=np.int64)
        xs = np.array([self.to_int(p.x) for p in points], dtype=np.int64)
        return _stays_kernel(ks, xs, n, *self._args(sign), klo, khi)

    def hopf_sums(self, points, tables: np.ndarray, tlo: int, checkpoints, sign: Optional[int] = None):
        """Orbit sums of tabulated piecewise-linear functions; see :func:`_hopf_kernel`."""
        sign = self.sign if sign is None else sign
        if not self.compiled:
            raise OverflowError("hopf_sums needs an int64-sized lattice")
        ks = np.array([p.level for p in points], dtype=np.int64)
        xs = np.array([self.to_int(p.x) for p in points], dtype=np.int64)
        cps = np.array(sorted(checkpoints), dtype=np.int64)
        out = np.empty((len(points), tables.shape[0], len(cps)))
        status = np.zeros(len(points), dtype=np.int64)
        M = tables.shape[2] - 1
        _hopf_kernel(ks, xs, *self._args(sign), np.ascontiguousarray(tables, dtype=np.float64),
                     tlo, M, cps, out, status)
        return out, status


def lattice_for(w: WidthSequence, d: Direction, points=(), lo=-64, hi=64, extra=()) -> LatticeMap:
    """A LatticeMap whose lattice contains every given start point."""
    fracs = [p.x for p in points] + list(extra)
    return LatticeMap(w, d, lo, hi, fracs)


def tag_of(lattice: LatticeMap, level: int, u: Fraction) -> tuple:
    """Tags of the cone points sitting at boundary coordinate u on a level."""
    w = lattice.w
    locs = {CORNER: Fraction(0), LOWER: w(level - 1) % 2, UPPER: (2 - w(level)) % 2}
    return tuple(t for t, loc in locs.items() if loc == u % 2)
