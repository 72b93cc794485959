"""Daubechies and Meyer scaling functions and wavelets on the real line.

Daubechies filters come from a high-precision spectral factorisation; the
functions themselves are tabulated on dyadic grids by the cascade/eigenvector
method.  The Meyer pair is tabulated by an FFT of its closed-form Fourier
profile, which is exact up to the aliasing period of the frequency grid.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy import ndimage

from .errors import ConstructionError, ParameterError, ResolutionError
from .numerics import Grid, SampledField

SQRT2 = math.sqrt(2.0)

# Sharp Hölder exponents of the extremal-phase Daubechies scaling functions
# (Daubechies, Ten Lectures, table 7.4 / Rioul 1992).  N=1 is discontinuous.
HOLDER_EXPONENTS = {
    1: 0.0, 2: 0.5500, 3: 1.0878, 4: 1.6179, 5: 1.9690,
    6: 2.1891, 7: 2.4604, 8: 2.7608, 9: 3.0736, 10: 3.3614,
}


def daubechies_order_for_smoothness(m: int) -> int:
    """Smallest N whose scaling function is C^m (Hölder exponent strictly above m)."""
    if m < 0:
        raise ParameterError("smoothness must be non-negative")
    for n in sorted(HOLDER_EXPONENTS):
        if HOLDER_EXPONENTS[n] > m:
            return n
    raise ParameterError(f"no tabulated Daubechies order reaches C^{m}; the table stops at N=10")


# ---------------------------------------------------------------- filters

@dataclass(frozen=True)
class FilterPair:
    N: int
    lowpass: np.ndarray
    highpass: np.ndarray

    @property
    def length(self) -> int:
        return 2 * self.N

    @property
    def support(self) -> tuple[float, float]:
        return (0.0, float(2 * self.N - 1))

    def __hash__(self):
        return hash(("daubechies", self.N))

    def __eq__(self, other):
        return isinstance(other, FilterPair) and other.N == self.N


@functools.lru_cache(maxsize=None)
def _daubechies_lowpass(N: int) -> tuple[float, ...]:
    with mpmath.workdps(80):
        # |m0|^2 = cos^{2N}(w/2) P(sin^2(w/2)),  P(y) = sum_k C(N-1+k, k) y^k
        coeffs = [mpmath.binomial(N - 1 + k, k) for k in range(N)]
        poly = [mpmath.mpf(1)]
        for _ in range(N):
            poly = _polymul(poly, [mpmath.mpf(1), mpmath.mpf(1)])
        if N > 1:
            yroots = mpmath.polyroots(coeffs[::-1], maxsteps=400, extraprec=400)
            for y in yroots:
                # sin^2(w/2) - y  ~  z^2 - (2-4y) z + 1 ; keep the root outside the unit circle
                c = 2 - 4 * y
                disc = mpmath.sqrt(c * c - 4)
                z1, z2 = (c + disc) / 2, (c - disc) / 2
                z = z1 if abs(z1) > abs(z2) else z2
                poly = _polymul(poly, [-z, mpmath.mpf(1)])
        h = [mpmath.re(c) for c in poly]
        total = mpmath.fsum(h)
        h = [c * mpmath.sqrt(2) / total for c in h]
        return tuple(float(c) for c in h)


def _polymul(a, b):
    out = [mpmath.mpf(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def daubechies_filter(N: int) -> FilterPair:
    """Extremal-phase Daubechies filter with N vanishing moments."""
    if not isinstance(N, (int, np.integer)) or not 1 <= N <= 10:
        raise ParameterError("Daubechies order must be an integer in [1, 10]")
    h = np.array(_daubechies_lowpass(int(N)))
    k = np.arange(2 * N)
    g = (-1.0) ** k * h[::-1]
    h.setflags(write=False)
    g.setflags(write=False)
    return FilterPair(int(N), h, g)


# ---------------------------------------------------------------- cascade

@functools.lru_cache(maxsize=None)
def _integer_values(N: int) -> np.ndarray:
    h = np.array(_daubechies_lowpass(N))
    L = 2 * N - 1
    vals = np.zeros(L + 1)
    if N == 1:
        vals[0] = 1.0  # right-continuous box
        return vals
    idx = np.arange(1, L)
    n = idx[:, None]
    m = idx[None, :]
    k = 2 * n - m
    M = np.where((k >= 0) & (k < 2 * N), SQRT2 * h[np.clip(k, 0, 2 * N - 1)], 0.0)
    ev = np.linalg.eigvals(M)
    close = np.abs(ev - 1.0) < 1e-6
    if close.sum() != 1:
        raise ConstructionError("refinement matrix has no simple eigenvalue 1")
    A = np.vstack([M - np.eye(L - 1), np.ones((1, L - 1))])
    rhs = np.zeros(L)
    rhs[-1] = 1.0
    v, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    if np.linalg.norm(A @ v - rhs) > 1e-10:
        raise ConstructionError("refinement eigenproblem did not converge")
    vals[1:L] = v
    return vals


@functools.lru_cache(maxsize=None)
def _cascade_tables(N: int, level: int) -> tuple[np.ndarray, np.ndarray]:
    """phi and psi at x = i 2^-level, i = 0 .. (2N-1) 2^level."""
    h = np.array(_daubechies_lowpass(N))
    g = (-1.0) ** np.arange(2 * N) * h[::-1]
    L = 2 * N - 1
    phi = _integer_values(N).copy()
    for lev in range(1, level + 1):
        prev = phi
        n = L * 2 ** lev + 1
        step = 2 ** (lev - 1)
        new = np.zeros(n)
        i = np.arange(n)
        # phi(i 2^-lev) = sqrt2 sum_k h_k phi((i - k 2^(lev-1)) 2^-(lev-1))
        for k in range(2 * N):
            src = i - k * step
            ok = (src >= 0) & (src < prev.size)
            new[ok] += SQRT2 * h[k] * prev[src[ok]]
        phi = new
    # psi(x) = sqrt2 sum_k g_k phi(2x - k); 2x - k sits on the level grid at index 2i - k 2^level
    n = L * 2 ** level + 1
    i = np.arange(n)
    psi = np.zeros(n)
    for k in range(2 * N):
        src = 2 * i - k * 2 ** level
        ok = (src >= 0) & (src < n)
        psi[ok] += SQRT2 * g[k] * phi[src[ok]]
    phi.setflags(write=False)
    psi.setflags(write=False)
    return phi, psi


def cascade_evaluate(filt: FilterPair, levels: int) -> tuple[SampledField, SampledField]:
    """Scaling function and wavelet on the dyadic grid of step 2^-levels over [0, 2N-1]."""
    if levels < 4:
        raise ParameterError("cascade needs levels >= 4")
    phi, psi = _cascade_tables(filt.N, int(levels))
    grid = Grid.from_ppu([filt.support], 2 ** int(levels))
    return SampledField(grid, phi), SampledField(grid, psi)


# ---------------------------------------------------------------- tabulated functions

class TabulatedFunction:
    """Samples on a uniform grid, zero outside; exact on nodes, spline in between."""

    def __init__(self, x0: float, step: float, values: np.ndarray, order: int = 3):
        self.x0 = float(x0)
        self.step = float(step)
        self.values = np.asarray(values, dtype=float)
        self.order = order
        self._coef = None

    @property
    def support(self) -> tuple[float, float]:
        return (self.x0, self.x0 + self.step * (self.values.size - 1))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t = (x - self.x0) / self.step
        r = np.rint(t)
        out = np.zeros(x.shape)
        inside = (t >= -1e-9) & (t <= self.values.size - 1 + 1e-9)
        on_node = inside & (np.abs(t - r) < 1e-7)
        out[on_node] = self.values[r[on_node].astype(np.int64)]
        off = inside & ~on_node
        if np.any(off):
            if self._coef is None:
                self._coef = (ndimage.spline_filter1d(self.values, order=self.order, mode="grid-constant")
                              if self.order > 1 else self.values)
            out[off] = ndimage.map_coordinates(self._coef, [t[off]], order=self.order,
                                               mode="grid-constant", prefilter=False)
        return out


class DaubechiesFunctions:
    """phi (e=0) and psi (e=1) of a Daubechies pair, exact at dyadic points."""

    max_level = 16

    def __init__(self, filt: FilterPair):
        self.filter = filt
        self.N = filt.N

    def support(self, e: int) -> tuple[float, float]:
        return self.filter.support

    def table(self, e: int, level: int) -> np.ndarray:
        phi, psi = _cascade_tables(self.N, int(level))
        return psi if e else phi

    def __call__(self, e: int, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        for level in range(0, self.max_level + 1):
            t = x * 2 ** level
            if np.all(np.abs(t - np.rint(t)) < 1e-8):
                break
        vals = self.table(e, level)
        return TabulatedFunction(0.0, 2.0 ** -level, vals, order=1)(x)


# ---------------------------------------------------------------- Meyer

def _theta(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape)
    pos = t > 0
    with np.errstate(over="ignore"):
        out[pos] = np.exp(-1.0 / t[pos])
    return out


def transition(t) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, nu(t) + nu(1-t) = 1."""
    t = np.asarray(t, dtype=float)
    a = _theta(t)
    b = _theta(1.0 - t)
    return a / (a + b)


@dataclass(frozen=True)
class MeyerPair:
    """Real Meyer scaling function and wavelet.

    ``freq_grid`` is the number of frequency samples across the support of the
    profile; ``truncation_radius`` cuts the spatial tails (about 0 for the
    scaling function, about 1/2 for the wavelet) before renormalising.
    """

    freq_grid: int = 1024
    truncation_radius: float = 16.0
    bell: str = "exp(-1/t)"
    table_level: int = 10

    def __post_init__(self):
        if self.freq_grid < 16:
            raise ParameterError("freq_grid too small")
        if self.truncation_radius <= 0:
            raise ParameterError("truncation radius must be positive")


def meyer_profile(pair: MeyerPair, which: str, xi) -> np.ndarray:
    """Fourier profile with the linear phase removed (even, real, non-negative)."""
    a = np.abs(np.asarray(xi, dtype=float))
    out = np.zeros(a.shape)
    lo, mid, hi = 2 * np.pi / 3, 4 * np.pi / 3, 8 * np.pi / 3
    if which == "scaling":
        out[a <= lo] = 1.0
        band = (a > lo) & (a <= mid)
        out[band] = np.cos(np.pi / 2 * transition(3 * a[band] / (2 * np.pi) - 1))
    elif which == "wavelet":
        b1 = (a > lo) & (a <= mid)
        b2 = (a > mid) & (a <= hi)
        out[b1] = np.sin(np.pi / 2 * transition(3 * a[b1] / (2 * np.pi) - 1))
        out[b2] = np.cos(np.pi / 2 * transition(3 * a[b2] / (4 * np.pi) - 1))
    else:
        raise ParameterError("which must be 'scaling' or 'wavelet'")
    return out


_MEYER_CENTRE = {"scaling": 0.0, "wavelet": 0.5}
_MEYER_BAND = {"scaling": 4 * np.pi / 3, "wavelet": 8 * np.pi / 3}


@functools.lru_cache(maxsize=16)
def _meyer_table(pair: MeyerPair, which: str) -> TabulatedFunction:
    R = pair.truncation_radius
    dx = 2.0 ** -pair.table_level
    band = _MEYER_BAND[which]
    period = 2 * np.pi * pair.freq_grid / band
    if period < 4 * (R + 1):
        raise ResolutionError(
            f"freq_grid={pair.freq_grid} aliases at period {period:.1f}; need >= {4 * (R + 1):.1f}")
    M = int(round(period / dx))
    dxi = 2 * np.pi / (M * dx)
    n = int(np.ceil(band / dxi)) + 1
    xi = dxi * np.arange(n)
    w = np.full(n, dxi)
    w[0] *= 0.5
    c = np.zeros(M)
    c[:n] = w * meyer_profile(pair, which, xi) / np.pi
    # F(y_m) = sum_n c_n cos(xi_n y_m) with xi_n y_m = 2 pi n m / M
    F = np.fft.fft(c).real
    nr = int(np.floor(R / dx))
    vals = np.concatenate([F[M - nr:], F[: nr + 1]])
    norm = math.sqrt(np.sum(vals ** 2) * dx)
    vals = vals / norm
    return TabulatedFunction(_MEYER_CENTRE[which] - nr * dx, dx, vals, order=3)


class MeyerFunctions:
    """phi (e=0) and psi (e=1) of a Meyer pair, truncated per the pair."""

    def __init__(self, pair: MeyerPair):
        self.pair = pair
        self._tabs = (_meyer_table(pair, "scaling"), _meyer_table(pair, "wavelet"))

    def support(self, e: int) -> tuple[float, float]:
        return self._tabs[e].support

    def __call__(self, e: int, x) -> np.ndarray:
        return self._tabs[e](x)


def meyer_evaluate(pair: MeyerPair, which: str, grid: Grid) -> SampledField:
    if grid.dim != 1:
        raise ParameterError("meyer_evaluate needs a one-dimensional grid")
    if pair.truncation_radius < 8:
        raise ParameterError("truncation radius must be >= 8")
    if which not in _MEYER_CENTRE:
        raise ParameterError("which must be 'scaling' or 'wavelet'")
    tab = _meyer_table(pair, which)
    return SampledField(grid, tab(grid.axis(0)))


def generator_functions(gen):
    """Map a FilterPair or MeyerPair to its evaluable function pair."""
    if isinstance(gen, FilterPair):
        return DaubechiesFunctions(gen)
    if isinstance(gen, MeyerPair):
        return MeyerFunctions(gen)
    raise ParameterError(f"unknown generator {gen!r}")
