"""Local Parseval frames on the cube Q = (-1, 1)^d.

Finite smoothness uses tensor Daubechies wavelets whose supports sit inside
Q_eps.  Infinite smoothness uses tensor Meyer wavelets passed through a
smooth folding projection onto Q_eps.  The module also provides the
coefficient container and the discrete Triebel-Lizorkin / Besov norms built
from coefficient magnitudes.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np
from scipy import ndimage, sparse

from .errors import DomainError, FrameIndexError, ParameterError
from .hestenes import TensorFolding, folding_projection_1d, tensorize
from .numerics import Grid, NormParams, SampledField, l2_norm
from .wavelets1d import (
    HOLDER_EXPONENTS, DaubechiesFunctions, FilterPair, MeyerFunctions, MeyerPair,
    daubechies_filter, daubechies_order_for_smoothness,
)

INF = math.inf


def _as_smoothness(m) -> float:
    if m is None or (isinstance(m, str) and m.lower() in ("inf", "infinity", "oo")):
        return INF
    m = float(m)
    if m < 0 or (not math.isinf(m) and m != int(m)):
        raise ParameterError("smoothness must be a non-negative integer or 'inf'")
    return m


# ---------------------------------------------------------------- index sets

@dataclass(frozen=True)
class FrameIndex:
    """Index universe (j, e, k) of a local frame."""

    d: int
    m: float
    j0: int
    epsilon: float
    lam: int = 10
    N: int | None = None

    @property
    def finite(self) -> bool:
        return not math.isinf(self.m)

    def E(self, j: int) -> list[tuple[int, ...]]:
        """E' at the base level, nonzero vertices above it; lexicographic, e=0 first."""
        if j < self.j0:
            raise FrameIndexError(f"level {j} is below j0={self.j0}")
        es = list(itertools.product((0, 1), repeat=self.d))
        return es if j == self.j0 else es[1:]

    def gamma_bounds(self, j: int) -> tuple[int, int]:
        """Inclusive per-axis range of Gamma_j (finite m): supp inside open Q_eps."""
        if not self.finite:
            raise FrameIndexError("Gamma_j is all of Z^d for infinite smoothness")
        s = 2.0 ** j * (1.0 + self.epsilon)
        lo = math.floor(-s) + 1
        hi = math.ceil(s - (2 * self.N - 1)) - 1
        return lo, hi

    def lambda_bounds(self, j: int) -> tuple[int, int]:
        """Inclusive per-axis range of Lambda_j = Z^d cap [-2^(j-1) lam, 2^(j-1) lam)^d."""
        half = 2.0 ** (j - 1) * self.lam
        return math.ceil(-half), math.ceil(half) - 1

    def gamma(self, j: int) -> np.ndarray:
        lo, hi = self.gamma_bounds(j)
        axes = [np.arange(lo, hi + 1)] * self.d
        return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, self.d)

    def in_gamma(self, j: int, k) -> bool:
        if not self.finite:
            return True
        lo, hi = self.gamma_bounds(j)
        k = np.atleast_1d(k)
        return bool(np.all((k >= lo) & (k <= hi)))

    def check(self, j: int, e, k) -> None:
        e = tuple(int(v) for v in np.atleast_1d(e))
        if j < self.j0 or e not in self.E(j) or len(np.atleast_1d(k)) != self.d \
                or not self.in_gamma(j, k):
            raise FrameIndexError(f"(j={j}, e={e}, k={tuple(np.atleast_1d(k))}) is outside the index universe")

    def representative(self, j: int, k) -> np.ndarray:
        """k' in Lambda_j with k - k' in 2^j lam Z^d."""
        lo, _ = self.lambda_bounds(j)
        period = 2 ** j * self.lam
        return np.mod(np.asarray(k) - lo, period) + lo


def auto_j0(N: int, epsilon: float) -> int:
    """Smallest j0 >= 0 with (2N - 1) 2^-j0 < eps/2."""
    j = 0
    while (2 * N - 1) * 2.0 ** -j >= epsilon / 2:
        j += 1
    return j


def build_index(d: int, m, j0="auto", epsilon: float = 0.5, N: int | None = None,
                lam: int = 10) -> FrameIndex:
    if not 0 < epsilon <= 0.5:
        raise ParameterError("epsilon out of range (0, 1/2]")
    if int(d) < 1:
        raise ParameterError("dimension must be >= 1")
    if int(lam) < 2:
        raise ParameterError("lambda must be an integer >= 2")
    m = _as_smoothness(m)
    if math.isinf(m):
        j0 = 0 if j0 in ("auto", None) else int(j0)
        if j0 < 0:
            raise ParameterError("j0 must be >= 0")
        return FrameIndex(int(d), m, j0, float(epsilon), int(lam), None)
    if N is None:
        N = daubechies_order_for_smoothness(int(m))
    elif not 1 <= int(N) <= 10 or HOLDER_EXPONENTS[int(N)] <= m:
        raise ParameterError(f"Daubechies order {N} is not C^{int(m)}")
    N = int(N)
    jmin = auto_j0(N, epsilon)
    if j0 in ("auto", None):
        j0 = jmin
    elif int(j0) < jmin:
        raise ParameterError(f"j0={j0} violates the level condition; need j0 >= {jmin}")
    idx = FrameIndex(int(d), m, int(j0), float(epsilon), int(lam), N)
    for j in (idx.j0, idx.j0 + 12):
        glo, ghi = idx.gamma_bounds(j)
        llo, lhi = idx.lambda_bounds(j)
        if glo < llo or ghi > lhi:
            raise ParameterError("lambda too small: Gamma_j is not contained in Lambda_j")
    return idx


def lambda_jl_bounds(j: int, l: int) -> tuple[int, int]:
    """Inclusive range of the one-dimensional block {k : k/2^j in 2l + [-1, 1)}."""
    return 2 ** j * (2 * l - 1), 2 ** j * (2 * l + 1) - 1


def block_of(j: int, k) -> np.ndarray:
    """l with k in Lambda_{j,l} (componentwise)."""
    return np.floor_divide(np.asarray(k) + 2 ** j, 2 ** (j + 1))


# ---------------------------------------------------------------- frames

@dataclass(frozen=True)
class LocalFrame:
    index: FrameIndex
    generator: FilterPair | MeyerPair
    fold: TensorFolding | None
    jmax: int | None = None

    @property
    def funcs(self):
        return _functions(self.generator)

    @property
    def d(self) -> int:
        return self.index.d


_FUNCS: dict = {}


def _functions(gen):
    if gen not in _FUNCS:
        _FUNCS[gen] = DaubechiesFunctions(gen) if isinstance(gen, FilterPair) else MeyerFunctions(gen)
    return _FUNCS[gen]


def build_frame(index: FrameIndex, meyer: MeyerPair | None = None, jmax: int | None = None) -> LocalFrame:
    if index.finite:
        return LocalFrame(index, daubechies_filter(index.N), None, jmax)
    eps = index.epsilon
    fold1 = folding_projection_1d(-1 - eps / 2, 1 + eps / 2, eps / 2)
    return LocalFrame(index, meyer or MeyerPair(), tensorize([fold1] * index.d), jmax)


def frame_grid(index: FrameIndex, points_per_unit: int) -> Grid:
    """Grid on a box just containing Q_eps, with nodes at multiples of 1/ppu."""
    c = math.ceil((1 + index.epsilon) * points_per_unit - 1e-9) / points_per_unit
    return Grid.from_ppu([(-c, c)] * index.d, points_per_unit)


# ---------------------------------------------------------------- coefficients

def _e_mask(e: tuple[int, ...]) -> int:
    return sum(bit << i for i, bit in enumerate(e))


def _e_from_mask(mask: int, d: int) -> tuple[int, ...]:
    return tuple((mask >> i) & 1 for i in range(d))


@dataclass
class CoefficientSet:
    """Sparse map (j, e, k) -> coefficient, stored per (j, e) block.

    Each block holds lexicographically sorted integer keys (n x d) and values.
    """

    index: FrameIndex
    jmax: int
    blocks: dict = field(default_factory=dict)

    def add_block(self, j: int, e: tuple[int, ...], keys: np.ndarray, values: np.ndarray) -> None:
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, self.index.d)
        values = np.asarray(values, dtype=float).reshape(-1)
        order = np.lexsort(keys.T[::-1]) if len(keys) else np.arange(0)
        self.blocks[(int(j), tuple(e))] = (keys[order], values[order])

    def block_keys(self) -> list[tuple[int, tuple[int, ...]]]:
        return sorted(self.blocks, key=lambda je: (je[0], _e_mask_lex(je[1])))

    def items(self) -> Iterator[tuple[int, tuple[int, ...], np.ndarray, np.ndarray]]:
        """Blocks in canonical order: level, then e, keys sorted within a block."""
        for j, e in self.block_keys():
            keys, vals = self.blocks[(j, e)]
            yield j, e, keys, vals

    def get(self, j: int, e, k) -> float:
        e = tuple(int(v) for v in np.atleast_1d(e))
        k = np.atleast_1d(np.asarray(k, dtype=np.int64))
        self.index.check(j, e, k)
        if (j, e) not in self.blocks:
            return 0.0
        keys, vals = self.blocks[(j, e)]
        hit = np.nonzero(np.all(keys == k, axis=1))[0]
        return float(vals[hit[0]]) if hit.size else 0.0

    def __len__(self) -> int:
        return sum(len(v) for _, v in self.blocks.values())

    def energy(self) -> float:
        return float(sum(np.dot(v, v) for _, _, _, v in self.items()))

    def energy_by_level(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for j, _, _, v in self.items():
            out[j] = out.get(j, 0.0) + float(np.dot(v, v))
        return out

    def max_abs(self) -> float:
        return max((float(np.abs(v).max()) for *_, v in self.items() if v.size), default=0.0)

    def truncated(self, jmax: int) -> "CoefficientSet":
        out = CoefficientSet(self.index, min(jmax, self.jmax))
        for (j, e), (k, v) in self.blocks.items():
            if j <= jmax:
                out.blocks[(j, e)] = (k, v)
        return out

    def filtered(self, keep) -> "CoefficientSet":
        """Copy keeping entries where keep(j, e, keys) is True."""
        out = CoefficientSet(self.index, self.jmax)
        for j, e, k, v in self.items():
            mask = keep(j, e, k)
            out.blocks[(j, e)] = (k[mask], v[mask])
        return out

    def scaled(self, c: float) -> "CoefficientSet":
        out = CoefficientSet(self.index, self.jmax)
        for (j, e), (k, v) in self.blocks.items():
            out.blocks[(j, e)] = (k, v * c)
        return out

    @classmethod
    def single(cls, index: FrameIndex, j: int, e, k, value: float = 1.0) -> "CoefficientSet":
        e = tuple(int(v) for v in np.atleast_1d(e))
        index.check(j, e, k)
        out = cls(index, j)
        out.add_block(j, e, np.atleast_2d(np.asarray(k, dtype=np.int64)), [value])
        return out

    def to_csv(self, fh=None, x_id: int | None = None, header: bool = True) -> str | None:
        d = self.index.d
        own = fh is None
        buf = io.StringIO() if own else fh
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow((["x_id"] if x_id is not None else []) + ["j", "e"]
                       + [f"k_{i + 1}" for i in range(d)] + ["value"])
        for j, e, keys, vals in self.items():
            mask = _e_mask(e)
            for kk, v in zip(keys.tolist(), vals.tolist()):
                row = ([x_id] if x_id is not None else []) + [j, mask] + kk + [format(v, ".17g")]
                w.writerow(row)
        return buf.getvalue() if own else None

    @classmethod
    def from_csv(cls, text: str, index: FrameIndex) -> "CoefficientSet":
        rows = list(csv.reader(io.StringIO(text)))
        head = rows[0]
        off = 1 if head[0] == "x_id" else 0
        d = index.d
        groups: dict = {}
        jmax = index.j0
        for r in rows[1:]:
            j = int(r[off])
            e = _e_from_mask(int(r[off + 1]), d)
            k = [int(v) for v in r[off + 2: off + 2 + d]]
            groups.setdefault((j, e), ([], []))
            groups[(j, e)][0].append(k)
            groups[(j, e)][1].append(float(r[off + 2 + d]))
            jmax = max(jmax, j)
        out = cls(index, jmax)
        for (j, e), (ks, vs) in groups.items():
            out.add_block(j, e, np.array(ks, dtype=np.int64), np.array(vs))
        return out


def _e_mask_lex(e: tuple[int, ...]) -> tuple[int, ...]:
    return tuple(e)


# ---------------------------------------------------------------- 1-D element matrices

def element_matrix(funcs, e: int, j: int, x: np.ndarray, klo: int, khi: int,
                   support: tuple[float, float]) -> sparse.csr_matrix:
    """Sparse matrix M[k - klo, i] = 2^(j/2) g_e(2^j x_i - k) for klo <= k <= khi."""
    lo, hi = support
    t = (2.0 ** j) * x
    span = int(math.ceil(hi - lo)) + 1
    rows, cols, ts = [], [], []
    top = np.floor(t - lo + 1e-9).astype(np.int64)
    idx = np.arange(x.size)
    for o in range(span + 1):
        k = top - o
        arg = t - k
        ok = (arg >= lo - 1e-9) & (arg <= hi + 1e-9) & (k >= klo) & (k <= khi)
        rows.append(k[ok] - klo)
        cols.append(idx[ok])
        ts.append(arg[ok])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    ts = np.concatenate(ts)
    vals = 2.0 ** (j / 2) * funcs(e, ts)
    keep = vals != 0
    return sparse.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(khi - klo + 1, x.size))


def _contract(values: np.ndarray, mats: list) -> np.ndarray:
    """values[i1..id] -> sum_i M1[k1,i1]...Md[kd,id] values[i1..id]."""
    out = values
    for ax, M in enumerate(mats):
        v = np.moveaxis(out, ax, 0)
        shp = v.shape
        r = M @ v.reshape(shp[0], -1)
        out = np.moveaxis(np.asarray(r).reshape((M.shape[0],) + shp[1:]), 0, ax)
    return out


# ---------------------------------------------------------------- Daubechies analysis kernel

def quintic_bspline(t) -> np.ndarray:
    """Centred cardinal B-spline of degree 5 (support [-3, 3])."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape)
    binom = (1, 6, 15, 20, 15, 6, 1)
    for k, c in enumerate(binom):
        out += (-1) ** k * c * np.clip(t + 3 - k, 0, None) ** 5
    out /= 120.0
    out[np.abs(t) >= 3] = 0.0
    return out


def _spline_kernel(funcs: DaubechiesFunctions, e: int, sigma: float, taus: np.ndarray,
                   level: int) -> np.ndarray:
    """g(tau) = int beta5((y - tau)/sigma) g_e(y) dy by a dyadic Riemann sum."""
    tab = funcs.table(e, level)
    dy = 2.0 ** -level
    n = tab.size
    half = int(math.ceil(3 * sigma / dy)) + 1
    out = np.empty(taus.size)
    chunk = max(1, 4_000_000 // (2 * half + 1))
    offs = np.arange(-half, half + 1)
    for s in range(0, taus.size, chunk):
        tc = taus[s:s + chunk]
        centre = np.rint(tc / dy).astype(np.int64)
        ii = centre[:, None] + offs[None, :]
        ok = (ii >= 0) & (ii < n)
        vals = np.where(ok, tab[np.clip(ii, 0, n - 1)], 0.0)
        w = quintic_bspline((ii * dy - tc[:, None]) / sigma)
        out[s:s + chunk] = (w * vals).sum(axis=1) * dy
    return out


def _analysis_kernel(funcs: DaubechiesFunctions, e: int, j: int, x: np.ndarray, h: float,
                     klo: int, khi: int) -> sparse.csr_matrix:
    """K[k - klo, m] = int beta5((x - x_m)/h) psi^e_{j,k}(x) dx (sparse)."""
    N = funcs.N
    sigma = 2.0 ** j * h
    level = max(8, int(math.ceil(-math.log2(sigma))) + 6)
    t = 2.0 ** j * x  # tau = t_m - k
    lo, hi = -3 * sigma, 2 * N - 1 + 3 * sigma
    span = int(math.ceil(hi - lo)) + 1
    top = np.floor(t - lo).astype(np.int64)
    rows, cols, taus = [], [], []
    idx = np.arange(x.size)
    for o in range(span + 1):
        k = top - o
        tau = t - k
        ok = (tau > lo) & (tau < hi) & (k >= klo) & (k <= khi)
        rows.append(k[ok] - klo)
        cols.append(idx[ok])
        taus.append(tau[ok])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    taus = np.concatenate(taus)
    # the kernel depends on tau alone; evaluate once per distinct tau
    key = np.rint(taus * 2.0 ** 20).astype(np.int64)
    uniq, inv = np.unique(key, return_inverse=True)
    g = _spline_kernel(funcs, e, sigma, uniq / 2.0 ** 20, level)
    vals = 2.0 ** (-j / 2) * g[inv]
    return sparse.csr_matrix((vals, (rows, cols)), shape=(khi - klo + 1, x.size))


# ---------------------------------------------------------------- analysis / synthesis

def _check_support(f: SampledField, tol: float = 1e-14) -> None:
    mesh = f.grid.mesh()
    outside = np.zeros(f.grid.shape, dtype=bool)
    for x in mesh:
        outside |= np.abs(x) >= 1.0 + 1e-12
    scale = float(np.abs(f.values).max())
    if scale > 0 and np.abs(f.values[outside]).max(initial=0.0) > tol * scale:
        raise DomainError("field is not supported in Q = (-1, 1)^d")


def analyze(frame: LocalFrame, f: SampledField, jmax: int, floor: float = 1e-12) -> CoefficientSet:
    """Frame coefficients <f, f^e_(j,k)> for j0 <= j <= jmax."""
    idx = frame.index
    if f.grid.dim != idx.d:
        raise ParameterError("field dimension does not match the frame")
    if jmax < idx.j0:
        raise ParameterError("jmax must be >= j0")
    _check_support(f)
    if idx.finite:
        return _analyze_daubechies(frame, f, jmax, floor)
    return _analyze_meyer(frame, f, jmax)


def _analyze_daubechies(frame: LocalFrame, f: SampledField, jmax: int, floor: float) -> CoefficientSet:
    idx = frame.index
    funcs = frame.funcs
    grid = f.grid
    out = CoefficientSet(idx, jmax)
    # quintic spline interpolant: f(x) ~ sum_m C_m beta5((x - x_m)/h)
    C = f.values
    for ax in range(idx.d):
        C = ndimage.spline_filter1d(C, order=5, axis=ax, mode="mirror")
    thresh = floor * l2_norm(f)
    for j in range(idx.j0, jmax + 1):
        klo, khi = idx.gamma_bounds(j)
        kern = {}
        for ax in range(idx.d):
            for e in (0, 1):
                kern[(ax, e)] = _analysis_kernel(funcs, e, j, grid.axis(ax), grid.spacing(ax), klo, khi)
        for e in idx.E(j):
            mats = [kern[(ax, e[ax])] for ax in range(idx.d)]
            keys, vals = _sparse_product(C, mats, thresh)
            out.add_block(j, e, keys + klo, vals)
    return out


def _sparse_product(C: np.ndarray, mats: list, thresh: float, chunk: int = 1024):
    """Entries of M1 (x) ... (x) Md applied to C whose magnitude exceeds thresh."""
    d = len(mats)
    if d == 1:
        c = np.asarray(mats[0] @ C).reshape(-1)
        nz = np.nonzero(np.abs(c) > thresh)[0]
        return nz[:, None], c[nz]
    # contract all axes but the first densely, then stream over the first axis
    inner = C
    for ax in range(1, d):
        inner = _contract_axis(inner, mats[ax], ax)
    M0 = mats[0].tocsr()
    keys, vals = [], []
    for s in range(0, M0.shape[0], chunk):
        block = M0[s:s + chunk] @ inner.reshape(inner.shape[0], -1)
        block = np.asarray(block).reshape((-1,) + inner.shape[1:])
        nz = np.nonzero(np.abs(block) > thresh)
        if nz[0].size:
            keys.append(np.stack([nz[0] + s] + list(nz[1:]), axis=1))
            vals.append(block[nz])
    if not keys:
        return np.zeros((0, d), dtype=np.int64), np.zeros(0)
    return np.concatenate(keys), np.concatenate(vals)


def _contract_axis(values: np.ndarray, M, ax: int) -> np.ndarray:
    v = np.moveaxis(values, ax, 0)
    shp = v.shape
    r = M @ v.reshape(shp[0], -1)
    return np.moveaxis(np.asarray(r).reshape((M.shape[0],) + shp[1:]), 0, ax)


def meyer_window(funcs: MeyerFunctions, e: int, j: int, lo: float, hi: float) -> tuple[int, int]:
    """k range whose truncated element 2^(j/2) g_e(2^j x - k) meets [lo, hi]."""
    slo, shi = funcs.support(e)
    return math.floor(2 ** j * lo - shi) - 1, math.ceil(2 ** j * hi - slo) + 1


def _meyer_k_range(funcs: MeyerFunctions, j: int, grid: Grid, ax: int) -> tuple[int, int]:
    a, b = grid.box[ax]
    lo0, hi0 = meyer_window(funcs, 0, j, a, b)
    lo1, hi1 = meyer_window(funcs, 1, j, a, b)
    return min(lo0, lo1), max(hi0, hi1)


def _analyze_meyer(frame: LocalFrame, f: SampledField, jmax: int, j0: int | None = None,
                   project: bool = True) -> CoefficientSet:
    idx = frame.index
    funcs = frame.funcs
    grid = f.grid
    # <f, H psi> = <H f, psi> because H is self-adjoint (also on the grid)
    F = frame.fold.apply(f).values if (project and frame.fold is not None) else f.values
    out = CoefficientSet(idx, jmax)
    start = idx.j0 if j0 is None else j0
    for j in range(start, jmax + 1):
        ranges = [_meyer_k_range(funcs, j, grid, ax) for ax in range(idx.d)]
        mats = {}
        for ax in range(idx.d):
            x = grid.axis(ax)
            w = grid.weights_1d(ax)
            klo, khi = ranges[ax]
            for e in (0, 1):
                B = element_matrix(funcs, e, j, x, klo, khi, funcs.support(e))
                mats[(ax, e)] = B @ sparse.diags(w)
        for e in idx.E(j) if j >= idx.j0 else []:
            c = _contract(F, [mats[(ax, e[ax])] for ax in range(idx.d)])
            axes = [np.arange(ranges[ax][0], ranges[ax][1] + 1) for ax in range(idx.d)]
            keys = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, idx.d)
            out.add_block(j, e, keys, c.reshape(-1))
    return out


def synthesize(coeffs: CoefficientSet, frame: LocalFrame, grid: Grid) -> SampledField:
    """Sum of coefficient * frame element over stored entries, level-major."""
    idx = frame.index
    if coeffs.index != idx:
        raise FrameIndexError("coefficient set belongs to a different frame index")
    funcs = frame.funcs
    total = np.zeros(grid.shape)
    for j, e, keys, vals in coeffs.items():
        if len(vals) == 0:
            continue
        if idx.finite:
            lo, hi = idx.gamma_bounds(j)
            if keys.min() < lo or keys.max() > hi:
                raise FrameIndexError(f"level {j} has keys outside Gamma_j")
        lo = keys.min(axis=0)
        hi = keys.max(axis=0)
        dense = np.zeros(tuple(hi - lo + 1))
        dense[tuple((keys - lo).T)] = vals
        mats = []
        for ax in range(idx.d):
            B = element_matrix(funcs, e[ax], j, grid.axis(ax), int(lo[ax]), int(hi[ax]),
                               funcs.support(e[ax]))
            mats.append(B.T.tocsr())
        total += _contract(dense, mats)
    out = SampledField(grid, total)
    if not idx.finite and frame.fold is not None:
        out = frame.fold.apply(out)
    return out


def frame_element(frame: LocalFrame, j: int, k, e, grid: Grid) -> SampledField:
    e = tuple(int(v) for v in np.atleast_1d(e))
    k = np.atleast_1d(np.asarray(k, dtype=np.int64))
    frame.index.check(j, e, k)
    return synthesize(CoefficientSet.single(frame.index, j, e, k), frame, grid)


def parseval_residual(coeffs: CoefficientSet, f: SampledField) -> float:
    n2 = l2_norm(f) ** 2
    if n2 == 0:
        return math.nan
    return abs(coeffs.energy() - n2) / n2


# ---------------------------------------------------------------- unprojected Meyer coefficients

def meyer_coefficients(f: SampledField, jmax: int, pair: MeyerPair, j0: int = 0,
                       lam: int = 10) -> CoefficientSet:
    """<f, psi^e_{j,k}> for the plain (unfolded) tensor Meyer system on the full window."""
    d = f.grid.dim
    idx = FrameIndex(d, INF, j0, 0.5, lam, None)
    frame = LocalFrame(idx, pair, None)
    return _analyze_meyer(frame, f, jmax, project=False)


# ---------------------------------------------------------------- sequence norms

@dataclass(frozen=True)
class DecayNormParams:
    base: NormParams
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ParameterError("decay exponent mu must be positive")


def rho_weight(index: FrameIndex, j: int, k) -> tuple[np.ndarray, np.ndarray, float]:
    """Support box (lower, upper corner) and amplitude of rho_{j,k}."""
    k = np.atleast_1d(np.asarray(k, dtype=np.int64))
    kk = k if index.finite else index.representative(j, k)
    scale = 1.0 / (2.0 ** j * index.lam)
    return kk * scale, (kk + 1) * scale, 2.0 ** (j * index.d / 2)


def _encode(cells: np.ndarray) -> np.ndarray:
    d = cells.shape[1]
    bits = 62 // d
    off = 1 << (bits - 1)
    if cells.size and (np.abs(cells).max() >= off):
        raise ParameterError("cell index too large to encode")
    key = np.zeros(cells.shape[0], dtype=np.int64)
    for i in range(d):
        key = (key << bits) | (cells[:, i] + off)
    return key


def _decode(keys: np.ndarray, d: int) -> np.ndarray:
    bits = 62 // d
    off = 1 << (bits - 1)
    mask = (1 << bits) - 1
    out = np.empty((keys.size, d), dtype=np.int64)
    k = keys.copy()
    for i in reversed(range(d)):
        out[:, i] = (k & mask) - off
        k >>= bits
    return out


def _level_cells(levels: dict[int, tuple[np.ndarray, np.ndarray]], d: int, combine: str):
    """Aggregate per-level (cells, values) by cell: sum or max."""
    out = {}
    for j, (cells, vals) in levels.items():
        if cells.size == 0:
            continue
        key = _encode(cells)
        uniq, inv = np.unique(key, return_inverse=True)
        agg = np.zeros(uniq.size)
        if combine == "sum":
            np.add.at(agg, inv, vals)
        else:
            np.maximum.at(agg, inv, vals)
        out[j] = (uniq, agg)
    return out


def _tree_integral(levels: dict[int, tuple[np.ndarray, np.ndarray]], d: int, side0: float,
                   power: float, combine: str = "sum") -> float:
    """Exact integral of G^power where G = sum (or max) over levels of per-cell values.

    Cells at level j are cubes of side side0 * 2^-j indexed by integer vectors;
    the child cells of c are 2c + {0,1}^d, so the levels form a nested tree.
    """
    agg = _level_cells(levels, d, combine)
    if not agg:
        return 0.0
    js = sorted(agg)
    jlo, jhi = js[0], js[-1]
    # active set per level: own cells plus ancestors of finer cells
    active: dict[int, np.ndarray] = {}
    carry = np.zeros(0, dtype=np.int64)
    for j in range(jhi, jlo - 1, -1):
        own = agg[j][0] if j in agg else np.zeros(0, dtype=np.int64)
        cur = np.union1d(own, carry)
        active[j] = cur
        carry = _encode(np.floor_divide(_decode(cur, d), 2)) if cur.size else cur
    total = 0.0
    G = None
    prev = None
    for j in range(jlo, jhi + 1):
        cells = active[j]
        if G is None:
            Gj = np.zeros(cells.size)
        else:
            parent = _encode(np.floor_divide(_decode(cells, d), 2))
            pos = np.searchsorted(prev, parent)
            Gj = G[pos].copy()
        if j in agg:
            pos = np.searchsorted(cells, agg[j][0])
            if combine == "sum":
                Gj[pos] += agg[j][1]
            else:
                Gj[pos] = np.maximum(Gj[pos], agg[j][1])
        vol_child = (side0 * 2.0 ** -(j + 1)) ** d
        if j == jhi:
            total += float(np.sum(Gj ** power)) * (side0 * 2.0 ** -j) ** d
        else:
            nxt = active[j + 1]
            parents = _encode(np.floor_divide(_decode(nxt, d), 2))
            counts = np.zeros(cells.size)
            np.add.at(counts, np.searchsorted(cells, parents), 1)
            total += float(np.sum((2 ** d - counts) * Gj ** power)) * vol_child
        G, prev = Gj, cells
    return total


def _level_terms(coeffs: CoefficientSet, s: float, q: float, cell_of) -> dict:
    """Per-level (cells, term) with term = (2^{js} 2^{jd/2} |c|)^q, or the plain
    magnitude for q = inf."""
    d = coeffs.index.d
    levels: dict = {}
    for j, e, keys, vals in coeffs.items():
        if vals.size == 0:
            continue
        a = 2.0 ** (j * s) * 2.0 ** (j * d / 2) * np.abs(vals)
        t = a if math.isinf(q) else a ** q
        cells = cell_of(j, keys)
        if j in levels:
            levels[j] = (np.vstack([levels[j][0], cells]), np.concatenate([levels[j][1], t]))
        else:
            levels[j] = (cells, t)
    return levels


def _mixed_norm(levels: dict, d: int, side0: float, p: float, q: float) -> float:
    if math.isinf(q):
        return _tree_integral(levels, d, side0, p, "max") ** (1 / p)
    return _tree_integral(levels, d, side0, p / q, "sum") ** (1 / p)


def f_norm_discrete(coeffs: CoefficientSet, params: NormParams, index: FrameIndex | None = None) -> float:
    """|| (sum (2^{js} |c| rho_{j,k})^q)^{1/q} ||_p, integrated exactly over the rho boxes."""
    index = index or coeffs.index
    if math.isinf(params.p):
        raise ParameterError("p must be finite")

    def cell_of(j, keys):
        return keys if index.finite else index.representative(j, keys)

    levels = _level_terms(coeffs, params.s, params.q, cell_of)
    return _mixed_norm(levels, index.d, 1.0 / index.lam, params.p, params.q)


def b_norm_discrete(coeffs: CoefficientSet, params: NormParams, index: FrameIndex | None = None) -> float:
    index = index or coeffs.index
    d, s, p, q = index.d, params.s, params.p, params.q
    per_level: dict[int, list[float]] = {}
    for j, e, _, vals in coeffs.items():
        inner = float(np.sum(np.abs(vals) ** p)) ** (1 / p) if vals.size else 0.0
        per_level.setdefault(j, []).append(2.0 ** (j * (s + d / 2 - d / p)) * inner)
    terms = [t for ts in per_level.values() for t in ts]
    if not terms:
        return 0.0
    if math.isinf(q):
        return max(terms)
    return float(np.sum(np.array(terms) ** q)) ** (1 / q)


def decay_sup(coeffs: CoefficientSet, mu: float, index: FrameIndex | None = None,
              per_level: bool = False):
    """sup over k outside Lambda_j of 2^{j mu} (|2^-j k|_inf + 1)^mu |c|."""
    index = index or coeffs.index
    out: dict[int, float] = {}
    for j, e, keys, vals in coeffs.items():
        lo, hi = index.lambda_bounds(j)
        outside = np.any((keys < lo) | (keys > hi), axis=1)
        if not np.any(outside):
            out.setdefault(j, 0.0)
            continue
        kk = keys[outside]
        w = 2.0 ** (j * mu) * (np.abs(kk * 2.0 ** -j).max(axis=1) + 1) ** mu
        out[j] = max(out.get(j, 0.0), float(np.max(w * np.abs(vals[outside]))))
    if per_level:
        return out
    return max(out.values(), default=0.0)


def fmu_norm(coeffs: CoefficientSet, params: DecayNormParams, index: FrameIndex | None = None) -> float:
    index = index or coeffs.index
    main = f_norm_discrete(coeffs, params.base, index)
    if index.finite:
        return main
    return main + decay_sup(coeffs, params.mu, index)


def q_function(coeffs: CoefficientSet, params: NormParams, grid: Grid) -> SampledField:
    """x -> (sum (2^{js} chi_{j,k}(x) |c|)^q)^{1/q} with chi_{j,k} = 2^{jd/2} 1_I(2^j x - k)."""
    d = coeffs.index.d
    levels = _level_terms(coeffs, params.s, params.q, lambda j, k: k)
    agg = _level_cells(levels, d, "max" if math.isinf(params.q) else "sum")
    mesh = grid.mesh()
    G = np.zeros(grid.shape)
    for j, (keys, vals) in agg.items():
        cells = np.stack([np.floor(x * 2.0 ** j + 1e-12).astype(np.int64).reshape(-1) for x in mesh], axis=1)
        code = _encode(cells)
        pos = np.clip(np.searchsorted(keys, code), 0, keys.size - 1)
        hit = keys[pos] == code
        add = np.where(hit, vals[pos], 0.0).reshape(grid.shape)
        G = np.maximum(G, add) if math.isinf(params.q) else G + add
    return SampledField(grid, G if math.isinf(params.q) else G ** (1 / params.q))


def q_norm(coeffs: CoefficientSet, params: NormParams) -> float:
    """Exact L^p norm of the q-function (dyadic cells of side 2^-j)."""
    levels = _level_terms(coeffs, params.s, params.q, lambda j, k: k)
    return _mixed_norm(levels, coeffs.index.d, 1.0, params.p, params.q)


def z_tail(coeffs: CoefficientSet, lam_test: int) -> CoefficientSet:
    """Keep coefficients with k in Lambda_{j,l}, |l|_inf > lam_test."""
    return coeffs.filtered(lambda j, e, k: np.abs(block_of(j, k)).max(axis=1) > lam_test)


def z_tail_norm(f: SampledField, lam_test: int, params: NormParams, jmax: int,
                pair: MeyerPair | None = None) -> float:
    _check_support_box(f, 1.0)
    pair = pair or tail_meyer_pair()
    coeffs = meyer_coefficients(f, jmax, pair)
    return q_norm(z_tail(coeffs, lam_test), params)


def _check_support_box(f: SampledField, r: float) -> None:
    outside = np.zeros(f.grid.shape, dtype=bool)
    for x in f.grid.mesh():
        outside |= np.abs(x) > r + 1e-12
    if np.any(f.values[outside] != 0):
        raise DomainError(f"field is not supported in [-{r}, {r}]^d")


def tail_meyer_pair() -> MeyerPair:
    """Meyer tables with long tails for decay and tail experiments."""
    return MeyerPair(freq_grid=4096, truncation_radius=128.0)


def periodized_norm(coeffs: CoefficientSet, params: NormParams, lam: int,
                    with_tail: bool = False):
    """p-integral of (sum_j sum_e sum_{k in Lambda_j} sum_l (2^{js} chi_{j,k} |c_{j,k+2^j l lam}|)^q)^{p/q}.

    With ``with_tail`` also returns the part of the value due to |l| >= 1 terms
    (total minus the l = 0 value).
    """
    d = coeffs.index.d
    idx = FrameIndex(d, INF, coeffs.index.j0, 0.5, int(lam), None)

    def cell_of(j, keys):
        return idx.representative(j, keys)

    def value(cs):
        levels = _level_terms(cs, params.s, params.q, cell_of)
        if math.isinf(params.q):
            return _tree_integral(levels, d, 1.0, params.p, "max")
        return _tree_integral(levels, d, 1.0, params.p / params.q, "sum")

    total = value(coeffs)
    if not with_tail:
        return total

    def in_lambda(j, e, k):
        lo, hi = idx.lambda_bounds(j)
        return np.all((k >= lo) & (k <= hi), axis=1)

    central = value(coeffs.filtered(in_lambda))
    return total, total - central


def decay_fit(coeffs: CoefficientSet, j: int, ls: Iterable[int] = (2, 3, 4)) -> float:
    """Slope of log max|c| over k in Lambda_{j,l}, |l|_inf = L, against log(L + 1)."""
    ls = list(ls)
    peaks = []
    for L in ls:
        best = 0.0
        for jj, e, keys, vals in coeffs.items():
            if jj != j or vals.size == 0:
                continue
            lab = np.abs(block_of(j, keys)).max(axis=1)
            sel = lab == L
            if np.any(sel):
                best = max(best, float(np.abs(vals[sel]).max()))
        peaks.append(best)
    peaks = np.array(peaks)
    if np.any(peaks <= 0):
        return -math.inf
    return float(np.polyfit(np.log(np.array(ls) + 1.0), np.log(peaks), 1)[0])
