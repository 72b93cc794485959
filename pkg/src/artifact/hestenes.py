"""Hestenes operators on sampled fields and smooth folding projections.

A simple operator acts as ``f -> phi * (f o Phi)`` on a region ``V`` and as
zero elsewhere.  Folding projections are finite sums of such terms built from
reflections across interval endpoints; they get a fast axis-by-axis path.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .errors import ConstructionError, DomainError, ParameterError
from .numerics import Grid, SampledField
from .wavelets1d import transition

Coords = tuple[np.ndarray, ...]
Region = Callable[..., np.ndarray]


def box_region(box: Sequence[Sequence[float]]) -> Region:
    """Indicator of an open box as a coordinate predicate."""
    box = [(float(a), float(b)) for a, b in box]

    def inside(*x):
        out = np.ones(np.shape(x[0]), dtype=bool)
        for xi, (a, b) in zip(x, box):
            out &= (xi > a) & (xi < b)
        return out

    return inside


def everywhere(*x):
    return np.ones(np.shape(x[0]), dtype=bool)


def _identity(*x):
    return tuple(x)


def _unit(*x):
    return np.ones(np.shape(x[0]))


@dataclass(frozen=True)
class SimpleHOp:
    """``f -> phi(x) f(forward(x))`` on ``region``, zero outside.

    ``inverse`` and ``jac_inv`` (``|det D forward^{-1}|`` on the image) are
    needed only for the adjoint.
    """

    phi: Callable[..., np.ndarray]
    forward: Callable[..., Coords] = _identity
    inverse: Callable[..., Coords] | None = _identity
    jac_inv: Callable[..., np.ndarray] | None = _unit
    region: Region = everywhere
    image: Region = everywhere

    def adjoint(self) -> "SimpleHOp":
        if self.inverse is None or self.jac_inv is None:
            raise ConstructionError("adjoint needs the inverse map and its Jacobian determinant")
        phi, fwd, inv, jac = self.phi, self.forward, self.inverse, self.jac_inv

        def phi1(*y):
            x = inv(*y)
            return phi(*x) * np.abs(jac(*y))

        def jac1(*x):
            return 1.0 / np.abs(jac(*fwd(*x)))

        region, image = self.region, self.image

        def region1(*y):
            return image(*y) & region(*inv(*y))

        return SimpleHOp(phi1, inv, fwd, jac1, region1, region)


def _sample(f: SampledField, pts: Coords) -> np.ndarray:
    """Values of f at arbitrary points: exact on nodes, cubic spline elsewhere."""
    grid = f.grid
    idx = []
    on_nodes = True
    for i, y in enumerate(pts):
        a, b = grid.box[i]
        t = (y - a) / grid.spacing(i)
        if grid.periodic[i]:
            t = np.mod(t, grid.counts[i])
        else:
            if np.any(t < -1e-9) or np.any(t > grid.counts[i] - 1 + 1e-9):
                raise DomainError(f"map leaves the grid along axis {i}")
            t = np.clip(t, 0, grid.counts[i] - 1)
        idx.append(t)
        if on_nodes and not np.all(np.abs(t - np.rint(t)) < 1e-9):
            on_nodes = False
    if on_nodes:
        ii = []
        for i, t in enumerate(idx):
            r = np.rint(t).astype(np.int64)
            if grid.periodic[i]:
                r %= grid.counts[i]
            ii.append(r)
        return f.values[tuple(ii)]
    mode = "grid-wrap" if all(grid.periodic) else "mirror"
    if any(grid.periodic) and not all(grid.periodic):
        # mixed periodicity: pad periodic axes so a mirror spline sees them wrapped
        pad = [(4, 4) if p else (0, 0) for p in grid.periodic]
        vals = np.pad(f.values, pad, mode="wrap")
        idx = [t + 4 if p else t for t, p in zip(idx, grid.periodic)]
        return ndimage.map_coordinates(vals, idx, order=3, mode="mirror")
    return ndimage.map_coordinates(f.values, idx, order=3, mode=mode)


def apply_simple(term: SimpleHOp, f: SampledField) -> np.ndarray:
    x = f.grid.mesh()
    mask = term.region(*x)
    out = np.zeros(f.grid.shape)
    if not np.any(mask):
        return out
    xs = tuple(c[mask] for c in x)
    w = term.phi(*xs)
    nz = w != 0
    if not np.any(nz):
        return out
    ys = term.forward(*(c[nz] for c in xs))
    vals = np.zeros(w.shape)
    vals[nz] = w[nz] * _sample(f, tuple(np.asarray(y, dtype=float) for y in ys))
    out[mask] = vals
    return out


@dataclass(frozen=True)
class HestenesOp:
    terms: tuple[SimpleHOp, ...]
    localization: tuple[tuple[float, float], ...] | None = None

    def apply(self, f: SampledField) -> SampledField:
        return apply(self, f)

    def adjoint(self) -> "HestenesOp":
        return adjoint(self)

    def __add__(self, other: "HestenesOp") -> "HestenesOp":
        return HestenesOp(tuple(self.terms) + tuple(other.terms))


def apply(H, f: SampledField) -> SampledField:
    """Apply a Hestenes operator (or folding projection) to a sampled field."""
    if isinstance(H, (FoldingProjection, TensorFolding)):
        return H.apply(f)
    out = np.zeros(f.grid.shape)
    for term in H.terms:
        out += apply_simple(term, f)
    return SampledField(f.grid, out)


def adjoint(H) -> HestenesOp:
    """Term-wise adjoint; the adjoint of a sum is the sum of adjoints."""
    if isinstance(H, (FoldingProjection, TensorFolding)):
        return HestenesOp(tuple(t.adjoint() for t in H.terms))
    return HestenesOp(tuple(t.adjoint() for t in H.terms), H.localization)


# ---------------------------------------------------------------- folding

def rising_cutoff(t) -> np.ndarray:
    """C-infinity r with r = 0 for t <= -1, r = 1 for t >= 1 and r(t)^2 + r(-t)^2 = 1."""
    t = np.asarray(t, dtype=float)
    return np.sin(np.pi / 2 * transition((1.0 + t) / 2.0))


@dataclass(frozen=True)
class FoldingProjection:
    """Orthogonal projection localised smoothly to ``[a, b]`` along one axis.

    ``a`` or ``b`` may be ``None`` (no fold at that end: identity up to the
    domain boundary).  With ``period`` set the axis is a circle of that length
    and reflections are taken modulo the period.
    """

    a: float | None
    b: float | None
    delta: float
    period: float | None = None
    axis: int = 0

    def __post_init__(self):
        if self.delta <= 0:
            raise ParameterError("collar width must be positive")
        if self.a is not None and self.b is not None:
            if self.b <= self.a:
                raise ParameterError("empty folding interval")
            if self.delta > (self.b - self.a) / 2 + 1e-12:
                raise ParameterError("collar too wide: delta must be <= (b - a)/2")
            if self.period is not None and self.delta > (self.period - (self.b - self.a)) / 2 + 1e-12:
                raise ParameterError("collars overlap across the periodic seam")

    # signed offsets from the fold points, wrapped on a circle
    def _offset(self, x, c):
        d = np.asarray(x, dtype=float) - c
        if self.period is not None:
            d = (d + self.period / 2) % self.period - self.period / 2
        return d

    def _inside(self, x):
        # membership of the core region between the fold points
        if self.period is None:
            ok = np.ones(np.shape(x), dtype=bool)
            if self.a is not None:
                ok &= x > self.a
            if self.b is not None:
                ok &= x < self.b
            return ok
        if self.a is None or self.b is None:
            return np.ones(np.shape(x), dtype=bool)
        return (np.asarray(x) - self.a) % self.period < (self.b - self.a)

    def multiplier(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.period is None:
            out = np.ones(x.shape)
            if self.a is not None:
                out *= rising_cutoff((x - self.a) / self.delta) ** 2
            if self.b is not None:
                out *= rising_cutoff((self.b - x) / self.delta) ** 2
            return out
        if self.a is None or self.b is None:
            return np.ones(x.shape)
        ta = self._offset(x, self.a) / self.delta
        tb = -self._offset(x, self.b) / self.delta
        inner = self._inside(x)
        out = np.where(inner, 1.0, 0.0)
        na = np.abs(ta) < 1
        nb = np.abs(tb) < 1
        out[na] = rising_cutoff(ta[na]) ** 2
        out[nb] = rising_cutoff(tb[nb]) ** 2
        return out

    def reflection_weight(self, x, end: str) -> np.ndarray:
        """Weight of the reflected term at ``end`` ('a' with sign +, 'b' with sign -)."""
        x = np.asarray(x, dtype=float)
        c = self.a if end == "a" else self.b
        if c is None:
            return np.zeros(x.shape)
        t = self._offset(x, c) / self.delta
        w = rising_cutoff(t) * rising_cutoff(-t)
        return w if end == "a" else -w

    def reflect(self, x, end: str) -> np.ndarray:
        c = self.a if end == "a" else self.b
        y = 2 * c - np.asarray(x, dtype=float)
        if self.period is not None:
            y = np.mod(y, self.period)
        return y

    @property
    def terms(self) -> tuple[SimpleHOp, ...]:
        ax = self.axis

        def lift(fn):
            return lambda *x: fn(x[ax])

        def refl(end):
            def fwd(*x):
                y = list(x)
                y[ax] = self.reflect(x[ax], end)
                return tuple(y)
            return fwd

        out = [SimpleHOp(lift(self.multiplier))]
        for end in ("a", "b"):
            if (self.a if end == "a" else self.b) is None:
                continue
            out.append(SimpleHOp(lift(lambda x, e=end: self.reflection_weight(x, e)),
                                 refl(end), refl(end)))
        return tuple(out)

    def support(self) -> tuple[float, float] | None:
        if self.period is not None:
            return None
        lo = -np.inf if self.a is None else self.a - self.delta
        hi = np.inf if self.b is None else self.b + self.delta
        return (lo, hi)

    def matrix(self, grid: Grid, axis: int | None = None):
        """Sparse 1-D operator on the grid axis (exact index flips when grid-aligned)."""
        from scipy import sparse
        ax = self.axis if axis is None else axis
        x = grid.axis(ax)
        n = x.size
        h = grid.spacing(ax)
        rows, cols, vals = [], [], []
        m = self.multiplier(x)
        nz = np.nonzero(m)[0]
        rows.append(nz)
        cols.append(nz)
        vals.append(m[nz])
        for end in ("a", "b"):
            w = self.reflection_weight(x, end)
            nz = np.nonzero(w)[0]
            if nz.size == 0:
                continue
            y = self.reflect(x[nz], end)
            r, c, v = _interp_rows(grid, ax, y, h)
            rows.append(nz[r])
            cols.append(c)
            vals.append(w[nz][r] * v)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def apply(self, f: SampledField) -> SampledField:
        return SampledField(f.grid, apply_axis_matrix(f.values, self.matrix(f.grid), self.axis))


def _interp_rows(grid: Grid, ax: int, y: np.ndarray, h: float):
    """Interpolation weights for values at points y: exact node picks or cubic Lagrange."""
    a0, _ = grid.box[ax]
    n = grid.counts[ax]
    per = grid.periodic[ax]
    t = (y - a0) / h
    r = np.rint(t)
    exact = np.abs(t - r) < 1e-9
    if per:
        t = np.mod(t, n)
        r = np.mod(r, n)
    elif np.any(t < -1e-9) or np.any(t > n - 1 + 1e-9):
        raise DomainError("reflection leaves the grid")
    rows, cols, vals = [], [], []
    idx = np.arange(y.size)
    e = idx[exact]
    rows.append(e)
    cols.append(r[exact].astype(np.int64) % n if per else r[exact].astype(np.int64))
    vals.append(np.ones(e.size))
    off = idx[~exact]
    if off.size:
        # four-point cubic Lagrange, shifted inwards near non-periodic ends
        base = np.floor(t[off]).astype(np.int64) - 1
        if not per:
            base = np.clip(base, 0, n - 4)
        s = t[off] - base
        for k in range(4):
            lk = np.ones(off.size)
            for m in range(4):
                if m != k:
                    lk *= (s - m) / (k - m)
            c = base + k
            rows.append(off)
            cols.append(c % n if per else c)
            vals.append(lk)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def apply_axis_matrix(values: np.ndarray, M, axis: int) -> np.ndarray:
    v = np.moveaxis(values, axis, 0)
    shp = v.shape
    out = M @ v.reshape(shp[0], -1)
    return np.moveaxis(np.asarray(out).reshape(shp), 0, axis)


def folding_projection_1d(a: float | None, b: float | None, delta: float,
                          bell: str = "sin(pi/2 nu)", period: float | None = None,
                          axis: int = 0) -> FoldingProjection:
    """Fold onto ``[a, b]`` with collar ``delta``: identity inside, zero outside."""
    if bell != "sin(pi/2 nu)":
        raise ParameterError("only the sin(pi/2 nu) bell is supported")
    return FoldingProjection(a, b, float(delta), period, axis)


@dataclass(frozen=True)
class TensorFolding:
    """Product of one-dimensional folds acting on distinct axes."""

    factors: tuple[FoldingProjection, ...]
    _cache: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    @property
    def dim(self) -> int:
        return len(self.factors)

    @property
    def terms(self) -> tuple[SimpleHOp, ...]:
        out = []
        for combo in itertools.product(*(f.terms for f in self.factors)):
            out.append(_product_term(combo))
        return tuple(out)

    def matrices(self, grid: Grid):
        key = grid
        if key not in self._cache:
            self._cache.clear()
            self._cache[key] = [f.matrix(grid, i) for i, f in enumerate(self.factors)]
        return self._cache[key]

    def apply(self, f: SampledField) -> SampledField:
        if f.grid.dim != self.dim:
            raise ParameterError("field dimension does not match the tensor fold")
        v = f.values
        for i, M in enumerate(self.matrices(f.grid)):
            v = apply_axis_matrix(v, M, i)
        return SampledField(f.grid, v)


def _product_term(combo: Sequence[SimpleHOp]) -> SimpleHOp:
    # each factor touches one coordinate only, so the maps compose coordinate-wise
    def phi(*x):
        out = np.ones(np.shape(x[0]))
        for t in combo:
            out = out * t.phi(*x)
        return out

    def compose(maps):
        def fwd(*x):
            y = tuple(x)
            for mp in maps:
                y = mp(*y)
            return y
        return fwd

    return SimpleHOp(phi, compose([t.forward for t in combo]), compose([t.inverse for t in combo]))


def tensorize(ops: Sequence[FoldingProjection]) -> TensorFolding:
    """d-dimensional fold acting separately in each variable (factor i on axis i)."""
    facs = []
    for i, op in enumerate(ops):
        facs.append(FoldingProjection(op.a, op.b, op.delta, op.period, i))
    return TensorFolding(tuple(facs))
