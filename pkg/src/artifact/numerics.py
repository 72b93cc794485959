"""Uniform grids, sampled fields, quadrature and mixed-norm parameters."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NumericInputError, ParameterError


@dataclass(frozen=True)
class Grid:
    """Tensor grid over a box.

    Non-periodic axes carry both endpoints (``n = length*ppu + 1`` nodes, spacing
    exactly ``1/ppu``); periodic axes carry ``n = length*ppu`` nodes and omit the
    right endpoint.
    """

    box: tuple[tuple[float, float], ...]
    counts: tuple[int, ...]
    periodic: tuple[bool, ...]

    def __post_init__(self):
        box = tuple((float(a), float(b)) for a, b in self.box)
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "counts", tuple(int(n) for n in self.counts))
        object.__setattr__(self, "periodic", tuple(bool(p) for p in self.periodic))
        if not (len(box) == len(self.counts) == len(self.periodic)):
            raise ParameterError("box, counts and periodic must have equal length")
        for (a, b), n in zip(box, self.counts):
            if not b > a:
                raise ParameterError(f"empty interval [{a}, {b}]")
            if n < 2:
                raise ParameterError("at least two points per axis are required")

    @classmethod
    def from_ppu(cls, box: Sequence[Sequence[float]], points_per_unit: int = 64,
                 periodic: Sequence[bool] | bool = False) -> "Grid":
        if points_per_unit < 2:
            raise ParameterError("points_per_unit must be >= 2")
        box = tuple((float(a), float(b)) for a, b in box)
        if isinstance(periodic, (bool, np.bool_)):
            periodic = (bool(periodic),) * len(box)
        counts = []
        for (a, b), per in zip(box, periodic):
            n = max(2, int(round((b - a) * points_per_unit)))
            counts.append(n if per else n + 1)
        return cls(box, tuple(counts), tuple(periodic))

    @property
    def dim(self) -> int:
        return len(self.box)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    def spacing(self, axis: int) -> float:
        a, b = self.box[axis]
        n = self.counts[axis]
        return (b - a) / (n if self.periodic[axis] else n - 1)

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(self.spacing(i) for i in range(self.dim))

    def axis(self, i: int) -> np.ndarray:
        a, _ = self.box[i]
        return a + self.spacing(i) * np.arange(self.counts[i])

    def axes(self) -> list[np.ndarray]:
        return [self.axis(i) for i in range(self.dim)]

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def weights_1d(self, i: int) -> np.ndarray:
        w = np.full(self.counts[i], self.spacing(i))
        if not self.periodic[i]:
            w[0] *= 0.5
            w[-1] *= 0.5
        return w

    def weights(self) -> np.ndarray:
        out = np.ones(())
        for i in range(self.dim):
            out = np.multiply.outer(out, self.weights_1d(i))
        return out

    def volume(self) -> float:
        return float(np.prod([b - a for a, b in self.box]))


@dataclass(frozen=True)
class SampledField:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            if v.size == self.grid.size:
                v = v.reshape(self.grid.shape)
            else:
                raise ParameterError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise NumericInputError("field contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, func) -> "SampledField":
        return cls(grid, func(*grid.mesh()))

    @classmethod
    def zeros(cls, grid: Grid) -> "SampledField":
        return cls(grid, np.zeros(grid.shape))

    def with_values(self, values) -> "SampledField":
        return SampledField(self.grid, values)

    def __add__(self, other: "SampledField") -> "SampledField":
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "SampledField") -> "SampledField":
        return self.with_values(self.values - other.values)

    def __mul__(self, c: float) -> "SampledField":
        return self.with_values(self.values * c)

    __rmul__ = __mul__


def _contract(values: np.ndarray, grid: Grid) -> float:
    # fixed-order tensor contraction with the 1-D weights, last axis first
    out = values
    for i in reversed(range(grid.dim)):
        out = out @ grid.weights_1d(i)
    return float(out)


def integrate(f: SampledField) -> float:
    """Trapezoid rule (rectangle rule on periodic axes)."""
    if not np.all(np.isfinite(f.values)):
        raise NumericInputError("non-finite value in field")
    return _contract(f.values, f.grid)


def inner(f: SampledField, g: SampledField) -> float:
    if f.grid != g.grid:
        raise ParameterError("fields live on different grids")
    return _contract(f.values * g.values, f.grid)


def lp_norm(f: SampledField, p: float) -> float:
    if not p > 0:
        raise ParameterError("p must be positive")
    if np.isinf(p):
        return float(np.max(np.abs(f.values)))
    return _contract(np.abs(f.values) ** p, f.grid) ** (1.0 / p)


def l2_norm(f: SampledField) -> float:
    return lp_norm(f, 2.0)


@dataclass(frozen=True)
class NormParams:
    """Smoothness ``s``, integrability ``p`` and summability ``q`` of a sequence norm."""

    s: float
    p: float
    q: float
    d: int = 1

    def __post_init__(self):
        if not self.p > 0 or np.isinf(self.p):
            raise ParameterError("p must lie in (0, inf)")
        if not self.q > 0:
            raise ParameterError("q must lie in (0, inf]")
        if self.d < 1:
            raise ParameterError("dimension must be >= 1")

    @property
    def sigma_pq(self) -> float:
        return self.d * max(1.0 / self.p - 1.0, 1.0 / self.q - 1.0, 0.0)

    @property
    def sigma_p(self) -> float:
        return self.d * max(1.0 / self.p - 1.0, 0.0)
