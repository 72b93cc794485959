"""Model manifolds (circle, flat torus, round unit sphere), their normal
charts, greedy geodesic covers and smooth partitions of unity.

Points are stored in global coordinates: arc length on the circle, the
periodic box ``[0, side)^d`` on the torus, and unit vectors in R^3 on the
sphere.  The sphere's sampling grid uses the area-preserving cylindrical
coordinates ``(t, phi)`` with ``t = -cos(polar angle)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .errors import ConstructionError, CoverError, ParameterError
from .numerics import Grid, SampledField, integrate
from .wavelets1d import transition


@dataclass(frozen=True)
class ModelManifold:
    kind: str
    d: int
    size: float = 2 * math.pi  # circumference (circle) or side length (torus)

    def __post_init__(self):
        if self.kind not in ("circle", "torus", "sphere"):
            raise ParameterError(f"unknown manifold kind {self.kind!r}")
        if self.kind == "circle" and self.d != 1:
            raise ParameterError("the circle is one-dimensional")
        if self.kind == "sphere" and self.d != 2:
            raise ParameterError("only the two-sphere is supported")
        if self.size <= 0:
            raise ParameterError("size must be positive")

    @property
    def r_inj(self) -> float:
        return math.pi if self.kind == "sphere" else self.size / 2

    @property
    def ambient_dim(self) -> int:
        return 3 if self.kind == "sphere" else self.d

    def total_volume(self) -> float:
        return 4 * math.pi if self.kind == "sphere" else self.size ** self.d

    # ------------------------------------------------------------ coordinates
    def global_grid(self, resolution: int) -> Grid:
        """Sampling grid in global coordinates.

        ``resolution`` is points per unit length for circle/torus; for the
        sphere it is the number of t-intervals (phi gets twice as many nodes).
        """
        if self.kind == "sphere":
            n = int(resolution)
            return Grid(((-1.0, 1.0), (0.0, 2 * math.pi)), (n + 1, 2 * n), (False, True))
        n = max(2, int(round(self.size * resolution)))
        return Grid(((0.0, self.size),) * self.d, (n,) * self.d, (True,) * self.d)

    def points_from_coords(self, *coords) -> np.ndarray:
        """Global grid coordinates -> points (last axis holds the point)."""
        if self.kind == "sphere":
            t, ph = np.broadcast_arrays(*coords)
            s = np.sqrt(np.clip(1 - t ** 2, 0, None))
            return np.stack([s * np.cos(ph), s * np.sin(ph), -t], axis=-1)
        return np.stack([np.mod(np.asarray(c, dtype=float), self.size) for c in coords], axis=-1)

    def coords_from_points(self, p: np.ndarray) -> tuple[np.ndarray, ...]:
        p = np.asarray(p, dtype=float)
        if self.kind == "sphere":
            t = np.clip(-p[..., 2], -1.0, 1.0)
            ph = np.mod(np.arctan2(p[..., 1], p[..., 0]), 2 * math.pi)
            return (t, ph)
        return tuple(np.mod(p[..., i], self.size) for i in range(self.d))

    def grid_points(self, grid: Grid) -> np.ndarray:
        return self.points_from_coords(*grid.mesh())

    def sample(self, func: Callable[[np.ndarray], np.ndarray], grid: Grid) -> SampledField:
        """Sample a function of points (last axis = point) on a global grid."""
        return SampledField(grid, func(self.grid_points(grid)))

    def uniform_points(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "sphere":
            t = rng.uniform(-1, 1, n)
            ph = rng.uniform(0, 2 * math.pi, n)
            return self.points_from_coords(t, ph)
        return rng.uniform(0, self.size, (n, self.d))

    def low_discrepancy_points(self, n: int, seed: int = 0) -> np.ndarray:
        u = qmc.Halton(d=self.d, scramble=True, seed=seed).random(n)
        if self.kind == "sphere":
            return self.points_from_coords(2 * u[:, 0] - 1, 2 * math.pi * u[:, 1])
        return u * self.size

    def distance(self, p, q) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if self.kind == "sphere":
            cross = np.linalg.norm(np.cross(p, q), axis=-1)
            return np.arctan2(cross, np.sum(p * q, axis=-1))
        diff = np.abs(p - q) % self.size
        diff = np.minimum(diff, self.size - diff)
        return np.sqrt(np.sum(diff ** 2, axis=-1))

    def ball_volume(self, s: float) -> float:
        """Closed-form volume of a geodesic ball of radius s < r_inj."""
        if self.kind == "sphere":
            return 2 * math.pi * (1 - math.cos(s))
        return _unit_ball_volume(self.d) * s ** self.d


def _unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def circle(circumference: float = 2 * math.pi) -> ModelManifold:
    return ModelManifold("circle", 1, float(circumference))


def torus(d: int = 2, side: float = 2 * math.pi) -> ModelManifold:
    return ModelManifold("torus", int(d), float(side))


def sphere() -> ModelManifold:
    return ModelManifold("sphere", 2, 2.0)


def parse_manifold(selector: str) -> ModelManifold:
    parts = selector.strip().split(":")
    try:
        if parts[0] == "circle":
            return circle(float(parts[1]) if len(parts) > 1 else 2 * math.pi)
        if parts[0] == "torus":
            d = int(parts[1]) if len(parts) > 1 else 2
            side = float(parts[2]) if len(parts) > 2 else 2 * math.pi
            return torus(d, side)
        if parts[0] == "sphere" and len(parts) == 1:
            return sphere()
    except ValueError as exc:
        raise ParameterError(f"bad manifold selector {selector!r}") from exc
    raise ParameterError(f"bad manifold selector {selector!r}")


def volume_constant(M: ModelManifold) -> float:
    """Smallest C with C^-1 s^d <= vol ball(s) <= C s^d for all 0 < s < r_inj."""
    if M.kind == "sphere":
        # vol/s^2 = 2 pi (1 - cos s)/s^2 decreases from pi (s -> 0) to 4/pi (s = pi)
        return math.pi
    w = _unit_ball_volume(M.d)
    return max(w, 1.0 / w)


def normalized_volume_constant(M: ModelManifold) -> float:
    """Same bound for the ratio vol ball(s) / (Euclidean ball volume of radius s)."""
    if M.kind == "sphere":
        # 2(1 - cos s)/s^2 decreases from 1 to 4/pi^2 on (0, pi]
        return math.pi ** 2 / 4
    return 1.0


# ---------------------------------------------------------------- charts

def _rotation_to_north(x: np.ndarray) -> np.ndarray:
    """Rotation matrix sending the unit vector x to (0, 0, 1) (Rodrigues)."""
    n = np.array([0.0, 0.0, 1.0])
    x = np.asarray(x, dtype=float)
    x = x / np.linalg.norm(x)
    c = float(np.dot(x, n))
    v = np.cross(x, n)
    s = np.linalg.norm(v)
    if s < 1e-15:
        return np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    K = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]]) / s
    theta = math.atan2(s, c)
    return np.eye(3) + math.sin(theta) * K + (1 - math.cos(theta)) * K @ K


@dataclass(frozen=True)
class Chart:
    """Normal geodesic chart of radius ``r`` about ``center``."""

    manifold: ModelManifold
    center: np.ndarray
    r: float
    _rot: np.ndarray | None = field(default=None, repr=False, compare=False)

    def kappa(self, p) -> np.ndarray:
        """Points -> normal coordinates (last axis has length d)."""
        p = np.asarray(p, dtype=float)
        M = self.manifold
        if M.kind == "sphere":
            q = p @ self._rot.T
            rho = np.arctan2(np.hypot(q[..., 0], q[..., 1]), q[..., 2])
            planar = np.hypot(q[..., 0], q[..., 1])
            scale = np.where(planar > 0, rho / np.where(planar > 0, planar, 1.0), 1.0)
            return np.stack([q[..., 0] * scale, q[..., 1] * scale], axis=-1)
        diff = p - self.center
        return (diff + M.size / 2) % M.size - M.size / 2

    def kappa_inv(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        M = self.manifold
        if M.kind == "sphere":
            rho = np.linalg.norm(u, axis=-1)
            sinc = np.where(rho > 0, np.sin(rho) / np.where(rho > 0, rho, 1.0), 1.0)
            q = np.stack([u[..., 0] * sinc, u[..., 1] * sinc, np.cos(rho)], axis=-1)
            return q @ self._rot
        return np.mod(self.center + u, M.size)

    def detg(self, u) -> np.ndarray:
        """det of the metric in normal coordinates."""
        u = np.asarray(u, dtype=float)
        if self.manifold.kind == "sphere":
            rho = np.linalg.norm(u, axis=-1)
            sinc = np.where(rho > 0, np.sin(rho) / np.where(rho > 0, rho, 1.0), 1.0)
            return sinc ** 2
        return np.ones(u.shape[:-1])


def exp_chart(M: ModelManifold, x, r: float) -> Chart:
    if not 0 < r < M.r_inj:
        raise ParameterError(f"chart radius must lie in (0, r_inj={M.r_inj:g})")
    x = np.asarray(x, dtype=float)
    if M.kind == "sphere":
        x = x / np.linalg.norm(x)
        return Chart(M, x, float(r), _rotation_to_north(x))
    return Chart(M, np.mod(x, M.size), float(r))


def transition_maps(src: Chart, dst: Chart):
    """Chart change src -> dst in coordinate form, with |det D(inverse)| on the image.

    Both charts are Riemannian-normal, so sqrt(det g) du is preserved and the
    Jacobian is a ratio of metric determinants.
    """

    def forward(*u):
        v = dst.kappa(src.kappa_inv(np.stack(u, axis=-1)))
        return tuple(v[..., i] for i in range(v.shape[-1]))

    def inverse(*v):
        u = src.kappa(dst.kappa_inv(np.stack(v, axis=-1)))
        return tuple(u[..., i] for i in range(u.shape[-1]))

    def jac_inv(*v):
        vv = np.stack(v, axis=-1)
        uu = np.stack(inverse(*v), axis=-1)
        return np.sqrt(dst.detg(vv) / src.detg(uu))

    return forward, inverse, jac_inv


# ---------------------------------------------------------------- covers

@dataclass(frozen=True)
class Cover:
    manifold: ModelManifold
    centers: np.ndarray
    r: float
    multiplicity_observed: int
    max_gap: float  # largest sampled distance to the nearest centre


def _greedy_packing(M: ModelManifold, cands: np.ndarray, sep: float,
                    chosen: list[np.ndarray] | None = None) -> list[np.ndarray]:
    chosen = list(chosen or [])
    arr = np.empty((len(chosen) + len(cands), cands.shape[1]))
    n = len(chosen)
    if n:
        arr[:n] = chosen
    cos_sep = math.cos(sep)
    L = M.size
    for c in cands:
        if n:
            if M.kind == "sphere":
                # geodesic distance >= sep  <=>  dot product <= cos(sep)
                top = np.max(arr[:n] @ c)
                if top > cos_sep + 1e-12:
                    continue
                if top > cos_sep - 1e-12 and np.min(M.distance(arr[:n], c)) < sep:
                    continue
            else:
                diff = np.abs(arr[:n] - c) % L
                diff = np.minimum(diff, L - diff)
                if np.min(np.einsum("ij,ij->i", diff, diff)) < sep * sep:
                    continue
        arr[n] = c
        n += 1
    return list(arr[:n])


def _nearest_distances(M: ModelManifold, pts: np.ndarray, centers: np.ndarray, chunk: int = 2048):
    out = np.empty(len(pts))
    for s in range(0, len(pts), chunk):
        d = M.distance(pts[s:s + chunk, None, :], centers[None, :, :])
        out[s:s + chunk] = d.min(axis=1)
    return out


def multiplicity(M: ModelManifold, centers: np.ndarray, radius: float, pts: np.ndarray,
                 chunk: int = 2048) -> int:
    """Largest number of open balls of the given radius containing a sample point."""
    best = 0
    for s in range(0, len(pts), chunk):
        d = M.distance(pts[s:s + chunk, None, :], centers[None, :, :])
        best = max(best, int((d < radius).sum(axis=1).max()))
    return best


def build_cover(M: ModelManifold, r: float, n_candidates: int = 100_000,
                n_verify: int = 10_000, seed: int = 0) -> Cover:
    """Greedy maximal r/2-separated set; r/4 balls are disjoint and r/2 balls cover."""
    if not 0 < r < M.r_inj / 2:
        raise CoverError(f"cover radius must lie in (0, r_inj/2 = {M.r_inj / 2:g})")
    cands = M.low_discrepancy_points(n_candidates, seed)
    centers = _greedy_packing(M, cands, r / 2)
    rng = np.random.default_rng(seed + 1)
    for _ in range(4):
        sample = M.uniform_points(n_verify, rng)
        gaps = _nearest_distances(M, sample, np.array(centers))
        bad = gaps >= r / 2
        if not np.any(bad):
            C = np.array(centers)
            mult = multiplicity(M, C, r, sample)
            return Cover(M, C, float(r), mult, float(gaps.max()))
        # refine: the uncovered samples become candidates of the maximal packing
        centers = _greedy_packing(M, sample[bad], r / 2, centers)
    raise ConstructionError("covering verification failed; refine the candidate set")


def cover_checks(cover: Cover, l: float = 1.0, n_samples: int = 10_000, seed: int = 7) -> dict:
    M = cover.manifold
    C = cover.centers
    dd = M.distance(C[:, None, :], C[None, :, :])
    np.fill_diagonal(dd, np.inf)
    rng = np.random.default_rng(seed)
    pts = M.uniform_points(n_samples, rng)
    gaps = _nearest_distances(M, pts, C)
    mult = multiplicity(M, C, cover.r * l, pts)
    const = volume_constant(M)
    return {
        "min_separation": float(dd.min()) if len(C) > 1 else math.inf,
        "disjoint": bool(len(C) < 2 or dd.min() >= cover.r / 2),
        "max_gap": float(gaps.max()),
        "covered": bool(gaps.max() < cover.r / 2),
        "multiplicity": mult,
        "multiplicity_bound": (4 * l + 1) ** M.d * const ** 2,
    }


# ---------------------------------------------------------------- partition of unity

def ball_bump(rho, r: float) -> np.ndarray:
    """1 on [0, r/2], 0 on [r, inf), C-infinity in between."""
    rho = np.asarray(rho, dtype=float)
    return 1.0 - transition((rho - r / 2) / (r / 2))


@dataclass(frozen=True)
class PartitionOfUnity:
    cover: Cover
    pinned: int | None = None

    def bumps(self, pts: np.ndarray) -> np.ndarray:
        M = self.cover.manifold
        rho = M.distance(pts[..., None, :], self.cover.centers)
        return ball_bump(rho, self.cover.r)

    def alphas(self, pts: np.ndarray) -> np.ndarray:
        """Values alpha_j(p) with the centre index on the last axis."""
        pts = np.asarray(pts, dtype=float)
        b = self.bumps(pts)
        tot = b.sum(axis=-1, keepdims=True)
        if np.any(tot < 1e-6):
            raise CoverError("partition denominator vanishes: the cover has a hole")
        a = b / tot
        if self.pinned is None:
            return a
        eta = b[..., self.pinned:self.pinned + 1]
        out = a * (1 - eta)
        out[..., self.pinned] = a[..., self.pinned] + eta[..., 0] * (1 - a[..., self.pinned])
        return out


def partition_of_unity(cover: Cover, pinned=None) -> PartitionOfUnity:
    """Smooth partition subordinate to the r-balls; ``pinned`` is a centre index
    or a point (the nearest centre is pinned)."""
    if pinned is None:
        return PartitionOfUnity(cover)
    if np.ndim(pinned) == 0:
        idx = int(pinned)
    else:
        idx = int(np.argmin(cover.manifold.distance(cover.centers, np.asarray(pinned, dtype=float))))
    if not 0 <= idx < len(cover.centers):
        raise ParameterError("pinned index out of range")
    return PartitionOfUnity(cover, idx)


def integrate_manifold(M: ModelManifold, f: SampledField) -> float:
    """Quadrature on the global grid; both coordinate systems have unit area element."""
    return integrate(f)
