"""Wavelet frames on the model manifolds.

A manifold frame element is P_U T^p_x f, where f is a local frame element on
the cube, T^p_x transports it into a geodesic chart about x, and P_U is one
piece of a smooth orthogonal decomposition of identity.  On the models the
decomposition folds across coordinate hyperplanes: boxes on the circle and
torus, t-bands cut into phi-sectors on the sphere (t = -cos(theta), so the area
element is dt dphi and the folds are orthogonal without weights).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import hestenes
from .errors import DomainError, ParameterError, UnsupportedCoverError
from .hestenes import FoldingProjection, TensorFolding, _sample
from .localframe import (
    CoefficientSet, LocalFrame, _encode, _level_cells, _level_terms, analyze,
    decay_sup, frame_element, frame_grid, synthesize,
)
from .manifold import Chart, Cover, ModelManifold, exp_chart
from .numerics import Grid, NormParams, SampledField, integrate, lp_norm

PointFunc = Callable[[np.ndarray], np.ndarray]


def conjugate_exponent(p: float) -> float:
    if not 1 < p < math.inf:
        raise ParameterError("p must lie in (1, inf)")
    return p / (p - 1)


# ---------------------------------------------------------------- transport

@dataclass(frozen=True)
class TransportOp:
    """T^p_x f(u) = s^(d/p) f(s kappa(u)) / det g(kappa(u))^(1/(2p)),  s = 3 sqrt(d) / r."""

    chart: Chart
    p: float

    @property
    def d(self) -> int:
        return self.chart.manifold.d

    @property
    def scale(self) -> float:
        return 3 * math.sqrt(self.d) / self.chart.r

    def dual(self) -> "TransportOp":
        return TransportOp(self.chart, conjugate_exponent(self.p))


def _local_values(f, y: np.ndarray) -> np.ndarray:
    """Evaluate a local field (callable of (..., d) points or SampledField) at y."""
    if callable(f) and not isinstance(f, SampledField):
        return np.asarray(f(y), dtype=float)
    grid = f.grid
    out = np.zeros(y.shape[:-1])
    inside = np.ones(y.shape[:-1], dtype=bool)
    for ax, (lo, hi) in enumerate(grid.box):
        inside &= (y[..., ax] >= lo) & (y[..., ax] <= hi)
    if np.any(inside):
        out[inside] = _sample(f, tuple(y[inside][:, ax] for ax in range(grid.dim)))
    return out


def transport(op: TransportOp, f, grid: Grid) -> SampledField:
    """T^p_x f sampled on a global grid of the manifold (zero outside Omega_x(r))."""
    M = op.chart.manifold
    s = op.scale
    ball = 3 * math.sqrt(op.d)
    if isinstance(f, SampledField):
        mesh = np.stack(f.grid.mesh(), axis=-1)
        if np.any(f.values[np.linalg.norm(mesh, axis=-1) >= ball] != 0):
            raise DomainError("field is not supported in B(0, 3 sqrt(d))")
    pts = M.grid_points(grid)
    u = op.chart.kappa(pts)
    inside = np.linalg.norm(u, axis=-1) < op.chart.r
    out = np.zeros(grid.shape)
    ui = u[inside]
    vals = _local_values(f, s * ui)
    out[inside] = s ** (op.d / op.p) * vals / op.chart.detg(ui) ** (1 / (2 * op.p))
    return SampledField(grid, out)


def pullback(op: TransportOp, g, grid: Grid) -> SampledField:
    """(T^p_x)^{-1} g on a local grid (zero outside B(0, 3 sqrt(d))).

    g is a callable of points or a global SampledField.
    """
    M = op.chart.manifold
    s = op.scale
    u = np.stack(grid.mesh(), axis=-1) / s
    inside = np.linalg.norm(u, axis=-1) < op.chart.r
    ui = u[inside]
    pts = op.chart.kappa_inv(ui)
    if isinstance(g, SampledField):
        vals = _sample(g, M.coords_from_points(pts))
    else:
        vals = np.asarray(g(pts), dtype=float)
    out = np.zeros(grid.shape)
    out[inside] = s ** (-op.d / op.p) * vals * op.chart.detg(ui) ** (1 / (2 * op.p))
    return SampledField(grid, out)


def transport_duality_check(op: TransportOp, f: Callable, h: PointFunc, local_grid: Grid,
                            manifold_grid: Grid) -> float:
    """|<(T^p)^{-1} h, f> - <h, T^{p'} f>| with each pairing by its own quadrature."""
    lhs_field = pullback(op, h, local_grid)
    fl = SampledField(local_grid, np.asarray(f(np.stack(local_grid.mesh(), axis=-1)), dtype=float))
    lhs = integrate(SampledField(local_grid, lhs_field.values * fl.values))
    M = op.chart.manifold
    tf = transport(op.dual(), f, manifold_grid)
    hv = M.sample(h, manifold_grid)
    rhs = integrate(SampledField(manifold_grid, hv.values * tf.values))
    return abs(lhs - rhs)


def transport_grid(d: int, points_per_unit: int) -> Grid:
    """Local grid on [-3 sqrt(d), 3 sqrt(d)]^d, the domain of the transport operators."""
    c = 3 * math.sqrt(d)
    c = math.ceil(c * points_per_unit) / points_per_unit
    return Grid.from_ppu([(-c, c)] * d, points_per_unit)


# ---------------------------------------------------------------- layouts

@dataclass(frozen=True)
class BoxLayout:
    """Coordinate boxes on the circle or torus: fold points per axis, shared collar."""

    edges: tuple[tuple[float, ...], ...]
    collar: float


@dataclass(frozen=True)
class BandLayout:
    """Sphere: t-bands (caps at both ends kept whole) cut into phi-sectors.

    ``t_edges`` are the interior band edges; ``sectors`` has one entry per band
    and must be 1 for the two caps.
    """

    t_edges: tuple[float, ...]
    sectors: tuple[int, ...]
    collar_t: float
    collar_phi: float = 0.15  # fraction of the sector width
    phi_offsets: tuple[float, ...] | None = None


def box_layout(M: ModelManifold, n: int, collar_frac: float = 0.15) -> BoxLayout:
    if M.kind == "sphere":
        raise UnsupportedCoverError("the sphere needs a band layout")
    w = M.size / n
    edges = tuple(tuple(i * w for i in range(n)) for _ in range(M.d))
    return BoxLayout(edges, collar_frac * w)


def band_layout(theta_edges: Sequence[float], sectors: Sequence[int], collar_t: float,
                collar_phi: float = 0.15) -> BandLayout:
    t_edges = tuple(-math.cos(th) for th in theta_edges)
    return BandLayout(t_edges, tuple(int(s) for s in sectors), float(collar_t), float(collar_phi))


def three_band_layout() -> BandLayout:
    """Two caps and an equatorial band cut into four sectors."""
    return band_layout((math.pi / 3, 2 * math.pi / 3), (1, 4, 1), 0.15)


def system_layout(M: ModelManifold):
    """Layout fine enough for every piece to fit its transport chart."""
    if M.kind in ("circle", "torus"):
        # piece radius sqrt(d) (1/2 + collar) L/n must give r0 = 3 sqrt(d) radius 1.03 < 0.95 r_inj
        collar = 0.15
        n = math.floor(3 * M.d * (0.5 + collar) * 1.03 * M.size / (0.95 * M.r_inj)) + 1
        return box_layout(M, n, collar)
    # caps of geodesic radius 0.45 and four bands; collars stay wide relative to
    # piece size so the local bells remain resolvable at Jmax = j0 + 4
    return _sphere_bands(0.45, 4)


def _sphere_bands(cap: float, n_bands: int) -> BandLayout:
    th = np.linspace(cap, math.pi - cap, n_bands + 1)
    sectors = [1]
    for a, b in zip(th[:-1], th[1:]):
        widest = math.sin(min(max(math.pi / 2, a), b))
        sectors.append(max(3, math.ceil(2 * math.pi * widest / (b - a))))
    sectors.append(1)
    widths = np.diff(-np.cos(th))
    collar_t = min(0.9 * (1 - math.cos(cap)), 0.45 * float(widths.min()))
    return band_layout(tuple(th), tuple(sectors), collar_t, 0.3)


def layout_for_radius(M: ModelManifold, r: float):
    """Box or band layout whose pieces have width about r."""
    if not 0 < r < M.r_inj:
        raise UnsupportedCoverError(f"radius {r:.4g} must lie in (0, r_inj={M.r_inj:.4g})")
    if M.kind in ("circle", "torus"):
        return box_layout(M, max(2, math.ceil(M.size / r)), 0.15)
    return _sphere_bands(r / 2, max(1, math.ceil((math.pi - r) / r)))


def _lattice_from_cover(cover: Cover) -> BoxLayout:
    """Boxes of a product-lattice cover of the circle/torus (Voronoi cells)."""
    M = cover.manifold
    c = np.asarray(cover.centers)
    axes = []
    for ax in range(M.d):
        vals = np.unique(np.round(np.mod(c[:, ax], M.size), 9))
        axes.append(vals)
    if np.prod([len(a) for a in axes]) != len(c):
        raise UnsupportedCoverError("cover is not a product lattice of boxes")
    edges = []
    width = []
    for vals in axes:
        nxt = np.roll(vals, -1)
        nxt[-1] += M.size
        edges.append(tuple(np.mod((vals + nxt) / 2, M.size)))
        width.append(float(np.min(nxt - vals)))
    return BoxLayout(tuple(tuple(sorted(e)) for e in edges), 0.15 * min(width))


# ---------------------------------------------------------------- decomposition of identity

@dataclass
class Piece:
    center: np.ndarray
    fold: TensorFolding
    label: str
    _terms: tuple = field(default=None, repr=False)

    @property
    def terms(self):
        if self._terms is None:
            self._terms = self.fold.terms
        return self._terms


def _snap(a: float, origin: float, h: float) -> float:
    """Nearest node or half-node, so reflections map grid nodes onto nodes."""
    return origin + round(2 * (a - origin) / h) * h / 2


@dataclass
class IdentityDecomposition:
    manifold: ModelManifold
    pieces: list[Piece]
    grid: Grid
    p: float = 2.0
    layout: object = None

    def __len__(self) -> int:
        return len(self.pieces)

    def project(self, i: int, f: SampledField) -> SampledField:
        """P_U f on the global grid."""
        return self.pieces[i].fold.apply(f)

    def project_callable(self, i: int, func: PointFunc) -> PointFunc:
        """P_U f as a callable of points, evaluated through the fold terms exactly."""
        M = self.manifold
        terms = self.pieces[i].terms

        def g(pts):
            coords = M.coords_from_points(pts)
            out = np.zeros(np.shape(coords[0]))
            for t in terms:
                w = t.phi(*coords)
                nz = w != 0
                if not np.any(nz):
                    continue
                img = t.forward(*(c[nz] for c in coords))
                out[nz] += w[nz] * func(M.points_from_coords(*img))
            return out
        return g

    def support_coords(self, i: int, n: int = 161) -> tuple[np.ndarray, ...]:
        """Dense coordinate samples of the support of piece i."""
        axes = []
        for ax, fac in enumerate(self.pieces[i].fold.factors):
            lo0, hi0 = self.grid.box[ax]
            if fac.a is None and fac.b is None:
                axes.append(np.linspace(lo0, hi0, n))
                continue
            lo = lo0 if fac.a is None else fac.a - fac.delta
            hi = hi0 if fac.b is None else fac.b + fac.delta
            axes.append(np.linspace(lo, hi, n))
        mesh = np.meshgrid(*axes, indexing="ij")
        return tuple(m.reshape(-1) for m in mesh)

    def support_radius(self, i: int) -> float:
        """Largest geodesic distance from the piece centre to its support."""
        M = self.manifold
        pts = M.points_from_coords(*self.support_coords(i))
        return float(M.distance(pts, self.pieces[i].center[None, :]).max())


def decomposition_of_identity(M: ModelManifold, cover, resolution: int, p: float = 2.0) -> IdentityDecomposition:
    """Orthogonal smooth decomposition of identity subordinate to a box or band layout."""
    grid = M.global_grid(resolution)
    if isinstance(cover, Cover):
        if M.kind == "sphere":
            raise UnsupportedCoverError("ball covers of the sphere are not representable as bands")
        cover = _lattice_from_cover(cover)
    if M.kind == "sphere":
        if not isinstance(cover, BandLayout):
            raise UnsupportedCoverError("the sphere needs a band layout")
        pieces = _band_pieces(M, cover, grid)
    else:
        if not isinstance(cover, BoxLayout):
            raise UnsupportedCoverError("the circle and torus need a box layout")
        pieces = _box_pieces(M, cover, grid)
    return IdentityDecomposition(M, pieces, grid, float(p), cover)


def _box_pieces(M: ModelManifold, layout: BoxLayout, grid: Grid) -> list[Piece]:
    L = M.size
    if len(layout.edges) != M.d:
        raise UnsupportedCoverError("layout dimension does not match the manifold")
    per_axis = []
    for ax, edges in enumerate(layout.edges):
        h = grid.spacing(ax)
        e = sorted(_snap(float(a) % L, 0.0, h) for a in edges)
        if len(e) == 1:
            per_axis.append([(FoldingProjection(None, None, 1.0, L, ax), e[0] + L / 2)])
            continue
        out = []
        for i in range(len(e)):
            a = e[i]
            b = e[i + 1] if i + 1 < len(e) else e[0] + L
            if layout.collar > (b - a) / 2:
                raise UnsupportedCoverError("collar wider than half a box")
            out.append((FoldingProjection(a, b, layout.collar, L, ax), ((a + b) / 2) % L))
        per_axis.append(out)
    pieces = []
    for combo in np.ndindex(*[len(a) for a in per_axis]):
        facs = tuple(per_axis[ax][i][0] for ax, i in enumerate(combo))
        centre = np.array([per_axis[ax][i][1] for ax, i in enumerate(combo)])
        pieces.append(Piece(M.points_from_coords(*centre), TensorFolding(facs),
                            "box" + "".join(f"[{i}]" for i in combo)))
    return pieces


def _band_pieces(M: ModelManifold, layout: BandLayout, grid: Grid) -> list[Piece]:
    ht = grid.spacing(0)
    hp = grid.spacing(1)
    edges = [_snap(t, -1.0, ht) for t in layout.t_edges]
    if any(b <= a for a, b in zip(edges, edges[1:])) or edges[0] <= -1 or edges[-1] >= 1:
        raise UnsupportedCoverError("band edges must increase inside (-1, 1)")
    if len(layout.sectors) != len(edges) + 1:
        raise UnsupportedCoverError("need one sector count per band")
    if layout.sectors[0] != 1 or layout.sectors[-1] != 1:
        raise UnsupportedCoverError("caps cannot be cut in phi")
    bounds = [-1.0] + edges + [1.0]
    dt = layout.collar_t
    widths = [b - a for a, b in zip(bounds, bounds[1:])]
    # caps fold on one side only, so the reflection just has to stay off the pole
    if dt >= min(widths[0], widths[-1]) or (len(widths) > 2 and dt > min(widths[1:-1]) / 2):
        raise UnsupportedCoverError("t collar too wide for the bands")
    pieces = []
    two_pi = 2 * math.pi
    for bi, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
        tfold = FoldingProjection(None if bi == 0 else a,
                                  None if bi == len(bounds) - 2 else b, dt, None, 0)
        n = layout.sectors[bi]
        th_mid = (math.acos(-a) + math.acos(-b)) / 2
        if bi == 0:
            pieces.append(Piece(M.points_from_coords(-1.0, 0.0), TensorFolding(
                (tfold, FoldingProjection(None, None, 1.0, two_pi, 1))), "cap[south-t]"))
            continue
        if bi == len(bounds) - 2:
            pieces.append(Piece(M.points_from_coords(1.0, 0.0), TensorFolding(
                (tfold, FoldingProjection(None, None, 1.0, two_pi, 1))), "cap[north-t]"))
            continue
        if n == 1:
            pieces.append(Piece(M.points_from_coords(-math.cos(th_mid), 0.0), TensorFolding(
                (tfold, FoldingProjection(None, None, 1.0, two_pi, 1))), f"band[{bi}]"))
            continue
        off = 0.0 if layout.phi_offsets is None else layout.phi_offsets[bi]
        w = two_pi / n
        phis = [_snap((off + m * w) % two_pi, 0.0, hp) for m in range(n)]
        phis.sort()
        dphi = layout.collar_phi * w
        for m in range(n):
            pa = phis[m]
            pb = phis[m + 1] if m + 1 < n else phis[0] + two_pi
            pf = FoldingProjection(pa, pb, dphi, two_pi, 1)
            centre = M.points_from_coords(-math.cos(th_mid), ((pa + pb) / 2) % two_pi)
            pieces.append(Piece(centre, TensorFolding((tfold, pf)), f"band[{bi}]sector[{m}]"))
    return pieces


def projection_checks(dec: IdentityDecomposition, fields: Sequence[SampledField]) -> dict:
    """Worst relative residuals of the projection algebra over test fields."""
    worst = dict(idempotence=0.0, disjointness=0.0, completeness=0.0, self_adjoint=0.0, parseval=0.0)
    n = len(dec)
    for fi, f in enumerate(fields):
        nf = lp_norm(f, 2)
        parts = [dec.project(i, f) for i in range(n)]
        total = SampledField.zeros(f.grid)
        energy = 0.0
        for i, pf in enumerate(parts):
            total = total + pf
            energy += lp_norm(pf, 2) ** 2
            worst["idempotence"] = max(worst["idempotence"], lp_norm(dec.project(i, pf) - pf, 2) / nf)
        for i in range(n):
            for k in range(n):
                if i != k:
                    worst["disjointness"] = max(worst["disjointness"],
                                                lp_norm(dec.project(i, parts[k]), 2) / nf)
        worst["completeness"] = max(worst["completeness"], lp_norm(total - f, 2) / nf)
        worst["parseval"] = max(worst["parseval"], abs(energy - nf ** 2) / nf ** 2)
        g = fields[(fi + 1) % len(fields)]
        for i in range(n):
            a = integrate(SampledField(f.grid, parts[i].values * g.values))
            b = integrate(SampledField(f.grid, f.values * dec.project(i, g).values))
            worst["self_adjoint"] = max(worst["self_adjoint"], abs(a - b) / (nf * lp_norm(g, 2)))
    return worst


def lp_ratio(dec: IdentityDecomposition, f: SampledField, p: float) -> float:
    """(sum_U ||P_U f||_p^p)^(1/p) / ||f||_p."""
    tot = sum(lp_norm(dec.project(i, f), p) ** p for i in range(len(dec)))
    return tot ** (1 / p) / lp_norm(f, p)


# ---------------------------------------------------------------- wavelet system

@dataclass
class ManifoldFrameSystem:
    manifold: ModelManifold
    decomposition: IdentityDecomposition
    frame: LocalFrame
    p: float
    r0: float
    jmax: int
    local_grid: Grid
    charts: list[Chart]

    @property
    def d(self) -> int:
        return self.manifold.d

    @property
    def grid(self) -> Grid:
        return self.decomposition.grid

    @property
    def centres(self) -> np.ndarray:
        return np.array([pc.center for pc in self.decomposition.pieces])

    def transport(self, i: int, dual: bool = False) -> TransportOp:
        op = TransportOp(self.charts[i], self.p)
        return op.dual() if dual else op

    def omega_box(self, j: int, k) -> tuple[np.ndarray, np.ndarray]:
        """Normal-coordinate box of Omega_{j,k,x}: r0/(3 sqrt d) times supp rho_{j,k}."""
        from .localframe import rho_weight
        lo, hi, _ = rho_weight(self.frame.index, j, k)
        c = self.r0 / (3 * math.sqrt(self.d))
        return c * lo, c * hi


def build_wavelet_system(M: ModelManifold, decomposition: IdentityDecomposition, frame: LocalFrame,
                         p: float = 2.0, jmax: int | None = None, local_ppu: int = 64,
                         r0: float | None = None) -> ManifoldFrameSystem:
    if frame.index.d != M.d:
        raise ParameterError("local frame dimension does not match the manifold")
    conjugate_exponent(p)
    radius = max(decomposition.support_radius(i) for i in range(len(decomposition)))
    need = 3 * math.sqrt(M.d) * radius * 1.03
    if r0 is None:
        r0 = need
    elif r0 < need:
        raise ParameterError(f"r0={r0:.4g} is too small for the pieces; need >= {need:.4g}")
    if r0 >= M.r_inj:
        raise ParameterError(f"pieces too large: r0={r0:.4g} must stay below r_inj={M.r_inj:.4g}")
    charts = [exp_chart(M, pc.center, r0) for pc in decomposition.pieces]
    jmax = frame.index.j0 + 4 if jmax is None else int(jmax)
    return ManifoldFrameSystem(M, decomposition, frame, float(p), float(r0), jmax,
                               frame_grid(frame.index, local_ppu), charts)


@dataclass
class ManifoldCoefficients:
    sets: list[CoefficientSet]

    def energy(self) -> float:
        return float(sum(cs.energy() for cs in self.sets))

    def __len__(self) -> int:
        return sum(len(cs) for cs in self.sets)

    def to_csv(self) -> str:
        d = self.sets[0].index.d if self.sets else 1
        head = ",".join(["x_id", "j", "e"] + [f"k_{i + 1}" for i in range(d)] + ["value"]) + "\n"
        return head + "".join(cs.to_csv(x_id=i, header=False) for i, cs in enumerate(self.sets))


def local_field(system: ManifoldFrameSystem, i: int, f) -> SampledField:
    """(T^p_x)^{-1} P_U f on the local grid of piece i.

    The piece lies inside the chart ball of radius r0/(3 sqrt d), so the result
    vanishes outside Q; interpolation round-off there is dropped.
    """
    dec = system.decomposition
    op = system.transport(i)
    if isinstance(f, SampledField):
        g = pullback(op, dec.project(i, f), system.local_grid)
    else:
        g = pullback(op, dec.project_callable(i, f), system.local_grid)
    outside = np.zeros(g.grid.shape, dtype=bool)
    for x in g.grid.mesh():
        outside |= np.abs(x) >= 1.0
    return g.with_values(np.where(outside, 0.0, g.values))


def m_analyze(system: ManifoldFrameSystem, f) -> ManifoldCoefficients:
    """<f, (P_U)^* T^{p'}_x f_(j,k)> = <(T^p_x)^{-1} P_U f, f_(j,k)> for every piece."""
    out = []
    for i in range(len(system.decomposition)):
        g = local_field(system, i, f)
        if not np.any(g.values):
            out.append(CoefficientSet(system.frame.index, system.jmax))
            continue
        out.append(analyze(system.frame, g, system.jmax))
    return ManifoldCoefficients(out)


def m_synthesize(system: ManifoldFrameSystem, coeffs: ManifoldCoefficients) -> SampledField:
    """sum over pieces of P_U T^p_x (local synthesis), in piece order."""
    grid = system.grid
    total = np.zeros(grid.shape)
    for i, cs in enumerate(coeffs.sets):
        if len(cs) == 0 or cs.max_abs() == 0:
            continue
        local = synthesize(cs, system.frame, system.local_grid)
        pushed = transport(system.transport(i), local, grid)
        total += system.decomposition.project(i, pushed).values
    return SampledField(grid, total)


def system_element(system: ManifoldFrameSystem, i: int, j: int, k, e, dual: bool = False) -> SampledField:
    """P_U T^p f_(j,k), or the dual (P_U)^* T^{p'} f_(j,k) through the generic adjoint."""
    el = frame_element(system.frame, j, k, e, system.local_grid)
    pushed = transport(system.transport(i, dual=dual), el, system.grid)
    fold = system.decomposition.pieces[i].fold
    if not dual:
        return fold.apply(pushed)
    star = hestenes.adjoint(hestenes.HestenesOp(fold.terms, hestenes.everywhere))
    return star.apply(pushed)


# ---------------------------------------------------------------- manifold sequence norms

def _omega_volumes(system: ManifoldFrameSystem, j: int, keys: np.ndarray) -> np.ndarray:
    """vol(Omega_{j,k,x}) = s^-d int_box sqrt(det g(z/s)) dz (Gauss-Legendre on each box)."""
    lo, hi = system.omega_box(j, keys)
    size = np.prod(hi - lo, axis=-1)
    if system.manifold.kind != "sphere":
        return size
    nodes, weights = np.polynomial.legendre.leggauss(4)
    vol = np.zeros(len(keys))
    chart = system.charts[0]
    for a, wa in zip(nodes, weights):
        for b, wb in zip(nodes, weights):
            u = lo + (hi - lo) * (np.array([a, b]) + 1) / 2
            vol += wa * wb / 4 * np.sqrt(chart.detg(u))
    return vol * size


def _weighted_sum(system, coeffs: ManifoldCoefficients, power_of) -> float:
    total = 0.0
    for cs in coeffs.sets:
        for j, e, keys, vals in cs.items():
            if vals.size:
                total += float(np.sum(power_of(j, vals) * _omega_volumes(system, j, keys)))
    return total


def _grid_field(system: ManifoldFrameSystem, coeffs: ManifoldCoefficients, s: float, q: float) -> np.ndarray:
    """G(u) = sum (or max) over x, j, e, k of (2^{j(s+d/2)} |c|)^q chi_Omega(u) on the global grid."""
    M = system.manifold
    grid = system.grid
    d = system.d
    idx = system.frame.index
    pts = M.grid_points(grid).reshape(-1, M.ambient_dim)
    combine = "max" if math.isinf(q) else "sum"
    G = np.zeros(pts.shape[0])
    scale = 3 * math.sqrt(d) / system.r0 * idx.lam

    def cell_of(j, keys):
        return keys if idx.finite else idx.representative(j, keys)

    for i, cs in enumerate(coeffs.sets):
        levels = _level_terms(cs, s, q, cell_of)
        agg = _level_cells(levels, d, combine)
        if not agg:
            continue
        u = system.charts[i].kappa(pts)
        near = np.linalg.norm(u, axis=-1) < system.r0 / 2
        z = u[near] * scale
        for j, (keys, vals) in agg.items():
            cells = np.floor(z * 2.0 ** j).astype(np.int64)
            code = _encode(cells)
            pos = np.clip(np.searchsorted(keys, code), 0, keys.size - 1)
            add = np.where(keys[pos] == code, vals[pos], 0.0)
            if combine == "sum":
                G[near] += add
            else:
                G[near] = np.maximum(G[near], add)
    return G.reshape(grid.shape)


def f_norm_manifold(system: ManifoldFrameSystem, coeffs: ManifoldCoefficients, params: NormParams) -> float:
    """|| (sum 2^{jq(s+d/2)} |c|^q chi_{Omega_{j,k,x}})^{1/q} ||_{L^p(M)}.

    Exact (closed-form box volumes) when p = q; otherwise the field is
    sampled on the global grid.
    """
    s, p, q, d = params.s, params.p, params.q, system.d
    if math.isinf(p):
        raise ParameterError("p must be finite")
    if p == q:
        return _weighted_sum(system, coeffs,
                             lambda j, v: (2.0 ** (j * (s + d / 2)) * np.abs(v)) ** p) ** (1 / p)
    G = _grid_field(system, coeffs, s, q)
    r = p if math.isinf(q) else p / q
    return integrate(SampledField(system.grid, G ** r)) ** (1 / p)


def lp_frame_norm(system: ManifoldFrameSystem, coeffs: ManifoldCoefficients, p: float) -> float:
    """|| (sum 2^{jd} |c|^2 chi_{Omega_{j,k,x}})^{1/2} ||_{L^p(M)}."""
    d = system.d
    if not 1 < p < math.inf:
        raise ParameterError("p must lie in (1, inf)")
    if p == 2:
        return math.sqrt(_weighted_sum(system, coeffs, lambda j, v: 2.0 ** (j * d) * v ** 2))
    G = _grid_field(system, coeffs, 0.0, 2.0)
    return integrate(SampledField(system.grid, G ** (p / 2))) ** (1 / p)


def b_norm_manifold(system: ManifoldFrameSystem, coeffs: ManifoldCoefficients, params: NormParams) -> float:
    s, p, q, d = params.s, params.p, params.q, system.d
    terms = []
    for cs in coeffs.sets:
        for j, e, _, vals in cs.items():
            inner = float(np.sum(np.abs(vals) ** p)) ** (1 / p) if vals.size else 0.0
            terms.append(2.0 ** (j * (s + d / 2 - d / p)) * inner)
    if not terms:
        return 0.0
    if math.isinf(q):
        return max(terms)
    return float(np.sum(np.array(terms) ** q)) ** (1 / q)


def fmu_norm_manifold(system: ManifoldFrameSystem, coeffs: ManifoldCoefficients, params) -> float:
    main = f_norm_manifold(system, coeffs, params.base)
    if system.frame.index.finite:
        return main
    return main + max((decay_sup(cs, params.mu) for cs in coeffs.sets), default=0.0)


def fmu_parts(system: ManifoldFrameSystem, coeffs: ManifoldCoefficients, params) -> tuple[float, float]:
    """(main term, decay supremum) of the decay-weighted norm."""
    main = f_norm_manifold(system, coeffs, params.base)
    if system.frame.index.finite:
        return main, 0.0
    return main, max((decay_sup(cs, params.mu) for cs in coeffs.sets), default=0.0)


def directsum_check(system: ManifoldFrameSystem, f, params: NormParams,
                    coeffs: ManifoldCoefficients | None = None) -> dict:
    """Per-piece norms of P_U f and the ratio of their l^p aggregate to the norm of f.

    P_U' P_U = 0 for U' != U, so the coefficients of P_U f live on piece U alone
    and coincide there with those of f.
    """
    coeffs = coeffs or m_analyze(system, f)
    whole = f_norm_manifold(system, coeffs, params)
    n = len(coeffs.sets)
    pieces = []
    for i in range(n):
        only = ManifoldCoefficients([cs if k == i else CoefficientSet(cs.index, cs.jmax)
                                     for k, cs in enumerate(coeffs.sets)])
        pieces.append(f_norm_manifold(system, only, params))
    agg = float(np.sum(np.array(pieces) ** params.p)) ** (1 / params.p)
    ratio = agg / whole if whole > 0 else (1.0 if agg == 0 else math.inf)
    return {"pieces": pieces, "aggregate": agg, "whole": whole, "ratio": ratio}


# ---------------------------------------------------------------- test fields

def random_smooth_field(M: ModelManifold, seed: int, degree: int = 3) -> PointFunc:
    """Seeded random low-degree smooth function (trig polynomial or ambient polynomial)."""
    rng = np.random.default_rng(seed)
    if M.kind == "sphere":
        powers = [(a, b, c) for a in range(degree + 1) for b in range(degree + 1)
                  for c in range(degree + 1) if a + b + c <= degree]
        coef = rng.normal(size=len(powers))

        def f(pts):
            out = np.zeros(pts.shape[:-1])
            for (a, b, c), w in zip(powers, coef):
                out += w * pts[..., 0] ** a * pts[..., 1] ** b * pts[..., 2] ** c
            return out
        return f
    freqs = [n for n in np.ndindex(*([2 * degree + 1] * M.d))]
    freqs = [np.array(n) - degree for n in freqs]
    amps = rng.normal(size=(len(freqs), 2))
    base = 2 * math.pi / M.size

    def f(pts):
        out = np.zeros(pts.shape[:-1])
        for n, (a, b) in zip(freqs, amps):
            ph = base * np.tensordot(pts, n, axes=([-1], [0]))
            decay = 1.0 / (1.0 + float(np.dot(n, n)))
            out += decay * (a * np.cos(ph) + b * np.sin(ph))
        return out
    return f


def geodesic_bump(M: ModelManifold, centre, radius: float) -> PointFunc:
    centre = np.asarray(centre, dtype=float)

    def f(pts):
        rho = M.distance(pts, centre) / radius
        out = np.zeros(rho.shape)
        inside = rho < 1
        out[inside] = np.exp(-1 / (1 - rho[inside] ** 2))
        return out
    return f
