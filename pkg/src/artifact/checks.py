"""Acceptance checks shared by ``artifact verify`` and the test suite.

Every check returns a record ``{name, criterion, value, tolerance, pass, parts,
detail, seconds}``.  ``parts`` holds the measured quantities, each compared with
its own tolerance from :data:`TOLERANCES`; the record value is the number of
failing parts, so ``pass = value <= tolerance`` with tolerance 0.
"""
from __future__ import annotations

import contextlib
import hashlib
import io
import json
import math
import tempfile
import time
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np

from .hestenes import HestenesOp, SimpleHOp, adjoint, apply, folding_projection_1d
from .localframe import (
    analyze, build_frame, build_index, decay_fit, frame_grid, meyer_coefficients, parseval_residual,
    periodized_norm, q_function, q_norm, synthesize, tail_meyer_pair, z_tail, z_tail_norm,
)
from .manifold import (
    build_cover, circle, cover_checks, exp_chart, partition_of_unity, sphere, torus,
    transition_maps,
)
from .mframe import (
    TransportOp, b_norm_manifold, box_layout, build_wavelet_system, decomposition_of_identity,
    directsum_check, f_norm_manifold, lp_frame_norm, lp_ratio, m_analyze, m_synthesize,
    projection_checks, random_smooth_field, system_layout, three_band_layout, transport,
    transport_duality_check, transport_grid,
)
from .numerics import Grid, NormParams, SampledField, inner, l2_norm
from .wavelets1d import MeyerFunctions, MeyerPair, cascade_evaluate, daubechies_filter

# (tolerance, sense): "upper" parts pass when value <= tol and tighten as tol * scale;
# "slope" parts pass when value <= tol (a negative exponent) and tighten as tol / scale.
TOLERANCES: dict[str, tuple[float, str]] = {
    "filters.sum": (1e-12, "upper"),
    "filters.qmf": (1e-12, "upper"),
    "filters.db2_phi_one": (1e-10, "upper"),
    "filters.runtime_s": (1.0, "upper"),
    "meyer_gram.error": (1e-6, "upper"),
    "meyer_gram.runtime_s": (10.0, "upper"),
    "parseval.residual": (1e-3, "upper"),
    "parseval.increase": (0.0, "upper"),
    "parseval.runtime_s": (300.0, "upper"),
    "reconstruction.error": (1e-3, "upper"),
    "folding.idempotence": (1e-6, "upper"),
    "folding.self_adjoint": (1e-6, "upper"),
    "folding.completeness": (1e-6, "upper"),
    "folding.disjointness": (1e-6, "upper"),
    "adjoint.reflection": (1e-7, "upper"),
    "adjoint.chart_transition": (1e-7, "upper"),
    "z_tail.inner_max": (0.0, "upper"),
    "z_tail.slope": (-3.0, "slope"),
    "periodized.log_ratio": (math.log(8), "upper"),
    "periodized.tail_fraction": (1e-3, "upper"),
    "decay.slope": (-4.0, "slope"),
    "transport.torus_isometry": (1e-8, "upper"),
    "transport.sphere_isometry": (1e-4, "upper"),
    "transport.duality": (1e-7, "upper"),
    "decomposition.algebra": (1e-6, "upper"),
    "decomposition.parseval": (1e-6, "upper"),
    "decomposition.lp_refinement_shift": (1e-2, "upper"),
    "manifold_parseval.residual": (1e-3, "upper"),
    "manifold_parseval.reconstruction": (1e-3, "upper"),
    "norms.identity": (1e-10, "upper"),
    "norms.log_ratio": (math.log(4), "upper"),
    "norms.directsum_log_ratio": (math.log(4), "upper"),
    "cover.separation_deficit": (0.0, "upper"),
    "cover.max_gap_over_half_r": (1.0, "upper"),
    "cover.multiplicity_over_bound": (1.0, "upper"),
    "cover.partition_sum": (1e-10, "upper"),
    "cover.pinned": (0.0, "upper"),
    "determinism.mismatch": (0.0, "upper"),
}

CRITERIA = ["filters", "meyer_gram", "parseval", "reconstruction", "folding", "adjoint", "z_tail",
            "periodized", "decay", "transport", "decomposition", "manifold_parseval", "norms",
            "cover", "determinism"]


def tolerance(key: str, scale: float = 1.0) -> float:
    tol, sense = TOLERANCES[key]
    return tol / scale if sense == "slope" else tol * scale


class _Record:
    def __init__(self, name: str, scale: float):
        self.name = name
        self.scale = scale
        self.parts: list[dict] = []
        self.detail: dict = {}

    def part(self, key: str, value: float, label: str | None = None) -> None:
        tol = tolerance(f"{self.name}.{key}", self.scale)
        value = float(value)
        self.parts.append({"name": label or key, "value": value, "tolerance": tol,
                           "pass": bool(value <= tol)})

    def finish(self, seconds: float) -> dict:
        failing = sum(not p["pass"] for p in self.parts)
        return {"name": self.name, "criterion": CRITERIA.index(self.name) + 1,
                "value": failing, "tolerance": 0, "pass": failing == 0,
                "parts": self.parts, "detail": self.detail, "seconds": seconds}


# ---------------------------------------------------------------- shared fixtures

def cube_bump(r: float, centre) -> Callable:
    centre = np.atleast_1d(np.asarray(centre, dtype=float))

    def f(*x):
        rr = sum((xi - ci) ** 2 for xi, ci in zip(x, centre)) / r ** 2
        out = np.zeros(np.shape(rr))
        inside = rr < 1
        out[inside] = np.exp(-1 / (1 - rr[inside]))
        return out
    return f


# five C-infinity bumps supported in Q: (centre along the diagonal, radius)
BUMP_FAMILY = [(0.0, 0.5), (0.1, 0.45), (-0.2, 0.6), (0.3, 0.5), (-0.35, 0.55)]


def bump_family(d: int) -> list[Callable]:
    return [cube_bump(r, [c] + [-c / 2] * (d - 1)) for c, r in BUMP_FAMILY]


def smooth_line_field(grid: Grid, rng: np.random.Generator, envelope: float = 4.0) -> SampledField:
    mesh = grid.mesh()
    out = np.zeros(grid.shape)
    for _ in range(4):
        freq = rng.uniform(-4, 4, grid.dim)
        phase = rng.uniform(0, 2 * np.pi)
        out += rng.standard_normal() * np.cos(sum(w * x for w, x in zip(freq, mesh)) + phase)
    out *= np.exp(-sum(x ** 2 for x in mesh) / envelope)
    return SampledField(grid, out)


def _unit_bump(x, c=0.0, w=1.0):
    t = (np.asarray(x) - c) / w
    out = np.zeros(np.shape(t))
    ok = np.abs(t) < 1
    out[ok] = np.exp(-1 / (1 - t[ok] ** 2))
    return out


@lru_cache(maxsize=None)
def _local_runs(m, d: int) -> tuple:
    """(residual at Jmax, residual at Jmax+1, reconstruction error at Jmax) per bump."""
    idx = build_index(d, m)
    frame = build_frame(idx)
    grid = frame_grid(idx, 128 if d == 1 else 64)
    jmax = idx.j0 + 4
    out = []
    for func in bump_family(d):
        f = SampledField.from_function(grid, func)
        cs = analyze(frame, f, jmax)
        rec = synthesize(cs, frame, grid)
        res1 = parseval_residual(analyze(frame, f, jmax + 1), f)
        out.append((parseval_residual(cs, f), res1, l2_norm(rec - f) / l2_norm(f)))
    return tuple(out)


MANIFOLD_RESOLUTION = {"circle": (128, 128), "torus": (32, 64), "sphere": (256, 64)}


@lru_cache(maxsize=None)
def manifold_system(kind: str):
    M = {"circle": circle(), "torus": torus(), "sphere": sphere()}[kind]
    res, lppu = MANIFOLD_RESOLUTION[kind]
    frame = build_frame(build_index(M.d, "inf"))
    dec = decomposition_of_identity(M, system_layout(M), res)
    return build_wavelet_system(M, dec, frame, 2.0, local_ppu=lppu)


@lru_cache(maxsize=None)
def _manifold_runs(kind: str) -> tuple:
    """(field, sampled field, coefficients, reconstruction) for five seeded fields."""
    sysm = manifold_system(kind)
    out = []
    for seed in range(5):
        f = random_smooth_field(sysm.manifold, seed)
        fs = sysm.manifold.sample(f, sysm.grid)
        cs = m_analyze(sysm, f)
        out.append((f, fs, cs, m_synthesize(sysm, cs)))
    return tuple(out)


# ---------------------------------------------------------------- criteria

def check_filters(rec: _Record) -> None:
    t = time.perf_counter()
    sums, qmf = [], []
    for N in range(1, 11):
        h = daubechies_filter(N).lowpass
        sums.append(abs(h.sum() - math.sqrt(2)))
        qmf.append(max(abs(np.dot(h[: h.size - 2 * m], h[2 * m:]) - (m == 0)) for m in range(N)))
    phi, _ = cascade_evaluate(daubechies_filter(2), 8)
    one = abs(phi.values[256] - (1 + math.sqrt(3)) / 2)
    rec.part("sum", max(sums))
    rec.part("qmf", max(qmf))
    rec.part("db2_phi_one", one)
    rec.part("runtime_s", time.perf_counter() - t)


def meyer_gram_error(radius: float = 16.0, freq_grid: int = 1024) -> float:
    """Max deviation from the identity of the Gram matrix of {phi_0k} and {psi_jk}, j <= 2, |k| <= 4."""
    f = MeyerFunctions(MeyerPair(freq_grid=freq_grid, truncation_radius=radius))
    dx = 2.0 ** -7
    x = np.arange(-radius - 6, radius + 6, dx)
    rows = [f(0, x - k) for k in range(-4, 5)]
    rows += [2 ** (j / 2) * f(1, 2 ** j * x - k) for j in range(3) for k in range(-4, 5)]
    E = np.array(rows)
    return float(np.abs(E @ E.T * dx - np.eye(E.shape[0])).max())


def check_meyer_gram(rec: _Record) -> None:
    t = time.perf_counter()
    err = meyer_gram_error(16.0)
    rec.part("runtime_s", time.perf_counter() - t)
    rec.part("error", err)
    rec.detail["error_at_radius_32"] = meyer_gram_error(32.0)


def check_parseval(rec: _Record) -> None:
    t = time.perf_counter()
    worst, increase = 0.0, -math.inf
    for m in (3, "inf"):
        for d in (1, 2):
            runs = _local_runs(m, d)
            r0 = max(r[0] for r in runs)
            worst = max(worst, r0)
            increase = max(increase, max(r[1] - r[0] for r in runs))
            rec.detail[f"m={m},d={d}"] = {"residual": r0, "residual_next_level": max(r[1] for r in runs)}
    rec.part("residual", worst)
    rec.part("increase", max(increase, 0.0))
    rec.part("runtime_s", time.perf_counter() - t)


def check_reconstruction(rec: _Record) -> None:
    worst = 0.0
    for m in (3, "inf"):
        for d in (1, 2):
            e = max(r[2] for r in _local_runs(m, d))
            rec.detail[f"m={m},d={d}"] = e
            worst = max(worst, e)
    rec.part("error", worst)


def check_folding(rec: _Record) -> None:
    grid = Grid.from_ppu([(-2, 2)], 128)
    rng = np.random.default_rng(0)
    H = folding_projection_1d(-1.0, 1.0, 0.25)
    Hstar = adjoint(H)
    P1 = folding_projection_1d(-1.5, 0.0, 0.25)
    P2 = folding_projection_1d(0.0, 1.5, 0.25)
    x = grid.axis(0)
    w = dict(idempotence=0.0, self_adjoint=0.0, completeness=0.0, disjointness=0.0)
    for _ in range(10):
        f = smooth_line_field(grid, rng)
        Hf = H.apply(f)
        w["idempotence"] = max(w["idempotence"], l2_norm(H.apply(Hf) - Hf))
        w["self_adjoint"] = max(w["self_adjoint"], l2_norm(Hf - apply(Hstar, f)))
        inside = f.with_values(f.values * _unit_bump(x, 0.0, 1.2))
        w["completeness"] = max(w["completeness"],
                                l2_norm(P1.apply(inside) + P2.apply(inside) - inside))
        w["disjointness"] = max(w["disjointness"], l2_norm(P1.apply(P2.apply(f))))
    for k, v in w.items():
        rec.part(k, v)


def check_adjoint(rec: _Record) -> None:
    grid1 = Grid.from_ppu([(-2, 2)], 128)
    a = 0.25
    refl = HestenesOp((SimpleHOp(lambda x: _unit_bump(x, a, 0.7) * (1 + 0.3 * x),
                                 lambda x: (2 * a - x,), lambda y: (2 * a - y,)),))
    S = sphere()
    x1 = np.array([0.0, 0.0, 1.0])
    x2 = np.array([math.sin(0.4), 0.0, math.cos(0.4)])
    fwd, inv, jac = transition_maps(exp_chart(S, x1, 1.0), exp_chart(S, x2, 1.0))
    trans = HestenesOp((SimpleHOp(lambda u, v: _unit_bump(np.hypot(u, v), 0.0, 0.5) * (1 + 0.2 * u),
                                  fwd, inv, jac),))
    grid2 = Grid.from_ppu([(-1.5, 1.5), (-1.5, 1.5)], 128)
    worst = {"reflection": 0.0, "chart_transition": 0.0}
    for name, H, grid, env, seed in (("reflection", refl, grid1, 4.0, 0),
                                     ("chart_transition", trans, grid2, 1.0, 100)):
        rng = np.random.default_rng(seed)
        Hs = adjoint(H)
        for _ in range(10):
            f, g = smooth_line_field(grid, rng, env), smooth_line_field(grid, rng, env)
            worst[name] = max(worst[name], abs(inner(apply(H, f), g) - inner(f, apply(Hs, g))))
    for k, v in worst.items():
        rec.part(k, v)


def check_z_tail(rec: _Record) -> None:
    grid = Grid.from_ppu([(-1, 1)], 128)
    f = SampledField.from_function(grid, cube_bump(0.5, 0.0))
    P = NormParams(0, 2, 2, 1)
    cs = meyer_coefficients(f, 4, tail_meyer_pair())
    lams = [2, 4, 8]
    inner_max = 0.0
    for lam in lams:
        zone = Grid.from_ppu([(-2 * lam - 1, 2 * lam + 1)], 64)
        q = q_function(z_tail(cs, lam), P, zone).values
        inner_max = max(inner_max, float(np.abs(q[zone.axis(0) < 2 * lam + 1]).max()))
    z = [z_tail_norm(f, lam, P, 4) for lam in lams]
    slope = float(np.polyfit(np.log(lams), np.log(z), 1)[0])
    rec.part("inner_max", inner_max)
    rec.part("slope", slope)
    rec.detail["norms"] = dict(zip(map(str, lams), z))


def check_periodized(rec: _Record) -> None:
    grid = Grid.from_ppu([(-1, 1)], 128)
    P = NormParams(0, 2, 2, 1)
    ratios, tails = [], []
    for func in bump_family(1):
        f = SampledField.from_function(grid, func)
        cs = meyer_coefficients(f, 4, tail_meyer_pair())
        ratios.append(periodized_norm(cs, P, 10) / q_norm(cs, P) ** 2)
        total, tail = periodized_norm(cs, P, 42, with_tail=True)
        tails.append(tail / total)
    rec.part("log_ratio", max(abs(math.log(r)) for r in ratios))
    rec.part("tail_fraction", max(tails))
    rec.detail["ratios"] = ratios


def check_decay(rec: _Record) -> None:
    grid = Grid.from_ppu([(-1, 1)], 128)
    f = SampledField.from_function(grid, cube_bump(0.5, 0.0))
    cs = meyer_coefficients(f, 2, tail_meyer_pair())
    slopes = [decay_fit(cs, j) for j in (0, 1, 2)]
    rec.part("slope", max(slopes))
    rec.detail["slopes"] = slopes


def _chart_bump(d: int):
    return cube_bump(3 * math.sqrt(d) * 0.95, [0.0] * d)


def _transport_isometry(M, centre, r, resolution) -> float:
    ch = exp_chart(M, centre, r)
    bump = _chart_bump(M.d)
    lg = transport_grid(M.d, 64)
    local = SampledField.from_function(lg, bump)
    out = transport(TransportOp(ch, 2.0), lambda y: bump(*np.moveaxis(y, -1, 0)), M.global_grid(resolution))
    return abs(l2_norm(out) / l2_norm(local) - 1)


def check_transport(rec: _Record) -> None:
    T, S = torus(), sphere()
    pole = np.array([0.2, 0.3, 0.93])
    rec.part("torus_isometry", _transport_isometry(T, T.points_from_coords(0.3, 0.3), 1.5, 256))
    rec.part("sphere_isometry", _transport_isometry(S, pole / np.linalg.norm(pole), 1.5, 256))
    worst = 0.0
    for M, centre, res in ((T, T.points_from_coords(0.3, 0.3), 32), (S, np.array([1.0, 0, 0]), 512)):
        bump = _chart_bump(M.d)
        f = lambda y: bump(*np.moveaxis(y, -1, 0))  # noqa: E731
        h = random_smooth_field(M, 3)
        for p in (1.5, 2.0, 3.0):
            r = transport_duality_check(TransportOp(exp_chart(M, centre, 1.2), p), f, h,
                                        transport_grid(M.d, 64), M.global_grid(res))
            rec.detail[f"{M.kind}.p={p}"] = r
            worst = max(worst, r)
    rec.part("duality", worst)


def check_decomposition(rec: _Record) -> None:
    setups = {"circle": (circle(), box_layout(circle(), 2), 256),
              "torus": (torus(), box_layout(torus(), 2), 64),
              "sphere": (sphere(), three_band_layout(), 128)}
    algebra, pars, shift = 0.0, 0.0, 0.0
    for name, (M, layout, res) in setups.items():
        dec = decomposition_of_identity(M, layout, res)
        fields = [M.sample(random_smooth_field(M, s), dec.grid) for s in range(10)]
        w = projection_checks(dec, fields)
        algebra = max(algebra, w["idempotence"], w["disjointness"], w["completeness"], w["self_adjoint"])
        pars = max(pars, w["parseval"])
        fine = decomposition_of_identity(M, layout, 2 * res)
        intervals = {}
        for p in (1.5, 3.0):
            r1 = [lp_ratio(dec, f, p) for f in fields[:5]]
            r2 = [lp_ratio(fine, fine.manifold.sample(random_smooth_field(M, s), fine.grid), p)
                  for s in range(5)]
            shift = max(shift, float(np.max(np.abs(np.subtract(r1, r2)))))
            intervals[f"p={p}"] = [min(r1), max(r1)]
        rec.detail[name] = {"pieces": len(dec), **intervals}
    rec.part("algebra", algebra)
    rec.part("parseval", pars)
    rec.part("lp_refinement_shift", shift)


def check_manifold_parseval(rec: _Record) -> None:
    worst_r, worst_e = 0.0, 0.0
    for kind in ("circle", "torus", "sphere"):
        runs = _manifold_runs(kind)
        r = max(abs(cs.energy() - l2_norm(fs) ** 2) / l2_norm(fs) ** 2 for _, fs, cs, _ in runs)
        e = max(l2_norm(rc - fs) / l2_norm(fs) for _, fs, _, rc in runs)
        rec.detail[kind] = {"residual": r, "reconstruction": e, "pieces": len(manifold_system(kind).decomposition)}
        worst_r, worst_e = max(worst_r, r), max(worst_e, e)
    rec.part("residual", worst_r)
    rec.part("reconstruction", worst_e)


def check_norms(rec: _Record) -> None:
    identity, log_ratio = 0.0, 0.0
    p2 = NormParams(0, 2, 2)
    for kind in ("circle", "torus", "sphere"):
        sysm = manifold_system(kind)
        lam = sysm.frame.index.lam
        unit = (3 * math.sqrt(sysm.d) * lam / sysm.r0) ** (sysm.d / 2)
        raw = []
        for _, fs, cs, _ in _manifold_runs(kind):
            a = f_norm_manifold(sysm, cs, p2)
            b = lp_frame_norm(sysm, cs, 2.0)
            identity = max(identity, abs(a - b) / b)
            raw.append(a / l2_norm(fs))
            log_ratio = max(log_ratio, abs(math.log(unit * a / l2_norm(fs))))
        rec.detail[kind] = {"ratio": raw, "unit_volume_factor": unit,
                            "besov_ratio": [b_norm_manifold(sysm, cs, p2) / l2_norm(fs)
                                            for _, fs, cs, _ in _manifold_runs(kind)]}
    sysm = manifold_system("sphere")
    ds = []
    for f, _, cs, _ in _manifold_runs("sphere"):
        for params in (NormParams(0, 2, 2), NormParams(0, 1.5, 2)):
            ds.append(directsum_check(sysm, f, params, cs)["ratio"])
    rec.detail["directsum_ratios"] = ds
    rec.part("identity", identity)
    rec.part("log_ratio", log_ratio)
    rec.part("directsum_log_ratio", max(abs(math.log(r)) for r in ds))


def check_cover(rec: _Record) -> None:
    S = sphere()
    cover = build_cover(S, 0.3)
    chk = cover_checks(cover, l=1.0, n_samples=10_000)
    rec.part("separation_deficit", max(0.0, cover.r / 2 - chk["min_separation"]))
    rec.part("max_gap_over_half_r", chk["max_gap"] / (cover.r / 2))
    rec.part("multiplicity_over_bound", chk["multiplicity"] / chk["multiplicity_bound"])
    pts = S.uniform_points(10_000, np.random.default_rng(3))
    rec.part("partition_sum", float(np.abs(partition_of_unity(cover).alphas(pts).sum(-1) - 1).max()))
    pinned = partition_of_unity(cover, pinned=2).alphas(pts)
    near = S.distance(pts, cover.centers[2]) <= cover.r / 2
    rec.part("pinned", float(np.abs(pinned[near, 2] - 1).max()) if near.any() else math.inf)
    rec.detail.update(centers=len(cover.centers), multiplicity=chk["multiplicity"],
                      bound=chk["multiplicity_bound"], pinned_samples=int(near.sum()))


DETERMINISM_MANIFEST = {"manifold": "torus", "resolution": 16, "local_ppu": 32,
                        "field": {"kind": "random"}}


def check_determinism(rec: _Record) -> None:
    from . import cli

    digests = []
    with tempfile.TemporaryDirectory() as tmp:
        cfg = Path(tmp) / "manifest.json"
        cfg.write_text(json.dumps(DETERMINISM_MANIFEST))
        for run in range(2):
            out = Path(tmp) / f"run{run}"
            for cmd in ("build", "analyze"):
                with contextlib.redirect_stdout(io.StringIO()):
                    code = cli.main([cmd, "--config", str(cfg), "--out", str(out), "--seed", "11"])
                if code != 0:
                    raise RuntimeError(f"{cmd} exited with {code}")
            digests.append(hashlib.sha256((out / "coefficients.csv").read_bytes()).hexdigest())
    rec.part("mismatch", float(digests[0] != digests[1]))
    rec.detail["sha256"] = digests


CHECKS = {name: globals()[f"check_{name}"] for name in CRITERIA}


def run_check(name: str, scale: float = 1.0) -> dict:
    rec = _Record(name, scale)
    t = time.perf_counter()
    CHECKS[name](rec)
    return rec.finish(time.perf_counter() - t)


def run_checks(names=None, scale: float = 1.0) -> list[dict]:
    names = CRITERIA if not names else [n for n in CRITERIA if n in set(names)]
    return [run_check(n, scale) for n in names]
