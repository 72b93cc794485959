"""Manifest parsing and the build/analyze pipeline shared by the CLI and the checks."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError, UnsupportedCoverError
from .localframe import (
    LocalFrame, analyze, b_norm_discrete, build_frame,
    build_index, f_norm_discrete, frame_grid, synthesize,
)
from .manifold import ModelManifold, build_cover, parse_manifold
from .mframe import (
    BoxLayout, ManifoldFrameSystem, b_norm_manifold,
    band_layout, box_layout, build_wavelet_system, decomposition_of_identity, f_norm_manifold,
    geodesic_bump, layout_for_radius, lp_frame_norm, m_analyze, m_synthesize,
    random_smooth_field, system_layout,
)
from .numerics import Grid, NormParams, SampledField, l2_norm, lp_norm
from .wavelets1d import FilterPair

DEFAULTS = {
    "manifold": "torus",
    "cover": "auto",
    "frame": {"m": "inf", "j0": "auto", "epsilon": 0.5, "lambda": 10, "N": None},
    "p": 2.0,
    "jmax": None,
    "resolution": None,
    "local_ppu": 64,
    "field": {"kind": "random"},
}

DEFAULT_RESOLUTION = {"cube": 64, "circle": 128, "torus": 32, "sphere": 256}


@dataclass
class Manifest:
    manifold: str
    cover: object
    frame: dict
    p: float
    jmax: int | None
    resolution: int
    local_ppu: int
    field: dict
    raw: dict = field(default_factory=dict)

    @property
    def is_cube(self) -> bool:
        return self.manifold.startswith("cube")

    def to_json(self) -> dict:
        return {"manifold": self.manifold, "cover": self.cover, "frame": self.frame, "p": self.p,
                "jmax": self.jmax, "resolution": self.resolution, "local_ppu": self.local_ppu,
                "field": self.field}


def load_manifest(path: str | Path | None, resolution: int | None = None) -> Manifest:
    raw = {} if path is None else json.loads(Path(path).read_text())
    if not isinstance(raw, dict):
        raise ParameterError("manifest must be a JSON object")
    return parse_manifest(raw, resolution)


def parse_manifest(raw: dict, resolution: int | None = None) -> Manifest:
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ParameterError(f"unknown manifest keys: {sorted(unknown)}")
    cfg = {**DEFAULTS, **raw}
    frame = {**DEFAULTS["frame"], **(raw.get("frame") or {})}
    selector = str(cfg["manifold"])
    kind = selector.split(":")[0]
    if kind not in DEFAULT_RESOLUTION:
        raise ParameterError(f"bad manifold selector {selector!r}")
    res = resolution if resolution is not None else cfg["resolution"]
    res = DEFAULT_RESOLUTION[kind] if res is None else int(res)
    if res < 2:
        raise ParameterError("resolution must be >= 2")
    eps = float(frame["epsilon"])
    if not 0 < eps <= 0.5:
        raise ParameterError("epsilon out of range (0, 1/2]")
    return Manifest(selector, cfg["cover"], frame, float(cfg["p"]),
                    None if cfg["jmax"] is None else int(cfg["jmax"]), res,
                    int(cfg["local_ppu"]), dict(cfg["field"]), raw)


def cube_dimension(selector: str) -> int:
    parts = selector.split(":")
    try:
        return int(parts[1]) if len(parts) > 1 else 1
    except ValueError as exc:
        raise ParameterError(f"bad manifold selector {selector!r}") from exc


def make_frame(man: Manifest, d: int) -> LocalFrame:
    fr = man.frame
    idx = build_index(d, fr["m"], fr["j0"], float(fr["epsilon"]), fr["N"], int(fr["lambda"]))
    return build_frame(idx)


def make_layout(M: ModelManifold, cover):
    """Decomposition layout from a manifest cover entry."""
    if cover in (None, "auto"):
        return system_layout(M), None
    if isinstance(cover, str) and cover.startswith("auto:"):
        r = float(cover.split(":", 1)[1])
        # the ball cover validates r (precondition errors surface as CoverError)
        balls = build_cover(M, r)
        return layout_for_radius(M, r), balls
    if isinstance(cover, dict) and "boxes" in cover:
        boxes = cover["boxes"]
        if M.kind == "sphere":
            raise UnsupportedCoverError("the sphere needs a band layout")
        if isinstance(boxes, int):
            return box_layout(M, boxes, float(cover.get("collar_frac", 0.15))), None
        edges = tuple(tuple(float(v) for v in axis) for axis in boxes)
        return BoxLayout(edges, float(cover["collar"])), None
    if isinstance(cover, dict) and "bands" in cover:
        return band_layout(cover["bands"], cover["sectors"], float(cover["collar_t"]),
                           float(cover.get("collar_phi", 0.15))), None
    raise UnsupportedCoverError(f"cover entry {cover!r} is not auto, auto:r, boxes or bands")


@dataclass
class Built:
    manifest: Manifest
    frame: LocalFrame
    manifold: ModelManifold | None = None
    system: ManifoldFrameSystem | None = None
    layout: object = None
    ball_cover: object = None

    @property
    def jmax(self) -> int:
        if self.system is not None:
            return self.system.jmax
        j = self.manifest.jmax
        return self.frame.index.j0 + 4 if j is None else j

    @property
    def grid(self) -> Grid:
        if self.system is not None:
            return self.system.grid
        return frame_grid(self.frame.index, self.manifest.resolution)


def build(man: Manifest) -> Built:
    if man.is_cube:
        return Built(man, make_frame(man, cube_dimension(man.manifold)))
    M = parse_manifold(man.manifold)
    frame = make_frame(man, M.d)
    layout, balls = make_layout(M, man.cover)
    dec = decomposition_of_identity(M, layout, man.resolution, man.p)
    system = build_wavelet_system(M, dec, frame, man.p, man.jmax, man.local_ppu)
    return Built(man, frame, M, system, layout, balls)


# ---------------------------------------------------------------- fields

def _cube_bump(centre, radius):
    centre = np.asarray(centre, dtype=float)

    def f(*x):
        rr = sum((xi - ci) ** 2 for xi, ci in zip(x, centre)) / radius ** 2
        out = np.zeros(np.shape(rr))
        inside = rr < 1
        out[inside] = np.exp(-1 / (1 - rr[inside]))
        return out
    return f


def _cube_random(d: int, seed: int):
    """Seeded sum of shifted bumps supported inside Q."""
    rng = np.random.default_rng(seed)
    parts = [(rng.normal(), rng.uniform(-0.3, 0.3, d), rng.uniform(0.3, 0.6)) for _ in range(3)]

    def f(*x):
        return sum(a * _cube_bump(c, r)(*x) for a, c, r in parts)
    return f


def make_field(built: Built, spec: dict, seed: int):
    """Callable test field (points for manifolds, coordinates for the cube)."""
    kind = spec.get("kind", "random")
    if built.system is None:
        d = built.frame.index.d
        if kind == "zero":
            return lambda *x: np.zeros(np.shape(x[0]))
        if kind == "bump":
            return _cube_bump(spec.get("centre", [0.0] * d), float(spec.get("radius", 0.5)))
        if kind == "random":
            return _cube_random(d, seed)
        raise ParameterError(f"field kind {kind!r} is not available on the cube")
    M = built.manifold
    if kind == "zero":
        return lambda pts: np.zeros(pts.shape[:-1])
    if kind == "random":
        return random_smooth_field(M, seed)
    if kind == "bump":
        centre = spec.get("centre")
        if centre is None:
            centre = built.system.centres[0]
        elif len(centre) == M.d and M.kind != "sphere":
            centre = M.points_from_coords(*centre)
        return geodesic_bump(M, centre, float(spec.get("radius", 1.0)))
    if kind == "zonal":
        if M.kind != "sphere":
            raise ParameterError("the zonal field needs the sphere")
        return lambda pts: pts[..., 2]
    raise ParameterError(f"unknown field kind {kind!r}")


# ---------------------------------------------------------------- analysis

@dataclass
class AnalysisResult:
    csv: str
    report: dict


def _fmt(v: float) -> float | str:
    return v if math.isfinite(v) else str(v)


def run_analysis(built: Built, spec: dict, seed: int) -> AnalysisResult:
    """Coefficients (CSV text) and a report with Parseval residual and norms."""
    func = make_field(built, spec, seed)
    p = built.manifest.p
    params = NormParams(0.0, p, p, built.frame.index.d)
    if built.system is None:
        grid = built.grid
        f = SampledField.from_function(grid, func)
        cs = analyze(built.frame, f, built.jmax)
        rec = synthesize(cs, built.frame, grid) if len(cs) else SampledField.zeros(grid)
        energy = cs.energy()
        norms = {"f_norm": f_norm_discrete(cs, params), "b_norm": b_norm_discrete(cs, params)}
        csv = cs.to_csv(header=True)
        count = len(cs)
    else:
        system = built.system
        M = built.manifold
        f = M.sample(func, system.grid)
        cs = m_analyze(system, func)
        rec = m_synthesize(system, cs)
        energy = cs.energy()
        norms = {
            "f_norm_manifold": f_norm_manifold(system, cs, params),
            "b_norm_manifold": b_norm_manifold(system, cs, params),
            "lp_frame_norm": lp_frame_norm(system, cs, 2.0),
        }
        csv = cs.to_csv()
        count = len(cs)
    nf = l2_norm(f)
    report = {
        "field": {**spec, "seed": seed},
        "coefficients": count,
        "energy": energy,
        "field_l2": nf,
        "norms": {k: _fmt(v) for k, v in norms.items()},
    }
    if nf == 0:
        # the relative residual is undefined for the zero field; it passes when nothing leaked
        report["parseval_residual"] = "undefined"
        report["reconstruction_error"] = "undefined"
        report["pass"] = bool(energy == 0 and not np.any(rec.values))
    else:
        report["parseval_residual"] = abs(energy - nf ** 2) / nf ** 2
        report["reconstruction_error"] = lp_norm(rec - f, p) / lp_norm(f, p)
        report["pass"] = bool(report["parseval_residual"] < 1e-3 and report["reconstruction_error"] < 1e-3)
    return AnalysisResult(csv, report)


# ---------------------------------------------------------------- build artifacts

def _generator_table(frame: LocalFrame) -> str:
    """Sampled scaling function and wavelet on their (truncated) support."""
    funcs = frame.funcs
    gen = frame.generator
    if isinstance(gen, FilterPair):
        lo, hi = 0.0, 2.0 * gen.N - 1
    else:
        lo, hi = -float(gen.truncation_radius), float(gen.truncation_radius) + 1
    x = np.arange(lo, hi + 1 / 256, 1 / 256)
    rows = ["x,phi,psi"]
    rows += [f"{a:.17g},{b:.17g},{c:.17g}" for a, b, c in zip(x, funcs(0, x), funcs(1, x))]
    return "\n".join(rows) + "\n"


def write_build(built: Built, out: Path) -> list[str]:
    out.mkdir(parents=True, exist_ok=True)
    idx = built.frame.index
    written = []

    def put(name, text):
        (out / name).write_text(text)
        written.append(name)

    put("manifest.json", json.dumps(built.manifest.to_json(), indent=2, sort_keys=True) + "\n")
    levels = []
    for j in range(idx.j0, built.jmax + 1):
        entry = {"j": j, "E": [list(e) for e in idx.E(j)], "Lambda": list(idx.lambda_bounds(j))}
        if idx.finite:
            entry["Gamma"] = list(idx.gamma_bounds(j))
        levels.append(entry)
    index = {"d": idx.d, "m": "inf" if not idx.finite else int(idx.m), "j0": idx.j0,
             "jmax": built.jmax, "epsilon": idx.epsilon, "lambda": idx.lam, "N": idx.N,
             "levels": levels}
    put("index.json", json.dumps(index, indent=2) + "\n")
    put("generator.csv", _generator_table(built.frame))
    if built.system is not None:
        sysm = built.system
        dec = sysm.decomposition
        rows = ["x_id,label," + ",".join(f"c_{i + 1}" for i in range(sysm.manifold.ambient_dim))]
        for i, pc in enumerate(dec.pieces):
            rows.append(f"{i},{pc.label}," + ",".join(f"{v:.17g}" for v in pc.center))
        put("cover.csv", "\n".join(rows) + "\n")
        info = {"manifold": built.manifest.manifold, "pieces": len(dec), "r0": sysm.r0,
                "r_inj": sysm.manifold.r_inj, "p": sysm.p, "jmax": sysm.jmax,
                "grid_shape": list(sysm.grid.shape), "local_grid_shape": list(sysm.local_grid.shape)}
        if built.ball_cover is not None:
            bc = built.ball_cover
            info["ball_cover"] = {"r": bc.r, "centers": len(bc.centers),
                                  "multiplicity": bc.multiplicity_observed}
        put("system.json", json.dumps(info, indent=2) + "\n")
    return written


REQUIRED_ARTIFACTS = ("manifest.json", "index.json")
