"""Command-line driver: ``artifact build|analyze|verify``.

Exit codes: 0 success, 1 a check failed, 2 configuration error, 3 missing
build artifacts.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .errors import CoverError, DomainError, FrameIndexError, ParameterError, UnsupportedCoverError
from .runner import REQUIRED_ARTIFACTS, build, load_manifest, run_analysis, write_build

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_MISSING = 0, 1, 2, 3
CONFIG_ERRORS = (ParameterError, UnsupportedCoverError, CoverError, DomainError, FrameIndexError,
                 json.JSONDecodeError, KeyError, TypeError, ValueError)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="artifact", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="manifest JSON")
    common.add_argument("--out", type=Path, default=Path("artifact-out"), help="output directory")
    common.add_argument("--seed", type=int, default=0, help="seed for generated test fields")
    common.add_argument("--resolution", type=int, help="override the manifest grid resolution")
    sub.add_parser("build", parents=[common], help="build a frame or manifold system and write its artifacts")
    an = sub.add_parser("analyze", parents=[common], help="analyze a field; write coefficients.csv and report.json")
    an.add_argument("--field", choices=["random", "zero", "bump", "zonal"],
                    help="override the manifest field kind")
    ve = sub.add_parser("verify", parents=[common], help="run the acceptance checks")
    ve.add_argument("--only", help="comma-separated check names")
    ve.add_argument("--tol-scale", type=float, default=1.0, help="multiply every tolerance (slopes divide)")
    return ap


def _error(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def cmd_build(args) -> int:
    try:
        if args.config is not None and not args.config.exists():
            _error(f"manifest {args.config} does not exist")
            return EXIT_CONFIG
        man = load_manifest(args.config, args.resolution)
        built = build(man)
    except CONFIG_ERRORS as exc:
        _error(str(exc))
        return EXIT_CONFIG
    files = write_build(built, args.out)
    print(f"wrote {', '.join(files)} to {args.out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    missing = [n for n in REQUIRED_ARTIFACTS if not (args.out / n).exists()]
    if missing:
        _error(f"missing build artifacts in {args.out}: {', '.join(missing)}; run 'artifact build' first")
        return EXIT_MISSING
    try:
        stored = json.loads((args.out / "manifest.json").read_text())
        if args.config is not None:
            given = load_manifest(args.config, args.resolution).to_json()
            if given != stored:
                _error("manifest differs from the one used to build; rebuild first")
                return EXIT_CONFIG
        man = load_manifest(args.out / "manifest.json", args.resolution)
        spec = dict(man.field)
        if args.field:
            spec = {"kind": args.field}
        t = time.perf_counter()
        built = build(man)
        result = run_analysis(built, spec, args.seed)
    except CONFIG_ERRORS as exc:
        _error(str(exc))
        return EXIT_CONFIG
    (args.out / "coefficients.csv").write_text(result.csv)
    report = {"config": man.to_json(), "seed": args.seed, **result.report,
              "seconds": time.perf_counter() - t}
    (args.out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    print(f"{report['coefficients']} coefficients, parseval residual {report['parseval_residual']}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .checks import CRITERIA, run_checks

    names = None
    if args.only:
        names = [n.strip() for n in args.only.split(",") if n.strip()]
        unknown = sorted(set(names) - set(CRITERIA))
        if unknown:
            _error(f"unknown checks {unknown}; choose from {', '.join(CRITERIA)}")
            return EXIT_CONFIG
    if not args.tol_scale > 0:
        _error("--tol-scale must be positive")
        return EXIT_CONFIG
    t = time.perf_counter()
    records = run_checks(names, args.tol_scale)
    for r in records:
        print(f"{'PASS' if r['pass'] else 'FAIL'} {r['criterion']:2d} {r['name']:<18} {r['seconds']:7.1f}s")
    report = {"config": {"only": names, "tol_scale": args.tol_scale, "seed": args.seed},
              "checks": records, "pass": all(r["pass"] for r in records),
              "seconds": time.perf_counter() - t}
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    return EXIT_OK if report["pass"] else EXIT_FAIL


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    return {"build": cmd_build, "analyze": cmd_analyze, "verify": cmd_verify}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
