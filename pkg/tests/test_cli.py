import json

import pytest

from artifact.checks import TOLERANCES, run_checks, tolerance
from artifact.cli import main
from artifact.runner import parse_manifest


@pytest.fixture
def circle_cfg(tmp_path):
    path = tmp_path / "circle.json"
    path.write_text(json.dumps({"manifold": "circle", "resolution": 64, "local_ppu": 64}))
    return path


def _write(tmp_path, name, body):
    path = tmp_path / name
    path.write_text(json.dumps(body))
    return path


def test_build_and_analyze(circle_cfg, tmp_path):
    out = tmp_path / "run"
    assert main(["build", "--config", str(circle_cfg), "--out", str(out)]) == 0
    for name in ("manifest.json", "index.json", "generator.csv", "cover.csv", "system.json"):
        assert (out / name).exists()
    assert main(["analyze", "--config", str(circle_cfg), "--out", str(out), "--seed", "2"]) == 0
    lines = (out / "coefficients.csv").read_text().splitlines()
    assert lines[0] == "x_id,j,e,k_1,value"
    assert len(lines) > 1
    report = json.loads((out / "report.json").read_text())
    assert report["parseval_residual"] < 1e-3
    assert report["pass"]


def test_analyze_is_deterministic(circle_cfg, tmp_path):
    blobs = []
    for run in range(2):
        out = tmp_path / f"r{run}"
        main(["build", "--config", str(circle_cfg), "--out", str(out)])
        assert main(["analyze", "--out", str(out), "--seed", "5"]) == 0
        blobs.append((out / "coefficients.csv").read_bytes())
    assert blobs[0] == blobs[1]


def test_seed_changes_field(circle_cfg, tmp_path):
    out = tmp_path / "r"
    main(["build", "--config", str(circle_cfg), "--out", str(out)])
    main(["analyze", "--out", str(out), "--seed", "1"])
    a = (out / "coefficients.csv").read_bytes()
    main(["analyze", "--out", str(out), "--seed", "2"])
    assert (out / "coefficients.csv").read_bytes() != a


def test_zero_field(circle_cfg, tmp_path):
    out = tmp_path / "z"
    main(["build", "--config", str(circle_cfg), "--out", str(out)])
    assert main(["analyze", "--out", str(out), "--field", "zero"]) == 0
    assert (out / "coefficients.csv").read_text().splitlines() == ["x_id,j,e,k_1,value"]
    report = json.loads((out / "report.json").read_text())
    assert report["parseval_residual"] == "undefined"
    assert report["pass"]


def test_cube_manifest(tmp_path):
    cfg = _write(tmp_path, "cube.json", {"manifold": "cube:1", "frame": {"m": 2}, "resolution": 128})
    out = tmp_path / "c"
    assert main(["build", "--config", str(cfg), "--out", str(out)]) == 0
    assert main(["analyze", "--out", str(out)]) == 0
    assert (out / "coefficients.csv").read_text().startswith("j,e,k_1,value\n")
    index = json.loads((out / "index.json").read_text())
    assert index["N"] is not None and "Gamma" in index["levels"][0]


def test_epsilon_out_of_range(tmp_path, capsys):
    cfg = _write(tmp_path, "eps.json", {"manifold": "torus", "frame": {"epsilon": 0.7}})
    assert main(["build", "--config", str(cfg), "--out", str(tmp_path / "e")]) == 2
    assert "epsilon out of range" in capsys.readouterr().err


def test_sphere_cover_radius_too_large(tmp_path, capsys):
    cfg = _write(tmp_path, "big.json", {"manifold": "sphere", "cover": "auto:5"})
    assert main(["build", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 2
    assert "cover" in capsys.readouterr().err


@pytest.mark.parametrize("body", [
    {"manifold": "klein"},
    {"manifold": "torus", "colour": 1},
    {"manifold": "sphere", "cover": {"boxes": 2}},
    {"manifold": "circle", "cover": "spiral"},
    {"manifold": "circle", "p": 1.0},
])
def test_config_errors(tmp_path, body):
    cfg = _write(tmp_path, "bad.json", body)
    assert main(["build", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2


def test_missing_config_file(tmp_path):
    assert main(["build", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path / "x")]) == 2


def test_missing_artifacts(tmp_path):
    assert main(["analyze", "--out", str(tmp_path / "empty")]) == 3


def test_analyze_rejects_changed_manifest(circle_cfg, tmp_path):
    out = tmp_path / "m"
    main(["build", "--config", str(circle_cfg), "--out", str(out)])
    other = _write(tmp_path, "other.json", {"manifold": "circle", "resolution": 32})
    assert main(["analyze", "--config", str(other), "--out", str(out)]) == 2


def test_verify_only_filters(tmp_path):
    out = tmp_path / "v"
    assert main(["verify", "--only", "filters", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert [r["name"] for r in report["checks"]] == ["filters"]
    assert report["pass"]


def test_verify_tightened_tolerance_fails(tmp_path):
    out = tmp_path / "v"
    assert main(["verify", "--only", "filters,decay", "--tol-scale", "0.01", "--out", str(out)]) == 1
    report = json.loads((out / "report.json").read_text())
    assert {r["name"] for r in report["checks"]} == {"filters", "decay"}
    assert not report["pass"]


def test_verify_unknown_check(tmp_path):
    assert main(["verify", "--only", "nope", "--out", str(tmp_path / "v")]) == 2


def test_report_pass_matches_tolerances():
    (rec,) = run_checks(["decay"])
    for part in rec["parts"]:
        assert part["tolerance"] == tolerance(f"decay.{part['name']}")
        assert part["pass"] == (part["value"] <= part["tolerance"])
    assert rec["pass"] == (rec["value"] <= rec["tolerance"])


def test_tolerance_scaling_senses():
    assert tolerance("filters.qmf", 0.01) == pytest.approx(1e-14)
    assert tolerance("decay.slope", 0.01) == pytest.approx(-400)
    assert all(sense in ("upper", "slope") for _, sense in TOLERANCES.values())


def test_manifest_defaults():
    man = parse_manifest({})
    assert man.manifold == "torus" and man.resolution == 32 and man.p == 2.0
    assert parse_manifest({"manifold": "sphere"}, resolution=64).resolution == 64
