import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from hnlab.cli import main
from hnlab.config import OUTPUT_ENV
from hnlab.manifest import verify_manifest

FAST = ["--n-steps", "2000", "--n-reps", "2"]


def _run(tmp_path, *args):
    return main(list(args) + ["-o", str(tmp_path)])


def _svg_counts(path):
    root = ET.parse(path).getroot()
    return {g.get("data-label"): int(g.get("data-count")) for g in root.iter("{http://www.w3.org/2000/svg}g")
            if g.get("data-count") is not None}


def test_spectrum_of_free_four_site_ring(tmp_path):
    assert _run(tmp_path, "spectrum", "--N", "4", "--g", "0.1", "--potential", '{"kind": "constant", "v": 0}') == 0
    doc = json.loads((tmp_path / "spectrum.json").read_text())
    lam = np.array([complex(*z) for z in doc["eigenvalues"]])
    expected = [2 * math.cosh(0.1), -2 * math.cosh(0.1), 2j * math.sinh(0.1), -2j * math.sinh(0.1)]
    for z in expected:
        assert np.min(np.abs(lam - z)) < 1e-12
    assert sum(doc["is_real"]) == 2
    assert _svg_counts(tmp_path / "spectrum.svg") == {"non-real": 2, "real": 2}
    assert (tmp_path / "spectrum.png").read_bytes()[:4] == b"\x89PNG"
    assert verify_manifest(tmp_path / "manifest.json") == []


def test_flow_and_bands_write_tables(tmp_path):
    assert _run(tmp_path, "flow", "--N", "12", "--g-max", "0.3") == 0
    assert _run(tmp_path, "bands", "--N", "12") == 0
    header = (tmp_path / "bands.csv").read_text().splitlines()[0]
    assert "left" in header or "lo" in header
    assert (tmp_path / "flow.svg").exists() and (tmp_path / "discriminant.csv").exists()


def test_figure1_has_spectrum_and_curve(tmp_path):
    assert _run(tmp_path, "figure1", "--N", "40", "--resolution", "48,16", *FAST) == 0
    counts = _svg_counts(tmp_path / "figure1.svg")
    assert counts["real"] + counts["non-real"] == 40
    for name in ("figure1.csv", "curve.csv", "field.csv", "figure1_plot.csv", "figure1.png"):
        assert (tmp_path / name).stat().st_size > 0
    assert (tmp_path / "curve.csv").read_text().splitlines()[0] == "line,re,im"


def test_figure2_has_trajectories_and_profile(tmp_path):
    assert _run(tmp_path, "figure2", "--N", "16", "--E-points", "21", *FAST) == 0
    counts = _svg_counts(tmp_path / "figure2.svg")
    assert counts["gamma"] == 21
    assert any(k.startswith("lambda_") for k in counts)
    assert (tmp_path / "flow.csv").exists() and (tmp_path / "figure2.png").exists()


def test_unknown_key_is_a_usage_error(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "spectrum", "Nsites": 10}))
    with pytest.raises(SystemExit) as exc:
        main(["spectrum", "--config", str(cfg), "-o", str(tmp_path)])
    assert exc.value.code == 2
    assert "Nsites" in capsys.readouterr().err


def test_bad_flag_value_is_a_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["spectrum", "--N", "2", "-o", str(tmp_path)])
    assert exc.value.code == 2
    assert "'N'" in capsys.readouterr().err


def test_missing_output_directory_is_created(tmp_path):
    out = tmp_path / "a" / "b"
    assert main(["spectrum", "--N", "5", "-o", str(out)]) == 0
    assert (out / "manifest.json").exists()


def test_environment_sets_default_output(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["spectrum", "--N", "5"]) == 0
    assert (tmp_path / "env" / "spectrum.csv").exists()


def test_numerical_failure_reports_seed(tmp_path, capsys):
    # too few transfer steps for a Lyapunov estimate
    status = _run(tmp_path, "lyapunov", "--n-steps", "10", "--seed", "5")
    assert status == 3
    assert "seed=5" in capsys.readouterr().err


def test_reruns_are_bit_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["spectrum", "--N", "30", "--g", "0.4", "--seed", "3", "-o", str(d)]) == 0
    ma = {f["path"]: f["sha256"] for f in json.loads((a / "manifest.json").read_text())["files"]}
    mb = {f["path"]: f["sha256"] for f in json.loads((b / "manifest.json").read_text())["files"]}
    # config.json records the output directory itself, so it differs between the two runs
    data = [p for p in ma if not p.endswith(".png") and p != "config.json"]
    assert data and all(ma[p] == mb[p] for p in data)


def test_help_lists_output_columns(capsys):
    with pytest.raises(SystemExit):
        main(["spectrum", "--help"])
    out = capsys.readouterr().out
    assert "output files" in out and "spectrum.csv" in out
