import csv
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from kerrkit.cli import main, resolve_seed
from kerrkit.model import paper_params
from kerrkit.spectrum import kcq_gap

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
BASE = {"K_MHz": 0.93, "alpha": 2.0, "chi_ab_kHz": 2.91, "T1a_us": 16.0, "T1b_us": 204.0, "n_th": 0.028}


def _write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return p


def _error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_cf_run_center_value(tmp_path):
    out = tmp_path / "out"
    code = main(["run", "exp_cf_tomography", "--config", str(CONFIGS / "cf_coherent.json"), "--out", str(out),
                 "--timestamp", "T0", "--jobs", "1"])
    assert code == 0
    rows = _rows(out / "exp_cf_tomography_T0_7_cf_grid.csv")
    center = [r for r in rows if float(r["beta_re"]) == 0 and float(r["beta_im"]) == 0][0]
    assert float(center["re_exact"]) == pytest.approx(1.0, abs=1e-12)
    manifest = json.loads((out / "exp_cf_tomography_T0_7_manifest.json").read_text())
    assert manifest["config_sha256"] == hashlib.sha256((CONFIGS / "cf_coherent.json").read_bytes()).hexdigest()
    assert all((out / f).exists() for f in manifest["outputs"])
    report = json.loads((out / "exp_cf_tomography_T0_7_report.json").read_text())
    assert "tables" not in report and report["data_files"]


def test_identical_runs_are_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert main(["run", "exp_cf_tomography", "--config", str(CONFIGS / "cf_sampled.json"), "--out", str(out),
                     "--timestamp", "T", "--jobs", "1"]) == 0
        outs.append({p.name: p.read_bytes() for p in out.iterdir() if not p.name.endswith("_manifest.json")})
    assert outs[0] == outs[1]
    assert len(outs[0]) == 2


def test_seed_changes_sampled_output(tmp_path):
    data = []
    for seed in ("1", "2"):
        out = tmp_path / seed
        main(["run", "exp_cf_tomography", "--config", str(CONFIGS / "cf_sampled.json"), "--out", str(out),
              "--timestamp", "T", "--seed", seed, "--jobs", "1"])
        data.append((out / f"exp_cf_tomography_T_{seed}_cf_grid.csv").read_bytes())
    assert data[0] != data[1]


def test_missing_param_is_validation_error(tmp_path, capsys):
    params = dict(BASE)
    del params["K_MHz"]
    cfg = _write(tmp_path, {"experiment": "exp_cf_tomography", "params": params})
    out = tmp_path / "never"
    assert main(["run", "exp_cf_tomography", "--config", str(cfg), "--out", str(out)]) == 2
    err = _error(capsys)
    assert err["field_path"] == "params.K_MHz"
    assert set(err) <= {"code", "message", "field_path"}
    assert not out.exists()


def test_unparseable_config(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["validate", "--config", str(p)]) == 2


def test_validate_valid_config(capsys):
    assert main(["validate", "--config", str(CONFIGS / "cf_coherent.json")]) == 0
    assert json.loads(capsys.readouterr().out)["valid"] is True


def test_validate_truncation(tmp_path, capsys):
    cfg = _write(tmp_path, {"experiment": "exp_storage_coherence", "params": BASE,
                            "sweep": {"alpha_sq": [12.0]}, "numerics": {"dim": 16}})
    assert main(["validate", "--config", str(cfg)]) == 2
    rep = json.loads(capsys.readouterr().out)
    assert rep["errors"][0]["code"] == "truncation"
    assert rep["errors"][0]["field_path"] == "numerics.dim"


def test_validate_singularity_warning(tmp_path, capsys):
    params = {**BASE, "g3_MHz": 6.0, "g4_MHz": 0.1, "g_MHz": 50.0, "omega_a_GHz": 4.0, "omega_b_GHz": 8.0}
    cfg = _write(tmp_path, {"params": params})
    assert main(["validate", "--config", str(cfg)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert any(w["code"] == "singularity" for w in rep["warnings"])


def test_validate_dt_stability(tmp_path, capsys):
    cfg = _write(tmp_path, {"experiment": "exp_stark_shift", "params": BASE, "numerics": {"dt": 1.0}})
    assert main(["validate", "--config", str(cfg)]) == 2
    assert json.loads(capsys.readouterr().out)["errors"][0]["code"] == "dt_stability"


def test_convergence_failure_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, {"experiment": "exp_stark_shift", "params": BASE, "sweep": {"alpha_sq": [0.0, 4.0]},
                            "numerics": {"tolerance": 1e-300}})
    out = tmp_path / "o"
    assert main(["run", "exp_stark_shift", "--config", str(cfg), "--out", str(out), "--timestamp", "T"]) == 3
    assert _error(capsys)["code"] == "convergence"
    assert (out / "exp_stark_shift_T_0_report.json").exists()


def test_experiment_mismatch(tmp_path, capsys):
    assert main(["run", "exp_stark_shift", "--config", str(CONFIGS / "cf_coherent.json"),
                 "--out", str(tmp_path / "o")]) == 2
    assert _error(capsys)["field_path"] == "experiment"


def test_seed_precedence(monkeypatch):
    monkeypatch.setenv("KERRKIT_SEED", "5")
    assert resolve_seed(None, {"seed": 1}) == 5
    assert resolve_seed(9, {"seed": 1}) == 9
    monkeypatch.delenv("KERRKIT_SEED")
    assert resolve_seed(None, {"seed": 1}) == 1


def test_spectrum_eps2_grid_monotone_gap(tmp_path):
    cfg = _write(tmp_path, {"params": BASE, "spectrum": {"eps2_MHz": [0.93, 1.86, 2.79, 3.72, 4.65]}})
    out = tmp_path / "s"
    assert main(["spectrum", "--config", str(cfg), "--out", str(out), "--timestamp", "T"]) == 0
    gaps = [float(r["E_gap_MHz"]) for r in _rows(out / "spectrum_T_0_gap.csv")]
    assert all(b > a for a, b in zip(gaps, gaps[1:]))


def test_spectrum_single_point_equals_library(tmp_path):
    cfg = _write(tmp_path, {"params": BASE, "spectrum": {"alpha_sq": [4.0]}})
    out = tmp_path / "s"
    assert main(["spectrum", "--config", str(cfg), "--out", str(out), "--timestamp", "T"]) == 0
    row = _rows(out / "spectrum_T_0_gap.csv")[0]
    assert float(row["E_gap_MHz"]) == kcq_gap(paper_params(), 4.0)
    levels = _rows(out / "spectrum_T_0_levels.csv")
    assert [int(r["level_index"]) for r in levels] == list(range(6))


def test_spectrum_empty_grid(tmp_path, capsys):
    cfg = _write(tmp_path, {"params": BASE, "spectrum": {"alpha_sq": []}})
    out = tmp_path / "s"
    assert main(["spectrum", "--config", str(cfg), "--out", str(out)]) == 2
    assert _error(capsys)["field_path"].startswith("spectrum")
    assert not out.exists()


def test_csv_is_lf_and_round_trip(tmp_path):
    out = tmp_path / "s"
    main(["spectrum", "--config", str(CONFIGS / "spectrum.json"), "--out", str(out), "--timestamp", "T"])
    raw = (out / "spectrum_T_0_gap.csv").read_bytes()
    assert b"\r\n" not in raw
    vals = [float(r["E_gap_MHz"]) for r in _rows(out / "spectrum_T_0_gap.csv")]
    assert vals[4] == kcq_gap(paper_params(), 4.0)
    assert np.all(np.diff(vals) > 0)
