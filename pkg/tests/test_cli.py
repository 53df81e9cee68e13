import hashlib
import json

import numpy as np
import pytest

from stochhomog.cli import (
    OUT_ENV,
    ConfigError,
    cmd_homogenize,
    cmd_sample_field,
    cmd_study,
    load_config,
    main,
    resolve_config,
)
from stochhomog.fem import EffectiveSample
from stochhomog.mc import convergence

SMALL = {"kappa_sim": 4, "mesh_n": 3, "nu_s": 4, "seed": 3}


def _read(path):
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def _header(path):
    with open(path) as fh:
        return fh.readline().strip().split(",")


def _write_config(tmp_path, cfg):
    p = tmp_path / "config.json"
    p.write_text(json.dumps(cfg))
    return p


def test_validate_config_reports_derived(tmp_path, capsys):
    assert main(["validate-config", "--config", str(_write_config(tmp_path, SMALL))]) == 0
    out = json.loads(capsys.readouterr().out)
    d = out["derived"]
    assert d["sigma_c"] == pytest.approx(0.4 / 7**0.5)
    assert len(d["alpha"]) == 6
    assert d["c0"] == pytest.approx(7.142857142857e8)
    assert d["c_eps"] == pytest.approx(d["c0"] * 1e-3 / 1.001)
    assert d["delta_s"] == 0.0
    assert set(d["shear_moduli"]) == {"G23", "G31", "G12"}
    assert out["config"]["mesh_n"] == 3


@pytest.mark.parametrize("bad", [{"kappa": 3}, {"matrix": {"delta_c": 0.9}}, {"spectrum": {"deltas": [0.7, 0, 0]}},
                                 {"kappa_sim": 0}, {"sample_field": {"points": [2, 2]}}])
def test_invalid_configs(tmp_path, capsys, bad):
    assert main(["validate-config", "--config", str(_write_config(tmp_path, bad))]) == 2
    assert "invalid configuration" in capsys.readouterr().err
    with pytest.raises(ConfigError):
        resolve_config(bad)


def test_missing_config_file(tmp_path):
    assert main(["validate-config", "--config", str(tmp_path / "nope.json")]) == 2


def test_sample_field(tmp_path):
    cfg = resolve_config(SMALL)
    a = cmd_sample_field(cfg, tmp_path / "a")
    b = cmd_sample_field(cfg, tmp_path / "b")
    assert a.read_bytes() == b.read_bytes()
    data = _read(a)
    assert data.shape == (8, 25)
    assert _header(a)[:4] == ["x1", "x2", "x3", "C11"] and _header(a)[-1] == "lambda_min"
    np.testing.assert_array_equal(np.unique(data[:, 0]), [0.25, 0.75])
    d = json.loads((tmp_path / "a" / "manifest.json").read_text())["derived"]
    assert np.all(data[:, -1] >= d["c_eps"])


def test_sample_field_small_dispersion(tmp_path):
    cfg = resolve_config({**SMALL, "matrix": {"delta_c": 0.01}, "sample_field": {"points": [3, 3, 3]}})
    data = _read(cmd_sample_field(cfg, tmp_path))
    C_bar = np.asarray(json.loads((tmp_path / "manifest.json").read_text())["derived"]["C_bar"])
    iu = np.triu_indices(6)
    for row in data:
        C = np.zeros((6, 6))
        C[iu] = row[3:24]
        C = C + np.triu(C, 1).T
        assert np.linalg.norm(C - C_bar) <= 0.05 * np.linalg.norm(C_bar)


def test_homogenize_outputs_round_trip(tmp_path):
    cfg = resolve_config({**SMALL, "kappa_sim": 10, "mesh_n": 5})
    res = cmd_homogenize(cfg, tmp_path)
    rec = _read(tmp_path / "records.csv")
    assert rec.shape == (10, 28)
    assert _header(tmp_path / "records.csv")[-1] == "lambda6"
    for row, s in zip(rec, res.records):
        assert row[0] == s.kappa
        np.testing.assert_array_equal(row[22:], s.lam)
        np.testing.assert_array_equal(row[1:22], s.C_eff[np.triu_indices(6)])
    conv = _read(tmp_path / "conv.csv")
    np.testing.assert_array_equal(conv[:, 1], res.conv)
    C_bar = np.asarray(json.loads((tmp_path / "manifest.json").read_text())["derived"]["C_bar"])
    again = convergence([EffectiveSample(C_eff=C_bar, lam=r[22:]) for r in rec], C_bar)
    assert abs(again[-1] - conv[-1, 1]) <= 1e-12 * conv[-1, 1]
    pdf = _read(tmp_path / "pdf.csv")
    assert pdf.shape == (512, 2)
    peta = _read(tmp_path / "peta.csv")
    np.testing.assert_array_equal(peta[:, 1], res.p_eta)


def test_homogeneous_limit(tmp_path):
    cfg = resolve_config({**SMALL, "matrix": {"delta_c": 1e-6}})
    cmd_homogenize(cfg, tmp_path)
    lam = _read(tmp_path / "records.csv")[:, 22:]
    C_bar = np.asarray(json.loads((tmp_path / "manifest.json").read_text())["derived"]["C_bar"])
    ref = np.linalg.eigvalsh(C_bar)[::-1]
    assert np.max(np.abs(lam - ref) / ref) <= 1e-6


def test_manifest_reproduces_outputs(tmp_path):
    assert main(["homogenize", "--config", str(_write_config(tmp_path, SMALL)), "--out", str(tmp_path / "a"),
                 "--seed", "11", "--kappa", "3"]) == 0
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["seed"] == 11 and man["config"]["kappa_sim"] == 3 and man["csv_schema"] == 1
    assert set(man["outputs"]) == {"records.csv", "conv.csv", "pdf.csv", "peta.csv"}
    for name, digest in man["outputs"].items():
        assert hashlib.sha256((tmp_path / "a" / name).read_bytes()).hexdigest() == digest
    assert main(["homogenize", "--config", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b")]) == 0
    man2 = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert man2["outputs"] == man["outputs"]
    assert load_config(tmp_path / "a" / "manifest.json") == man["config"]


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    assert main(["sample-field", "--config", str(_write_config(tmp_path, SMALL)), "--kappa", "2"]) == 0
    man = json.loads((tmp_path / "env" / "manifest.json").read_text())
    assert man["kappa"] == 2
    assert main(["sample-field", "--config", str(_write_config(tmp_path, SMALL)), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "field.csv").exists()


def test_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        cmd_sample_field(resolve_config(SMALL), blocker / "sub")
    assert main(["sample-field", "--config", str(_write_config(tmp_path, SMALL)), "--out", str(blocker / "sub")]) == 1
    assert "error" in capsys.readouterr().err


def test_study_single_cell_matches_homogenize(tmp_path):
    cfg = resolve_config({**SMALL, "study": {"Lc_mean": [0.3], "delta_unc": [0.2]},
                          "spectrum": {"Lc_mean": 0.3, "delta_Lc": 0.2, "deltas": [0.2, 0.2, 0.2]}})
    rows = cmd_study(cfg, tmp_path / "study")
    cmd_homogenize(cfg, tmp_path / "single")
    for name in ("records.csv", "conv.csv", "pdf.csv", "peta.csv"):
        assert (tmp_path / "study" / "cells" / "Lc0.3_delta0.2" / name).read_bytes() == (
            tmp_path / "single" / name).read_bytes()
    assert _header(tmp_path / "study" / "study.csv") == ["Lc_mean", "delta_unc", "mean_lambda1", "P_0.02", "P_0.04",
                                                         "P_0.08"]
    study = _read(tmp_path / "study" / "study.csv")
    np.testing.assert_array_equal(study, rows)
    assert study.shape == (1, 6)
    assert 0 <= study[0, 3] <= study[0, 4] <= study[0, 5] <= 1


def test_study_grid_shape(tmp_path):
    cfg = resolve_config({**SMALL, "kappa_sim": 2, "mesh_n": 2, "study": {"Lc_mean": [0.2, 0.4], "delta_unc": [0, 0.3]}})
    rows = cmd_study(cfg, tmp_path)
    np.testing.assert_array_equal(rows[:, :2], [[0.2, 0], [0.2, 0.3], [0.4, 0], [0.4, 0.3]])
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert len(man["cells"]) == 4 and "study.csv" in man["outputs"]


def test_threads_do_not_change_outputs(tmp_path):
    cfg = str(_write_config(tmp_path, SMALL))
    assert main(["homogenize", "--config", cfg, "--out", str(tmp_path / "t1"), "--threads", "1"]) == 0
    assert main(["homogenize", "--config", cfg, "--out", str(tmp_path / "t2"), "--threads", "2"]) == 0
    for name in ("records.csv", "conv.csv", "pdf.csv", "peta.csv"):
        assert (tmp_path / "t1" / name).read_bytes() == (tmp_path / "t2" / name).read_bytes()


@pytest.mark.parametrize("argv", [["homogenize", "--threads", "0"], ["homogenize", "--seed", "-1"]])
def test_bad_flags(argv):
    assert main(argv) == 2
