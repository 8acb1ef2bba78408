import csv
import json

import pytest

from qmeter.cli import ConfigError, main, parse_config

BASE = {"omega": 1.0, "gamma": 0.25, "alpha": [0.1, 0.0], "t_end": 2.0, "n_steps": 200, "seed": 5, "n_paths": 200}


def _config(tmp_path, **kw):
    raw = {**BASE, **kw}
    for k in [k for k, v in raw.items() if v is None]:
        del raw[k]
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(raw))
    return str(path)


def _rows(path):
    with open(path) as fp:
        return list(csv.DictReader(fp))


def test_parse_config():
    cfg = parse_config(BASE)
    assert cfg.params.alpha == 0.1
    assert cfg.grid.dt == 0.01
    assert parse_config(cfg.as_dict()) == cfg
    assert parse_config({**BASE, "alpha": 0.3}).params.alpha == 0.3


@pytest.mark.parametrize(
    "change, field",
    [
        ({"alpha": None}, "alpha"),
        ({"n_steps": 1.5}, "n_steps"),
        ({"omega": -1}, "omega"),
        ({"bogus": 1}, "bogus"),
        ({"alpha": "x"}, "alpha"),
        ({"seed": True}, "seed"),
    ],
)
def test_config_errors(tmp_path, capsys, change, field):
    raw = {**BASE, **change}
    raw = {k: v for k, v in raw.items() if v is not None}
    with pytest.raises(ConfigError) as exc:
        parse_config(raw)
    assert exc.value.field == field
    assert main(["expect", "--config", _config(tmp_path, **change), "--out", str(tmp_path / "o")]) == 2
    assert field in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["expect", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 2


def test_expect_zero_drive(tmp_path):
    out = tmp_path / "o"
    assert main(["expect", "--config", _config(tmp_path, alpha=[0, 0]), "--out", str(out), "--check"]) == 0
    rows = _rows(out / "expect.csv")
    assert rows
    for r in rows:
        for col in ("heating_N", "heating_N_mc", "heating_pointer", "heating_pointer_mc"):
            assert float(r[col]) == 0.0
    assert json.loads((out / "config.json").read_text())["seed"] == 5


def test_expect_mc_agrees(tmp_path):
    out = tmp_path / "o"
    assert main(["expect", "--config", _config(tmp_path), "--out", str(out), "--check"]) == 0
    last = _rows(out / "expect.csv")[-1]
    assert float(last["t"]) == 2.0
    assert abs(float(last["mean_ZstarZ_mc"]) - float(last["mean_ZstarZ"])) < 4 * float(last["mean_ZstarZ_se"])


def test_paths_and_overrides(tmp_path):
    out = tmp_path / "o"
    assert main(["paths", "--config", _config(tmp_path), "--out", str(out), "--paths", "3", "--seed", "9", "--check"]) == 0
    assert sorted(p.name for p in out.glob("path_*.csv")) == ["path_00000.csv", "path_00001.csv", "path_00002.csv"]
    assert len(_rows(out / "path_00000.csv")) == 201
    assert json.loads((out / "config.json").read_text())["seed"] == 9


def test_covar_measure_window_fock_limit(tmp_path):
    cfg = _config(tmp_path, t_end=20.0, n_steps=2000)
    out = tmp_path / "o"
    assert main(["covar", "--config", cfg, "--out", str(out), "--check"]) == 0
    assert main(["measure", "--config", cfg, "--out", str(out), "--n", "1", "--t-grid", "5,10", "--check"]) == 0
    rows = _rows(out / "measure.csv")
    assert [float(r["t"]) for r in rows] == [5.0, 10.0]
    assert set(rows[0]) >= {"mean_N", "se_mean_N", "var_N", "mean_pointer", "se_mean_pointer", "var_pointer", "resolvable"}
    assert main(["measure", "--config", cfg, "--out", str(out), "--t-grid", "5,-1"]) == 2
    # the pointer spread at t = 20 far exceeds 1/4, so resolution fails under --check
    assert main(["window", "--config", cfg, "--out", str(out), "--levels", "3", "--check"]) == 1
    assert json.loads((out / "failures.json").read_text())
    assert main(["fock-check", "--config", cfg, "--out", str(out), "--n", "1", "--check"]) == 0
    rep = json.loads((out / "fock_check.json").read_text())
    assert set(rep) >= {"n", "T", "mean", "variance", "predicted_mean", "predicted_variance", "block_unitarity_error"}
    lim_cfg = _config(tmp_path, t_end=1.0, gamma=0.5, n_paths=100)
    assert main(["limit", "--config", lim_cfg, "--out", str(out), "--epsilon-list", "0.01", "--lambda-grid", "0,1"]) == 0
    rows = _rows(out / "limit.csv")
    assert list(rows[0]) == ["epsilon", "lambda", "observable", "empirical", "target", "se"]
    assert float(rows[0]["empirical"]) == 1.0


def test_byte_identical_across_threads(tmp_path, monkeypatch):
    cfg = _config(tmp_path, n_paths=100)
    outs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("QMETER_THREADS", threads)
        out = tmp_path / f"o{threads}"
        assert main(["expect", "--config", cfg, "--out", str(out)]) == 0
        assert main(["measure", "--config", cfg, "--out", str(out), "--t-grid", "1,2"]) == 0
        outs.append(out)
    for name in ("expect.csv", "measure.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_acceptance_bad_only(tmp_path):
    assert main(["acceptance", "--out", str(tmp_path), "--only", "9"]) == 2
    assert main(["acceptance", "--out", str(tmp_path), "--only", "x"]) == 2


def test_acceptance_single_criterion(tmp_path):
    assert main(["acceptance", "--quick", "--only", "6", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary[0]["criterion"] == 6 and summary[0]["passed"]
    assert (tmp_path / "criterion_6.csv").exists()
