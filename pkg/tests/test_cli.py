import json
import os
import subprocess
import sys

import pytest

from opminimax import cli
from opminimax.config import ConfigError, load_config, parse_override, shipped_configs

FAST_CURVE = ["experiment.m_grid=[128, 512]", "experiment.trials=3", "experiment.n_mc=2000"]


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_shipped_configs_all_validate():
    names = shipped_configs()
    assert "verify.toml" in names and "finite_dim_d1.toml" in names
    for path in names.values():
        load_config(path)


def test_unknown_key_rejected_with_path(tmp_path):
    p = write(tmp_path, 'kind = "verify"\n[verify]\nvg_n = [8]\nbogus = 1\n')
    with pytest.raises(ConfigError, match=r"verify\.bogus"):
        load_config(p)


def test_bad_value_reports_field_path(tmp_path):
    p = write(tmp_path, 'kind = "verify"\n[noise]\nsigma = -1\n')
    with pytest.raises(ConfigError, match=r"noise\.sigma"):
        load_config(p)


def test_missing_section_rejected():
    with pytest.raises(ConfigError, match="measure"):
        load_config(None, kind="risk-curve")


def test_kind_mismatch(tmp_path):
    p = write(tmp_path, 'kind = "verify"\n')
    with pytest.raises(ConfigError, match="does not match"):
        load_config(p, kind="rates")


def test_override_parsing():
    assert parse_override("experiment.trials=5") == ("experiment.trials", 5)
    assert parse_override("noise.sigma = 0.2") == ("noise.sigma", 0.2)
    assert parse_override("experiment.m_grid=[1, 2]") == ("experiment.m_grid", [1, 2])
    assert parse_override("name=plain") == ("name", "plain")
    with pytest.raises(ConfigError):
        parse_override("novalue")
    cfg = load_config(shipped_configs()["finite_dim_d1.toml"], FAST_CURVE)
    assert cfg.experiment.trials == 3 and cfg.experiment.m_grid == [128, 512]


def test_digest_tracks_content():
    path = shipped_configs()["finite_dim_d1.toml"]
    assert load_config(path).digest() == load_config(path).digest()
    assert load_config(path).digest() != load_config(path, ["seed=1"]).digest()


def test_cli_config_error_exit_code(tmp_path, capsys):
    p = write(tmp_path, 'kind = "verify"\nwhat = 1\n')
    assert cli.main(["run", "verify", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert "what" in capsys.readouterr().err


def test_cli_verify_passes(tmp_path):
    code = cli.main(["run", "verify", "--config", "verify.toml", "--out", str(tmp_path),
                     "--override", "verify.separation_n_mc=20000",
                     "--override", "verify.kl_instances=10"])
    assert code == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["exit_status"] == 0
    assert (tmp_path / "verify.csv").read_text().count("true") >= 10


def test_cli_lower_bound_artifacts(tmp_path):
    assert cli.main(["run", "lower-bound", "--config", "lower_bound.toml", "--out", str(tmp_path),
                     "--override", "lower_bound.n_mc=5000"]) == 0
    doc = json.loads((tmp_path / "lower_bound.json").read_text())
    first = doc["rows"][0]
    assert first["condition_holds"] is True and first["lower_bound_value"] > 0
    assert doc["metadata"]["instance"]["code_words"][0] == "0" * first["n"]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    for key in ("config_sha256", "code_sha256", "seed", "versions", "wall_time_s"):
        assert key in manifest


def test_cli_rates_artifacts(tmp_path):
    assert cli.main(["run", "rates", "--config", "rates_exponential.toml",
                     "--out", str(tmp_path)]) == 0
    header = (tmp_path / "rates.csv").read_text().splitlines()[0]
    assert header == "k,m,sigma,regime,quantity,value,d,constants"


def _curve(tmp_path, name, workers, seed=None):
    out = tmp_path / name
    args = ["run", "risk-curve", "--config", "finite_dim_d1.toml", "--out", str(out),
            "--workers", str(workers)]
    for o in FAST_CURVE:
        args += ["--override", o]
    if seed is not None:
        args += ["--seed", str(seed)]
    assert cli.main(args) == 0
    return (out / "risk_curve.csv").read_bytes()


def test_csv_byte_identical_across_runs_and_workers(tmp_path):
    a = _curve(tmp_path, "a", 1)
    assert _curve(tmp_path, "b", 1) == a
    assert _curve(tmp_path, "c", 2) == a
    assert _curve(tmp_path, "d", 1, seed=7) != a


def test_out_dir_from_environment(tmp_path):
    env_out = tmp_path / "envout"
    proc = subprocess.run([sys.executable, "-m", "opminimax.cli", "run", "rates", "--config",
                           "rates_exponential.toml"], capture_output=True, text=True,
                          env={**os.environ, "OPMINIMAX_OUT": str(env_out)},
                          cwd=tmp_path)
    assert proc.returncode == 0, proc.stderr
    assert (env_out / "rates.csv").exists()


def test_configs_listing(capsys):
    assert cli.main(["configs"]) == 0
    assert "lower_bound.toml" in capsys.readouterr().out
