from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import pytest

from nonadditive.cli import EXIT_OK, EXIT_STAGE, EXIT_USAGE, EXIT_VALIDATION, main, run
from nonadditive.config import apply_overrides, config_hash, n_schedule, parse_config, stages_of, validate
from nonadditive.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_verify_exits_zero(capsys):
    assert main(["verify"]) == EXIT_OK
    assert "7/7 checks passed" in capsys.readouterr().out


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["verify", "--bogus"])
    assert exc.value.code == EXIT_USAGE


def test_missing_seed_is_validation_error(capsys):
    code = main(["gibbs", "--set", "system.kind=doubling", "--set", "measure.kind=lebesgue",
                 "--set", "potential.kind=zero"])
    assert code == EXIT_VALIDATION
    assert "schedule.seed" in capsys.readouterr().err


def test_missing_config_file(capsys, tmp_path):
    assert main(["run", "--config", str(tmp_path / "none.conf")]) == EXIT_VALIDATION


def test_scalar_pressure_csv(tmp_path, capsys):
    assert main(["pressure", "--config", str(CONFIGS / "scalar_pressure.conf"), "--out", str(tmp_path)]) == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "pressure.csv").open()))
    ones = [r for r in rows if float(r["q"]) == 1.0]
    assert len(ones) == 20
    assert all(float(r["P_n"]) == pytest.approx(math.log(5), rel=1e-12) for r in ones)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["status"] == "complete" and "pressure.csv" in manifest["files"]


def test_lyapunov_exact_printout(capsys):
    code = main(["lyapunov", "--config", str(CONFIGS / "diag_lyapunov.conf"), "--set", "lyapunov.mode=cylinder_exact"])
    assert code == EXIT_OK
    assert "0.8959 ± 0.0000" in capsys.readouterr().out


def test_run_is_byte_identical(tmp_path):
    conf = CONFIGS / "doubling_ldp.conf"
    a, b = tmp_path / "a", tmp_path / "b"
    run(conf, out_dir=a)
    run(conf, out_dir=b)
    names = sorted(p.name for p in a.iterdir() if p.name != "manifest.json")
    assert names == sorted(p.name for p in b.iterdir() if p.name != "manifest.json")
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_monte_carlo_run_deterministic_per_seed(tmp_path):
    args = ["entropy", "--config", str(CONFIGS / "doubling_entropy.conf"), "--set", "schedule.n=[20, 30, 40]",
            "--samples", "5", "--eps", "0.0625", "--format", "csv"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    assert (tmp_path / "a" / "entropy.csv").read_bytes() == (tmp_path / "b" / "entropy.csv").read_bytes()


def test_stage_failure_exit_code(tmp_path, capsys):
    # the golden-mean beta map has no cylinder coding for exact deviation sums
    code = main(["deviate", "--set", "system.kind=beta", "--set", f"system.beta={(1 + 5 ** 0.5) / 2}",
                 "--set", "measure.kind=parry", "--set", "potential.kind=digit_frequency",
                 "--set", "deviation.c=0.7", "--set", "schedule.n=[10, 20]", "--out", str(tmp_path)])
    assert code == EXIT_STAGE
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["stages"][0]["status"] in ("failed", "incomplete")


def test_parse_config_grammar():
    cfg = parse_config('# c\na.b = 3\nname = doubling  # trailing\n[schedule]\nn = [1, 2]\nflag = true\ns = "x y"\n')
    assert cfg == {"a.b": 3, "name": "doubling", "schedule.n": [1, 2], "schedule.flag": True, "schedule.s": "x y"}
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config("a = 1\na = 2\n")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("just words\n")


def test_overrides_and_hash():
    cfg = {"schedule.seed": 1}
    out = apply_overrides(cfg, ["schedule.seed=2", "x.y=[1,2]"])
    assert out == {"schedule.seed": 2, "x.y": [1, 2]} and cfg == {"schedule.seed": 1}
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    assert config_hash(cfg) != config_hash(out)
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ["noequals"])


def test_schedules_and_validation():
    assert n_schedule({"schedule.nmin": 5, "schedule.nmax": 9, "schedule.nstep": 2}) == [5, 7, 9]
    assert n_schedule({}, default_max=3) == [1, 2, 3]
    with pytest.raises(ConfigError, match="schedule.n"):
        n_schedule({})
    with pytest.raises(ConfigError, match="pipeline.stages"):
        stages_of({"pipeline.stages": ["bake"]})
    with pytest.raises(ConfigError, match="schedule.seed"):
        validate({"system.kind": "doubling", "schedule.seed": -1}, ["deviate"])
    with pytest.raises(ConfigError, match="cocycle.matrices"):
        validate({}, ["lyapunov"])
    with pytest.raises(ConfigError, match="system.kind"):
        validate({"schedule.seed": 0}, ["gibbs"])


def test_shipped_configs_validate():
    from nonadditive.config import load_config
    for path in CONFIGS.glob("*.conf"):
        cfg = load_config(path)
        validate(cfg, stages_of(cfg))
