import csv
import os

import pytest
import yaml

from hetsched import cli
from hetsched.checks import CheckResult
from hetsched.config import ExperimentConfig
from hetsched.errors import ConfigurationError
from hetsched.runner import run_experiment, run_sweep


def tiny_config(**overrides):
    data = {
        "name": "tiny",
        "seeds": [1, 2, 3],
        "lambda_rate": 2.0,
        "speeds": {"source": "explicit", "values": [1.0, 2.0]},
        "policies": [{"kind": "PSS"}, {"kind": "PPoT_SQ"}],
        "budget": {"max_events": 2000},
        "metrics": {"sample_interval": 5.0},
        "output": "out/tiny",
    }
    data.update(overrides)
    return data


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_unknown_key_rejected_by_name():
    with pytest.raises(ConfigurationError, match="lambda_rte"):
        ExperimentConfig.from_dict(tiny_config(lambda_rte=3.0))
    with pytest.raises(ConfigurationError, match="speeds.sourc"):
        ExperimentConfig.from_dict(tiny_config(
            speeds={"sourc": "explicit", "values": [1.0]}))


def test_policy_parameter_validation_through_config():
    bad = tiny_config(policies=[{"kind": "MultiArmed"}])
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict(bad)
    bad = tiny_config(policies=[{"kind": "Nope"}])
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict(bad)


def test_alpha_xor_lambda_rate():
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict(tiny_config(alpha=0.5))
    data = tiny_config()
    del data["lambda_rate"]
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict(data)


def test_budget_required():
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict(tiny_config(budget={}))


def test_duplicate_seeds_rejected():
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict(tiny_config(seeds=[1, 1]))


def test_run_produces_one_summary_row_per_policy_seed(tmp_path):
    config = ExperimentConfig.from_dict(tiny_config(output=str(tmp_path / "o")))
    result = run_experiment(config)
    rows = read_csv(os.path.join(result["out_dir"], "summary.csv"))
    assert len(rows) == 6  # 2 policies x 3 seeds
    assert {r["policy"] for r in rows} == {"PSS", "PPoT_SQ"}
    assert {r["seed"] for r in rows} == {"1", "2", "3"}
    assert os.path.exists(os.path.join(result["out_dir"], "config.yaml"))


def test_repeat_runs_byte_identical(tmp_path):
    config = ExperimentConfig.from_dict(tiny_config())
    run_experiment(config, str(tmp_path / "a"))
    run_experiment(config, str(tmp_path / "b"))
    for name in ("summary.csv", "timeseries.csv", "histogram.csv"):
        with open(tmp_path / "a" / name, "rb") as fa, \
                open(tmp_path / "b" / name, "rb") as fb:
            assert fa.read() == fb.read(), name


def test_zero_event_budget_writes_headers_only(tmp_path):
    config = ExperimentConfig.from_dict(
        tiny_config(budget={"max_events": 0}, seeds=[1],
                    policies=[{"kind": "PSS"}]))
    result = run_experiment(config, str(tmp_path / "z"))
    rows = read_csv(os.path.join(result["out_dir"], "summary.csv"))
    assert len(rows) == 1  # the run happened, with empty statistics
    assert rows[0]["mean_response"] == ""
    ts = read_csv(os.path.join(result["out_dir"], "timeseries.csv"))
    assert ts == []


def test_no_temp_residue_after_run(tmp_path):
    config = ExperimentConfig.from_dict(tiny_config())
    result = run_experiment(config, str(tmp_path / "r"))
    leftovers = [f for f in os.listdir(result["out_dir"]) if f.startswith(".tmp-")]
    assert leftovers == []


def test_sweep_expands_values(tmp_path):
    data = tiny_config(seeds=[1], policies=[{"kind": "PSS"}])
    del data["lambda_rate"]
    data["alpha"] = 0.5
    config = ExperimentConfig.from_dict(data)
    result = run_sweep(config, "alpha", [0.3, 0.6, 0.9], str(tmp_path / "s"))
    assert len(result["summary"]) == 3
    rows = read_csv(os.path.join(result["out_dir"], "sweep_summary.csv"))
    assert [r["alpha"] for r in rows] == ["0.3", "0.6", "0.9"]


def test_sweep_rejects_unknown_parameter_and_empty_values(tmp_path):
    config = ExperimentConfig.from_dict(tiny_config())
    with pytest.raises(ConfigurationError):
        config.sweep_variant("bogus", 1.0)
    with pytest.raises(ValueError):
        run_sweep(config, "alpha", [], str(tmp_path / "e"))


def test_parallel_runs_match_serial(tmp_path):
    config = ExperimentConfig.from_dict(tiny_config())
    run_experiment(config, str(tmp_path / "serial"))
    parallel = ExperimentConfig.from_dict(tiny_config(parallel=2))
    run_experiment(parallel, str(tmp_path / "parallel"))
    a = read_csv(tmp_path / "serial" / "summary.csv")
    b = read_csv(tmp_path / "parallel" / "summary.csv")
    assert a == b


def test_cli_run_and_exit_codes(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.yaml"
    cfg_path.write_text(yaml.safe_dump(tiny_config(
        seeds=[1], policies=[{"kind": "PSS"}], output=str(tmp_path / "out"))))
    assert cli.main(["run", "--config", str(cfg_path)]) == cli.EXIT_OK

    bad_path = tmp_path / "bad.yaml"
    bad_path.write_text(yaml.safe_dump(tiny_config(bogus_key=1)))
    assert cli.main(["run", "--config", str(bad_path)]) == cli.EXIT_CONFIG

    assert cli.main(["run"]) == cli.EXIT_CONFIG  # neither config nor preset


def test_cli_seed_and_out_overrides(tmp_path):
    cfg_path = tmp_path / "cfg.yaml"
    cfg_path.write_text(yaml.safe_dump(tiny_config(policies=[{"kind": "PSS"}])))
    out = tmp_path / "ovr"
    assert cli.main([
        "run", "--config", str(cfg_path), "--seed", "7", "--out", str(out),
    ]) == cli.EXIT_OK
    rows = read_csv(out / "summary.csv")
    assert [r["seed"] for r in rows] == ["7"]


def test_cli_presets_list(capsys):
    assert cli.main(["presets", "list"]) == cli.EXIT_OK
    listed = capsys.readouterr().out.split()
    assert "blowup" in listed and "shock-recovery" in listed


def test_cli_validate_pass_and_fail_paths(monkeypatch, capsys):
    from hetsched import checks as checks_module

    def fake_pass():
        return CheckResult("fake-pass", True, {})

    def fake_fail():
        return CheckResult("fake-fail", False, {"why": "rigged"})

    monkeypatch.setitem(checks_module.CHECKS, "fake-pass", fake_pass)
    monkeypatch.setitem(checks_module.CHECKS, "fake-fail", fake_fail)
    assert cli.main(["validate", "--checks", "fake-pass"]) == cli.EXIT_OK
    assert cli.main(["validate", "--checks", "fake-pass,fake-fail"]) == cli.EXIT_VALIDATION
    assert cli.main(["validate", "--checks", "no-such-check"]) == cli.EXIT_CONFIG


def test_cli_sweep_argument_errors(tmp_path):
    cfg_path = tmp_path / "cfg.yaml"
    data = tiny_config(seeds=[1], policies=[{"kind": "PSS"}])
    del data["lambda_rate"]
    data["alpha"] = 0.5
    cfg_path.write_text(yaml.safe_dump(data))
    assert cli.main([
        "sweep", "--config", str(cfg_path), "--param", "bogus", "--values", "1,2",
    ]) == cli.EXIT_CONFIG
    assert cli.main([
        "sweep", "--config", str(cfg_path), "--param", "alpha", "--values", "",
    ]) == cli.EXIT_CONFIG


def test_preset_configs_all_materialize():
    from hetsched.presets import PRESETS, preset
    for name in PRESETS:
        config = ExperimentConfig.from_dict(preset(name))
        assert config.run_matrix()


def test_geometric_check_rejects_unstable_load():
    from hetsched.checks import check_pss_geometric
    with pytest.raises(ConfigurationError):
        check_pss_geometric(alpha=1.0)
    with pytest.raises(ConfigurationError):
        check_pss_geometric(alpha=1.2)


def test_cli_missing_config_file_is_config_error():
    assert cli.main(["run", "--config", "/no/such/file.yaml"]) == cli.EXIT_CONFIG
