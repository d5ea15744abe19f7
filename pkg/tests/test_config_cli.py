"""Config loading, CLI subcommands and output files."""

import json
from pathlib import Path

import numpy as np
import pytest

from kneetrack.cli import main
from kneetrack.config import ConfigError, default_config, load_config, trial_config_from
from kneetrack.dhdp import init_actor, init_critic, save_policy


def small_run_config(**overrides):
    # seed/max_cycles chosen so this tiny batch contains successful trials
    cfg = {
        "trials": 3,
        "max_cycles": 120,
        "keep_policies": 2,
        "seed": 11,
    }
    cfg.update(overrides)
    return cfg


# ---------------------------------------------------------------------------
# config


def test_defaults_build_a_valid_trial_config():
    resolved = load_config(None)
    cfg = trial_config_from(resolved)
    assert cfg.scenario == 1
    assert cfg.max_cycles == 500
    assert cfg.window == 10 and cfg.quota == 8
    assert cfg.dhdp.critic_hidden == 8 and cfg.dhdp.actor_hidden == 6


def test_unknown_key_rejected_with_path(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"dhdp": {"critic_hidden": 8, "bogus": 1}}))
    with pytest.raises(ConfigError, match="dhdp.bogus"):
        load_config(path)


def test_unknown_top_level_key_rejected(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"scenarios": 1}))
    with pytest.raises(ConfigError, match="unknown config key: scenarios"):
        load_config(path)


def test_missing_config_file_diagnostic(tmp_path):
    with pytest.raises(ConfigError, match="config not found"):
        load_config(tmp_path / "missing.json")


def test_type_errors_name_the_key(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"seed": "seven"}))
    with pytest.raises(ConfigError, match="seed"):
        load_config(path)


def test_overrides_beat_file_values(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"scenario": 2, "seed": 5}))
    resolved = load_config(path, {"scenario": 3, "seed": None})
    assert resolved["scenario"] == 3    # flag wins
    assert resolved["seed"] == 5        # file value kept when flag absent


def test_default_config_round_trips_through_json():
    blob = json.dumps(default_config())
    assert json.loads(blob) == default_config()


def test_bad_section_value_reports_section(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"dhdp": {"discount": 1.5}}))
    with pytest.raises(ConfigError, match="dhdp"):
        trial_config_from(load_config(path))


# ---------------------------------------------------------------------------
# run subcommand


def run_cli(tmp_path, cfg_dict, *flags):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg_dict))
    out = tmp_path / "out"
    return main(["run", "--config", str(cfg_path), "--out", str(out), *flags]), out


def test_run_training_writes_all_outputs(tmp_path, capsys):
    code, out = run_cli(tmp_path, small_run_config())
    assert code == 0
    assert (out / "config.json").exists()
    assert (out / "summary.json").exists()
    assert sorted(p.name for p in (out / "trials").glob("trial_*.csv")) == [
        "trial_000.csv", "trial_001.csv", "trial_002.csv"]
    assert (out / "plots" / "rms_summary.csv").exists()
    assert (out / "plots" / "tracking_error_phase1.csv").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["schema"] == "kneetrack-batch"
    assert summary["trials"] == 3
    assert "success_rate" in summary and "tuning_steps_mean" in summary
    assert (out / "policies" / "policy_01.json").exists()
    assert "succeeded" in capsys.readouterr().out


def test_run_missing_config_nonzero_exit(tmp_path, capsys):
    code = main(["run", "--config", str(tmp_path / "missing.json")])
    assert code != 0
    assert "config not found" in capsys.readouterr().err


def test_run_testing_needs_policy_dir(tmp_path, capsys):
    code, _ = run_cli(tmp_path, small_run_config(stage="testing"))
    assert code == 2
    assert "policy_dir" in capsys.readouterr().err


def test_run_testing_loads_policies(tmp_path):
    code, out = run_cli(tmp_path, small_run_config())
    assert code == 0
    test_cfg = small_run_config(stage="testing", trials_per_policy=2,
                                policy_dir=str(out / "policies"))
    cfg_path = tmp_path / "cfg2.json"
    cfg_path.write_text(json.dumps(test_cfg))
    out2 = tmp_path / "out2"
    code = main(["run", "--config", str(cfg_path), "--out", str(out2)])
    assert code == 0
    summary = json.loads((out2 / "summary.json").read_text())
    assert summary["stage"] == "testing"
    assert summary["trials"] == 2 * len(list((out / "policies").glob("policy_*.json")))


def test_run_strict_monitor_halts_on_forced_violation(tmp_path):
    cfg = small_run_config(trials=1)
    cfg["dhdp"] = {"critic_lr": 1e9, "actor_lr": 1e9}
    code, out = run_cli(tmp_path, cfg, "--strict-monitor")
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    trial = summary["trial_summaries"][0]
    assert trial["outcome"] == "failure"
    assert trial["failure_reason"] == "monitor-violation"
    assert summary["monitor_violations"] >= 1


def test_run_deterministic_outputs(tmp_path):
    cfg = small_run_config(trials=2)
    _, out_a = run_cli(tmp_path, cfg)
    cfg_path = tmp_path / "cfg_b.json"
    cfg_path.write_text(json.dumps(cfg))
    out_b = tmp_path / "out_b"
    assert main(["run", "--config", str(cfg_path), "--out", str(out_b)]) == 0
    for rel in ["summary.json", "trials/trial_000.csv", "trials/trial_001.csv",
                "plots/rms_summary.csv"]:
        a = (out_a / rel).read_bytes()
        b = (out_b / rel).read_bytes()
        if rel == "summary.json":
            # output paths differ inside the config echo only, not here
            assert a == b
        else:
            assert a == b


# ---------------------------------------------------------------------------
# policy subcommands


def test_save_policy_round_trip(tmp_path, capsys):
    rng = np.random.default_rng(3)
    src = tmp_path / "p.json"
    save_policy(src, [init_actor(rng) for _ in range(4)],
                [init_critic(rng) for _ in range(4)])
    dest = tmp_path / "q.json"
    assert main(["save-policy", str(src), str(dest)]) == 0
    assert src.read_bytes() == dest.read_bytes()


def test_load_policy_validates(tmp_path, capsys):
    rng = np.random.default_rng(4)
    snap = tmp_path / "p.json"
    save_policy(snap, [init_actor(rng) for _ in range(4)])
    assert main(["load-policy", str(snap)]) == 0
    assert "actor-only" in capsys.readouterr().out


def test_load_policy_shape_mismatch(tmp_path, capsys):
    rng = np.random.default_rng(5)
    snap = tmp_path / "p.json"
    save_policy(snap, [init_actor(rng, hidden=3) for _ in range(4)])
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({}))
    code = main(["load-policy", str(snap), "--config", str(cfg_path)])
    assert code == 1
    assert "expected 6, found 3" in capsys.readouterr().err


def test_load_policy_garbage_file(tmp_path, capsys):
    snap = tmp_path / "p.json"
    snap.write_text("{not json")
    assert main(["load-policy", str(snap)]) == 1


# ---------------------------------------------------------------------------
# report subcommand


def test_report_aggregates_directory(tmp_path, capsys):
    code, out = run_cli(tmp_path, small_run_config())
    assert code == 0
    assert main(["report", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["schema"] == "kneetrack-report"
    row = report["results"][0]
    assert row["scenario"] == 1 and row["stage"] == "training"
    assert 0.0 <= row["success_rate"] <= 1.0
    assert (out / "report_rms.csv").read_text().startswith("scenario,stage,metric")


def test_report_empty_directory_fails(tmp_path, capsys):
    assert main(["report", str(tmp_path)]) == 1
    assert "no trial summaries" in capsys.readouterr().err


def test_report_skips_malformed_json(tmp_path, capsys):
    code, out = run_cli(tmp_path, small_run_config(trials=2))
    assert code == 0
    (out / "trials" / "trial_999.json").write_text("{broken")
    assert main(["report", str(out)]) == 0
    captured = capsys.readouterr()
    assert "skipping malformed" in captured.err
    report = json.loads((out / "report.json").read_text())
    assert report["skipped_files"] == 1
    assert report["results"][0]["trials"] == 2
