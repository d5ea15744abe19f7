"""Command-line front end: run batches, manage policy snapshots, report.

Subcommands:

* ``run`` executes the configured scenario batch and writes per-trial CSV
  logs, JSON summaries, plot-ready data files and (while training) policy
  snapshots to the output directory.
* ``save-policy`` validates a snapshot and rewrites it canonically.
* ``load-policy`` validates a snapshot, optionally against expected
  network sizes from a config file.
* ``report`` aggregates a directory of trial summaries into a results
  table and RMS bar data.

Every flag has a config-file equivalent; flags win over file values.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config, trial_config_from
from .dhdp import PolicyFormatError, load_policy, save_policy
from .harness import (
    BatchResult,
    batch_summary,
    run_testing_batch,
    run_training_batch,
    trial_summary,
    write_json,
    write_trial_csv,
)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_plot_data(batch: BatchResult, outdir: Path) -> None:
    plots = outdir / "plots"
    plots.mkdir(parents=True, exist_ok=True)
    record = batch.records[0]
    tolerance = batch.cfg.bounds.tolerance
    for phase in range(1, 5):
        rows = [r for r in record.rows if r.phase == phase]
        tol = tolerance[phase - 1]
        with open(plots / f"tracking_error_phase{phase}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cycle", "d_peak_rad", "d_duration_pct",
                             "tol_angle_rad", "tol_duration_pct"])
            for r in rows:
                writer.writerow([_fmt(v) for v in (
                    r.cycle, r.d_peak, r.d_duration_pct, tol.angle, tol.duration_pct,
                )])

    m = batch.metrics
    with open(plots / "rms_summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "stage", "metric", "initial", "final"])
        final = m.rms_final or {"peak_rad": None, "duration_pct": None}
        for metric, key in (("peak_angle_rad", "peak_rad"),
                            ("duration_pct", "duration_pct")):
            writer.writerow([_fmt(v) for v in (
                batch.cfg.scenario, batch.cfg.stage, metric,
                m.rms_initial[key], final[key],
            )])


def _load_policies(policy_dir: Path, cfg):
    paths = sorted(policy_dir.glob("policy_*.json"))
    if not paths:
        raise PolicyFormatError(f"no policy snapshots found in {policy_dir}")
    return [
        load_policy(p, expect_actor_hidden=cfg.dhdp.actor_hidden,
                    expect_critic_hidden=cfg.dhdp.critic_hidden)
        for p in paths
    ]


def cmd_run(args) -> int:
    overrides = {
        "scenario": args.scenario,
        "stage": args.stage,
        "plant": args.plant,
        "seed": args.seed,
        "jobs": args.jobs,
        "out_dir": None if args.out is None else str(args.out),
        "strict_monitor": True if args.strict_monitor else None,
    }
    try:
        resolved = load_config(args.config, overrides)
        cfg = trial_config_from(resolved)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    outdir = Path(resolved["out_dir"])
    trials_dir = outdir / "trials"
    trials_dir.mkdir(parents=True, exist_ok=True)
    write_json(resolved, outdir / "config.json")

    seed = int(resolved["seed"])
    jobs = int(resolved["jobs"])
    try:
        if cfg.stage == "training":
            batch = run_training_batch(cfg, seed, trials=int(resolved["trials"]),
                                       jobs=jobs,
                                       keep_policies=int(resolved["keep_policies"]))
            policy_dir = outdir / "policies"
            policy_dir.mkdir(exist_ok=True)
            for n, trial_idx in enumerate(batch.policy_trials, start=1):
                rec = batch.records[trial_idx]
                save_policy(policy_dir / f"policy_{n:02d}.json", rec.actors, rec.critics)
        else:
            if not resolved["policy_dir"]:
                print("error: testing stage needs policy_dir in the config",
                      file=sys.stderr)
                return 2
            policies = _load_policies(Path(resolved["policy_dir"]), cfg)
            batch = run_testing_batch(cfg, seed, policies,
                                      trials_per_policy=int(resolved["trials_per_policy"]),
                                      jobs=jobs)
    except (PolicyFormatError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    trials_meta = []
    for i, rec in enumerate(batch.records):
        write_trial_csv(rec, trials_dir / f"trial_{i:03d}.csv")
        p_idx = batch.policy_index[i] if batch.policy_index else None
        summary = trial_summary(rec, i, p_idx)
        write_json(summary, trials_dir / f"trial_{i:03d}.json")
        trials_meta.append(summary)
    write_json(batch_summary(batch, trials_meta), outdir / "summary.json")
    _write_plot_data(batch, outdir)

    m = batch.metrics
    steps = "n/a" if m.tuning_steps_mean is None else f"{m.tuning_steps_mean:.1f}"
    print(f"scenario {cfg.scenario} {cfg.stage}: {m.successes}/{m.trials} succeeded, "
          f"mean tuning steps {steps}, monitor violations {m.monitor_violations}")
    return 0


def cmd_save_policy(args) -> int:
    try:
        actors, critics = load_policy(args.source)
        save_policy(args.dest, actors, critics)
    except PolicyFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"saved policy snapshot to {args.dest}")
    return 0


def cmd_load_policy(args) -> int:
    expect_actor = expect_critic = None
    if args.config is not None:
        try:
            cfg = trial_config_from(load_config(args.config))
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        expect_actor = cfg.dhdp.actor_hidden
        expect_critic = cfg.dhdp.critic_hidden
    try:
        actors, critics = load_policy(args.snapshot, expect_actor_hidden=expect_actor,
                                      expect_critic_hidden=expect_critic)
    except PolicyFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    kinds = "actor+critic" if critics is not None else "actor-only"
    print(f"{args.snapshot}: valid {kinds} snapshot, "
          f"actor hidden {actors[0].hidden_size}")
    return 0


def cmd_report(args) -> int:
    directory = Path(args.directory)
    trial_files = sorted(directory.rglob("trial_*.json"))
    if not trial_files:
        print(f"error: no trial summaries under {directory}", file=sys.stderr)
        return 1

    rows: dict[tuple, list[dict]] = {}
    skipped = 0
    for path in trial_files:
        try:
            doc = json.loads(path.read_text())
            if doc.get("schema") != "kneetrack-trial":
                continue
            key = (doc["scenario"], doc["stage"])
        except (json.JSONDecodeError, KeyError) as exc:
            print(f"warning: skipping malformed {path}: {exc}", file=sys.stderr)
            skipped += 1
            continue
        rows.setdefault(key, []).append(doc)

    if not rows:
        print(f"error: no readable trial summaries under {directory}", file=sys.stderr)
        return 1

    import numpy as np

    table = []
    rms_rows = []
    for (scenario, stage), docs in sorted(rows.items()):
        steps = [d["tuning_steps"] for d in docs
                 if d["outcome"] == "success" and d["tuning_steps"] is not None]
        entry = {
            "scenario": scenario,
            "stage": stage,
            "trials": len(docs),
            "success_rate": sum(d["outcome"] == "success" for d in docs) / len(docs),
            "tuning_steps_mean": float(np.mean(steps)) if steps else None,
            "tuning_steps_std": float(np.std(steps)) if steps else None,
        }
        table.append(entry)
        initials = [d["rms_initial"] for d in docs if d.get("rms_initial")]
        finals = [d["rms_final"] for d in docs if d.get("rms_final")]
        for metric, key in (("peak_angle_rad", "peak_rad"), ("duration_pct", "duration_pct")):
            rms_rows.append([
                scenario, stage, metric,
                float(np.mean([r[key] for r in initials])) if initials else None,
                float(np.mean([r[key] for r in finals])) if finals else None,
            ])

    report = {"schema": "kneetrack-report", "skipped_files": skipped, "results": table}
    out_dir = Path(args.out) if args.out else directory
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(report, out_dir / "report.json")
    with open(out_dir / "report_rms.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "stage", "metric", "initial", "final"])
        for row in rms_rows:
            writer.writerow([_fmt(v) for v in row])

    for entry in table:
        steps = ("n/a" if entry["tuning_steps_mean"] is None
                 else f"{entry['tuning_steps_mean']:.2f}+-{entry['tuning_steps_std']:.2f}")
        print(f"scenario {entry['scenario']} {entry['stage']}: "
              f"success rate {entry['success_rate']:.2f}, steps {steps}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kneetrack",
        description="Tune robotic-knee impedance online to track intact-knee gait features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario batch")
    run_p.add_argument("--config", type=Path, help="JSON config file")
    run_p.add_argument("--scenario", type=int, choices=(1, 2, 3))
    run_p.add_argument("--stage", choices=("training", "testing"))
    run_p.add_argument("--plant", choices=("feature-map", "ode"))
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--jobs", type=int)
    run_p.add_argument("--strict-monitor", action="store_true", default=False,
                       help="halt a trial when a learning rate exceeds its ceiling")
    run_p.add_argument("--out", type=Path, help="output directory")
    run_p.set_defaults(func=cmd_run)

    save_p = sub.add_parser("save-policy", help="validate and rewrite a policy snapshot")
    save_p.add_argument("source", type=Path)
    save_p.add_argument("dest", type=Path)
    save_p.set_defaults(func=cmd_save_policy)

    load_p = sub.add_parser("load-policy", help="validate a policy snapshot")
    load_p.add_argument("snapshot", type=Path)
    load_p.add_argument("--config", type=Path,
                        help="check shapes against this config's network sizes")
    load_p.set_defaults(func=cmd_load_policy)

    report_p = sub.add_parser("report", help="aggregate trial summaries in a directory")
    report_p.add_argument("directory", type=Path)
    report_p.add_argument("--out", type=Path, help="where to write report files")
    report_p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
