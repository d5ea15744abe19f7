"""Level-ground tracking: one tuning trial, start to finish.

A prosthetic knee starts with a randomly detuned impedance set.  Four
actor-critic blocks, one per gait phase, adjust the per-phase stiffness,
damping and equilibrium angle once per gait cycle until the knee's phase
durations and peak angles track the intact knee's within the published
tolerance bounds (8 of 10 consecutive cycles per phase).
"""

import numpy as np

from kneetrack import TrialConfig, run_trial

cfg = TrialConfig()
record = run_trial(cfg, seed=7)

print(f"outcome: {record.outcome}")
print(f"tuning steps (gait cycles to convergence): {record.tuning_steps}")
print(f"safety resets along the way: {record.resets}")
print(f"learning-rate ceiling violations: {record.monitor_violations}")
print(f"weight growth vs initialization: {record.max_weight_ratio:.1f}x")
print()
print(f"peak-angle RMS error: {record.rms_initial['peak_rad']:.4f} rad "
      f"-> {record.rms_final['peak_rad']:.4f} rad")
print(f"duration RMS error:   {record.rms_initial['duration_pct']:.2f}% "
      f"-> {record.rms_final['duration_pct']:.2f}% of gait cycle")
print()

print("per-phase convergence cycle:", record.converged_at)
print()

print("peak-angle tracking error by phase (every 20th cycle, radians):")
by_cycle = {}
for row in record.rows:
    by_cycle.setdefault(row.cycle, {})[row.phase] = row
print(f"{'cycle':>6} {'STF':>8} {'STE':>8} {'SWF':>8} {'SWE':>8}  in-tolerance")
for k in range(0, record.cycles_run, 20):
    rows = by_cycle[k]
    tol = "".join("y" if rows[p].in_tolerance else "." for p in (1, 2, 3, 4))
    print(f"{k:>6} " + " ".join(f"{rows[p].d_peak:+.4f}" for p in (1, 2, 3, 4))
          + f"  {tol}")
