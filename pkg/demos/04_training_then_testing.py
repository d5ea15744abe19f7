"""Training a batch of controllers, then reusing the learned policies.

Training runs independent trials from random feasible impedance settings
and random network weights.  Testing re-initializes fresh trials with the
trained actor weights; the tuned policies converge markedly faster, which
is the point of saving them.
"""

from kneetrack import TrialConfig, run_testing_batch, run_training_batch

cfg = TrialConfig()
train = run_training_batch(cfg, seed=7, trials=12, keep_policies=4)
m = train.metrics

print("training stage")
print(f"  success rate: {m.success_rate:.2f} ({m.successes}/{m.trials})")
print(f"  tuning steps: {m.tuning_steps_mean:.1f} +- {m.tuning_steps_std:.1f}")
print(f"  peak-angle RMS: {m.rms_initial['peak_rad']:.4f} -> "
      f"{m.rms_final['peak_rad']:.4f} rad")
print(f"  policies kept from trials: {train.policy_trials}")

policies = [(train.records[i].actors, train.records[i].critics)
            for i in train.policy_trials]
test = run_testing_batch(cfg, seed=1007, policies=policies, trials_per_policy=6)
mt = test.metrics

print("testing stage (fresh trials, trained actor weights)")
print(f"  success rate: {mt.success_rate:.2f} ({mt.successes}/{mt.trials})")
print(f"  tuning steps: {mt.tuning_steps_mean:.1f} +- {mt.tuning_steps_std:.1f}")
print(f"\nspeedup: {m.tuning_steps_mean:.1f} -> {mt.tuning_steps_mean:.1f} "
      "mean cycles to convergence")
