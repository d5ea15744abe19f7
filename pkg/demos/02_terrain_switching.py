"""Terrain variation: tracking a target profile that keeps changing.

The intact knee's gait profile is swapped among a pool of five every 20
gait cycles, emulating different terrains.  The controller must converge
inside a segment, and the trial counts as a success only after three
consecutive segments were tracked before their switch arrived.
"""

from kneetrack import TrialConfig, run_trial

cfg = TrialConfig(scenario=2)
record = run_trial(cfg, seed=4)

print(f"outcome: {record.outcome} after {record.tuning_steps} cycles")
print(f"profile switches happened at cycles: {record.switch_cycles}")
print()
print(f"{'segment':>8} {'pool profile':>13} {'converged':>10} {'at cycle':>9}")
for seg in record.segments:
    at = seg["converged_cycle"] if seg["converged"] else "-"
    print(f"{seg['segment']:>8} {seg['pool_index']:>13} "
          f"{'yes' if seg['converged'] else 'no':>10} {at:>9}")

streak = 0
for seg in record.segments:
    streak = streak + 1 if seg["converged"] else 0
print(f"\nfinal consecutive-track streak: {streak} "
      f"(needed: {cfg.consecutive_tracks})")
