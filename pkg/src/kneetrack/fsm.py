"""Finite-state-machine impedance controller.

A gait cycle is split into four phases, each with its own impedance triple.
The controller produces joint torque from the active triple, advances the
phase on kinematic peaks and gait events, and applies per-cycle parameter
adjustments with clamping to configured physical ranges.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import (
    NUM_PHASES,
    ControlDelta,
    ImpedanceTriple,
    Phase,
)

# A kinematic peak is declared when the angular velocity falls to (or through)
# this threshold after the phase has been active for at least MIN_DWELL
# seconds.  The dwell keeps a stale negative velocity at phase entry from
# firing the peak detector instantly.
PEAK_VELOCITY_EPS = 1e-3
MIN_DWELL = 0.05


@dataclass(frozen=True)
class ImpedanceSet:
    """One impedance triple per gait phase."""

    phases: tuple[ImpedanceTriple, ImpedanceTriple, ImpedanceTriple, ImpedanceTriple]

    def __post_init__(self):
        if len(self.phases) != NUM_PHASES:
            raise ValueError("impedance set needs exactly four triples")

    def for_phase(self, phase: Phase) -> ImpedanceTriple:
        return self.phases[phase - 1]

    def replace(self, phase: Phase, triple: ImpedanceTriple) -> "ImpedanceSet":
        phases = list(self.phases)
        phases[phase - 1] = triple
        return ImpedanceSet(tuple(phases))


@dataclass(frozen=True)
class PhaseRanges:
    """Allowed (lo, hi) interval per impedance component for one phase."""

    stiffness: tuple[float, float] = (0.0, 100.0)
    damping: tuple[float, float] = (0.0, 5.0)
    equilibrium: tuple[float, float] = (0.0, 1.6)

    def __post_init__(self):
        for lo, hi in (self.stiffness, self.damping, self.equilibrium):
            if not lo <= hi:
                raise ValueError("range lower bound exceeds upper bound")


@dataclass(frozen=True)
class ParameterRanges:
    """Physical impedance ranges for all four phases."""

    phases: tuple[PhaseRanges, PhaseRanges, PhaseRanges, PhaseRanges]

    def for_phase(self, phase: Phase) -> PhaseRanges:
        return self.phases[phase - 1]

    @classmethod
    def default(cls) -> "ParameterRanges":
        return cls(tuple(PhaseRanges() for _ in range(NUM_PHASES)))


@dataclass(frozen=True)
class FsmState:
    """Current phase plus elapsed time in the phase and in the cycle."""

    phase: Phase
    phase_elapsed: float = 0.0
    cycle_elapsed: float = 0.0

    def __post_init__(self):
        if self.phase_elapsed < 0.0 or self.cycle_elapsed < 0.0:
            raise ValueError("elapsed times must be non-negative")
        if self.phase_elapsed > self.cycle_elapsed + 1e-12:
            raise ValueError("phase time cannot exceed cycle time")


def joint_torque(imp: ImpedanceTriple, angle: float, velocity: float) -> float:
    """Impedance torque: stiffness about the equilibrium angle plus damping."""
    return imp.stiffness * (angle - imp.equilibrium) + imp.damping * velocity


def _clamp(value: float, lo: float, hi: float) -> tuple[float, bool]:
    if value < lo:
        return lo, True
    if value > hi:
        return hi, True
    return value, False


def apply_delta(
    imp: ImpedanceSet,
    phase: Phase,
    delta: ControlDelta,
    ranges: ParameterRanges,
) -> tuple[ImpedanceSet, bool]:
    """Add ``delta`` to one phase's triple, clamping to the physical ranges.

    Returns the updated set and a flag saying whether any component was
    clamped.  Clamping rather than rejecting keeps the tuning loop running
    with out-of-range requests while still guaranteeing valid parameters.
    """
    triple = imp.for_phase(phase)
    limits = ranges.for_phase(phase)
    stiffness, c1 = _clamp(triple.stiffness + delta.d_stiffness, *limits.stiffness)
    damping, c2 = _clamp(triple.damping + delta.d_damping, *limits.damping)
    equilibrium, c3 = _clamp(triple.equilibrium + delta.d_equilibrium, *limits.equilibrium)
    updated = imp.replace(phase, ImpedanceTriple(stiffness, damping, equilibrium))
    return updated, (c1 or c2 or c3)


_NEXT_PHASE = {
    Phase.STANCE_FLEXION: Phase.STANCE_EXTENSION,
    Phase.STANCE_EXTENSION: Phase.SWING_FLEXION,
    Phase.SWING_FLEXION: Phase.SWING_EXTENSION,
    Phase.SWING_EXTENSION: Phase.STANCE_FLEXION,
}


def step_fsm(
    state: FsmState,
    dt: float,
    angle: float,
    velocity: float,
    heel_strike: bool = False,
    toe_off: bool = False,
    prev_velocity: float | None = None,
) -> FsmState:
    """Advance the phase machine by one timestep.

    Transition rules: the flexion phases end at their kinematic peak (the
    angular velocity crossing from rising to falling), stance extension
    ends at toe-off, and swing extension ends at heel strike, which also
    starts a new cycle.  At most one transition fires per step, so the
    emitted phase sequence can never skip a phase.

    When the caller can supply the previous timestep's velocity, the peak
    is the true sign change (previous above, current at or below the
    threshold); otherwise a low current velocity after the minimum dwell
    is taken as the peak.
    """
    if dt < 0.0:
        raise ValueError("dt must be non-negative")
    phase_elapsed = state.phase_elapsed + dt
    cycle_elapsed = state.cycle_elapsed + dt

    phase = state.phase
    transition = False
    if phase in (Phase.STANCE_FLEXION, Phase.SWING_FLEXION):
        if prev_velocity is None:
            transition = phase_elapsed >= MIN_DWELL and velocity <= PEAK_VELOCITY_EPS
        else:
            transition = (phase_elapsed >= MIN_DWELL
                          and prev_velocity > PEAK_VELOCITY_EPS
                          and velocity <= PEAK_VELOCITY_EPS)
    elif phase is Phase.STANCE_EXTENSION:
        transition = toe_off
    elif phase is Phase.SWING_EXTENSION:
        transition = heel_strike

    if not transition:
        return FsmState(phase, phase_elapsed, cycle_elapsed)

    next_phase = _NEXT_PHASE[phase]
    if next_phase is Phase.STANCE_FLEXION:
        cycle_elapsed = 0.0
    return FsmState(next_phase, 0.0, cycle_elapsed)
