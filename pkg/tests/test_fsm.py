"""Phase machine, torque law and parameter application."""

import numpy as np
import pytest

from kneetrack.core import ControlDelta, ImpedanceTriple, Phase
from kneetrack.fsm import (
    FsmState,
    ImpedanceSet,
    ParameterRanges,
    apply_delta,
    joint_torque,
    step_fsm,
)


def make_set(k=10.0, b=1.0, eq=0.2):
    return ImpedanceSet(tuple(ImpedanceTriple(k, b, eq) for _ in range(4)))


# ---------------------------------------------------------------------------
# torque law


def test_torque_zero_at_equilibrium_at_rest():
    imp = ImpedanceTriple(10.0, 1.0, 0.2)
    assert joint_torque(imp, angle=0.2, velocity=0.0) == 0.0


def test_torque_direct_evaluation():
    imp = ImpedanceTriple(2.0, 0.1, 0.0)
    assert joint_torque(imp, angle=0.5, velocity=1.0) == pytest.approx(1.1)


def test_torque_pure_damping():
    imp = ImpedanceTriple(0.0, 0.5, 0.7)
    assert joint_torque(imp, angle=1.2, velocity=-2.0) == pytest.approx(-1.0)


def test_torque_linear_in_deflection_and_velocity():
    rng = np.random.default_rng(2)
    imp = ImpedanceTriple(12.0, 0.8, 0.3)
    for _ in range(50):
        th, om, a = rng.uniform(0, 1.6), rng.uniform(-3, 3), rng.uniform(-2, 2)
        base = joint_torque(imp, imp.equilibrium, 0.0)
        assert base == 0.0
        t1 = joint_torque(imp, th, om)
        t2 = joint_torque(imp, imp.equilibrium + a * (th - imp.equilibrium), a * om)
        assert t2 == pytest.approx(a * t1, abs=1e-12)


def test_torque_zero_impedance_is_identically_zero():
    imp = ImpedanceTriple(0.0, 0.0, 0.0)
    for th, om in [(0.1, -2.0), (1.5, 3.0), (0.0, 0.0)]:
        assert joint_torque(imp, th, om) == 0.0


# ---------------------------------------------------------------------------
# parameter deltas


def test_apply_delta_zero_is_identity():
    imp = make_set()
    out, clamped = apply_delta(imp, Phase.STANCE_FLEXION, ControlDelta(0, 0, 0),
                               ParameterRanges.default())
    assert not clamped
    assert out == imp


def test_apply_delta_adds_componentwise():
    imp = make_set(k=10.0)
    out, clamped = apply_delta(imp, Phase.SWING_FLEXION, ControlDelta(2.0, 0.0, 0.0),
                               ParameterRanges.default())
    assert not clamped
    assert out.for_phase(Phase.SWING_FLEXION).stiffness == pytest.approx(12.0)
    # other phases untouched
    for phase in (Phase.STANCE_FLEXION, Phase.STANCE_EXTENSION, Phase.SWING_EXTENSION):
        assert out.for_phase(phase) == imp.for_phase(phase)


def test_apply_delta_clamps_and_flags():
    imp = make_set(k=0.5)
    out, clamped = apply_delta(imp, Phase.STANCE_FLEXION, ControlDelta(-2.0, 0.0, 0.0),
                               ParameterRanges.default())
    assert clamped
    assert out.for_phase(Phase.STANCE_FLEXION).stiffness == 0.0


def test_apply_delta_invertible_without_clamping():
    rng = np.random.default_rng(3)
    ranges = ParameterRanges.default()
    for _ in range(100):
        imp = make_set(k=float(rng.uniform(10, 40)), b=float(rng.uniform(0.5, 2)),
                       eq=float(rng.uniform(0.2, 1.0)))
        delta = ControlDelta(float(rng.uniform(-5, 5)), float(rng.uniform(-0.4, 0.4)),
                             float(rng.uniform(-0.1, 0.1)))
        phase = Phase(int(rng.integers(1, 5)))
        fwd, clamped = apply_delta(imp, phase, delta, ranges)
        if clamped:
            continue
        back, _ = apply_delta(fwd, phase, ControlDelta(-delta.d_stiffness,
                                                       -delta.d_damping,
                                                       -delta.d_equilibrium), ranges)
        got = back.for_phase(phase)
        want = imp.for_phase(phase)
        assert got.stiffness == pytest.approx(want.stiffness, abs=1e-12)
        assert got.damping == pytest.approx(want.damping, abs=1e-12)
        assert got.equilibrium == pytest.approx(want.equilibrium, abs=1e-12)


def test_apply_delta_output_always_valid():
    rng = np.random.default_rng(4)
    ranges = ParameterRanges.default()
    imp = make_set()
    for _ in range(300):
        delta = ControlDelta(float(rng.uniform(-200, 200)), float(rng.uniform(-10, 10)),
                             float(rng.uniform(-3, 3)))
        phase = Phase(int(rng.integers(1, 5)))
        imp, _ = apply_delta(imp, phase, delta, ranges)
        triple = imp.for_phase(phase)
        limits = ranges.for_phase(phase)
        assert limits.stiffness[0] <= triple.stiffness <= limits.stiffness[1]
        assert limits.damping[0] <= triple.damping <= limits.damping[1]
        assert limits.equilibrium[0] <= triple.equilibrium <= limits.equilibrium[1]


# ---------------------------------------------------------------------------
# phase machine


def advance(state, dt, n, **kw):
    for _ in range(n):
        state = step_fsm(state, dt, **kw)
    return state


def test_stance_flexion_ends_at_velocity_peak():
    state = FsmState(Phase.STANCE_FLEXION)
    state = advance(state, 0.05, 3, angle=0.3, velocity=1.0)
    assert state.phase is Phase.STANCE_FLEXION
    state = step_fsm(state, 0.05, angle=0.35, velocity=-0.5)
    assert state.phase is Phase.STANCE_EXTENSION
    assert state.phase_elapsed == 0.0


def test_stance_extension_ends_at_toe_off():
    state = FsmState(Phase.STANCE_EXTENSION, 0.1, 0.4)
    state = step_fsm(state, 0.05, angle=0.15, velocity=-0.2)
    assert state.phase is Phase.STANCE_EXTENSION
    state = step_fsm(state, 0.05, angle=0.12, velocity=-0.1, toe_off=True)
    assert state.phase is Phase.SWING_FLEXION


def test_heel_strike_starts_new_cycle():
    state = FsmState(Phase.SWING_EXTENSION, 0.2, 1.1)
    state = step_fsm(state, 0.05, angle=0.1, velocity=-0.3, heel_strike=True)
    assert state.phase is Phase.STANCE_FLEXION
    assert state.cycle_elapsed == 0.0
    assert state.phase_elapsed == 0.0


def test_phase_sequence_never_skips():
    rng = np.random.default_rng(5)
    state = FsmState(Phase.STANCE_FLEXION)
    order = {1: 2, 2: 3, 3: 4, 4: 1}
    last = int(state.phase)
    for _ in range(2000):
        state = step_fsm(
            state, 0.02,
            angle=float(rng.uniform(0, 1.6)),
            velocity=float(rng.uniform(-2, 2)),
            heel_strike=bool(rng.random() < 0.1),
            toe_off=bool(rng.random() < 0.1),
        )
        now = int(state.phase)
        assert now == last or now == order[last]
        last = now


def test_elapsed_times_accumulate():
    state = FsmState(Phase.STANCE_FLEXION)
    state = advance(state, 0.01, 10, angle=0.2, velocity=0.5)
    assert state.phase_elapsed == pytest.approx(0.10)
    assert state.cycle_elapsed == pytest.approx(0.10)


def test_fsm_state_validation():
    with pytest.raises(ValueError):
        FsmState(Phase.STANCE_FLEXION, -0.1, 0.2)
    with pytest.raises(ValueError):
        FsmState(Phase.STANCE_FLEXION, 0.3, 0.2)
