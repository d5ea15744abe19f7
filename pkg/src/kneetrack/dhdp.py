"""Online actor-critic learning block, one per gait phase.

The critic approximates the discounted cost-to-go of a (state, action)
pair with a single hidden layer and a linear output.  The actor maps the
tracking error to a bounded adjustment command through two saturating
layers, so its output always stays strictly inside (-1, 1) per component.
Both are trained once per gait cycle by plain gradient descent: the critic
on the squared temporal-difference error, the actor on the squared critic
value, chained through the critic's action inputs.

The activation is the bipolar sigmoid (1 - e^-x) / (1 + e^-x), identically
tanh(x / 2).  Its derivative is (1 - value^2) / 2, which is the factor the
update rules rely on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

N_STATE = 2
N_ACTION = 3
DEFAULT_CRITIC_HIDDEN = 8
DEFAULT_ACTOR_HIDDEN = 6
DEFAULT_INIT_SCALE = 0.5


class NumericFaultError(RuntimeError):
    """A weight update produced a non-finite value; the trial must abort."""


class PolicyFormatError(ValueError):
    """A policy snapshot file is malformed or has unexpected shapes."""


# Largest double below 1: saturated activations are nudged into the open
# interval so constrained outputs stay strictly inside (-1, 1) even when
# tanh rounds to exactly +-1.
_OPEN_ONE = float(np.nextafter(1.0, 0.0))


def activation(x):
    """Bipolar sigmoid (1 - e^-x) / (1 + e^-x), elementwise; range (-1, 1)."""
    return np.clip(np.tanh(0.5 * np.asarray(x, dtype=float)), -_OPEN_ONE, _OPEN_ONE)


def activation_deriv(value):
    """Derivative of :func:`activation` expressed through its output value."""
    return 0.5 * (1.0 - np.asarray(value, dtype=float) ** 2)


@dataclass(frozen=True)
class CriticNet:
    """Hidden weights (hidden x 5) and linear output weights (hidden,)."""

    w_hidden: np.ndarray
    w_out: np.ndarray

    def __post_init__(self):
        if self.w_hidden.ndim != 2 or self.w_hidden.shape[1] != N_STATE + N_ACTION:
            raise ValueError(f"critic hidden weights must be (h, 5), got {self.w_hidden.shape}")
        if self.w_out.shape != (self.w_hidden.shape[0],):
            raise ValueError("critic output weights must match hidden size")

    @property
    def hidden_size(self) -> int:
        return self.w_hidden.shape[0]


@dataclass(frozen=True)
class ActorNet:
    """Hidden weights (hidden x 2) and saturating output weights (3 x hidden)."""

    w_hidden: np.ndarray
    w_out: np.ndarray

    def __post_init__(self):
        if self.w_hidden.ndim != 2 or self.w_hidden.shape[1] != N_STATE:
            raise ValueError(f"actor hidden weights must be (h, 2), got {self.w_hidden.shape}")
        if self.w_out.shape != (N_ACTION, self.w_hidden.shape[0]):
            raise ValueError("actor output weights must be (3, hidden)")

    @property
    def hidden_size(self) -> int:
        return self.w_hidden.shape[0]


def init_critic(rng: np.random.Generator, hidden: int = DEFAULT_CRITIC_HIDDEN,
                scale: float = DEFAULT_INIT_SCALE) -> CriticNet:
    return CriticNet(
        w_hidden=rng.uniform(-scale, scale, size=(hidden, N_STATE + N_ACTION)),
        w_out=rng.uniform(-scale, scale, size=hidden),
    )


def init_actor(rng: np.random.Generator, hidden: int = DEFAULT_ACTOR_HIDDEN,
               scale: float = DEFAULT_INIT_SCALE) -> ActorNet:
    return ActorNet(
        w_hidden=rng.uniform(-scale, scale, size=(hidden, N_STATE)),
        w_out=rng.uniform(-scale, scale, size=(N_ACTION, hidden)),
    )


@dataclass(frozen=True)
class CriticTape:
    """Forward-pass intermediates needed by the update rules."""

    z: np.ndarray    # network input [state; action], shape (5,)
    phi: np.ndarray  # hidden activations, shape (hidden,)
    value: float


@dataclass(frozen=True)
class ActorTape:
    state: np.ndarray  # shape (2,)
    phi: np.ndarray    # hidden activations, shape (hidden,)
    output: np.ndarray  # constrained action, shape (3,)


def critic_eval(net: CriticNet, state, action) -> CriticTape:
    z = np.concatenate([np.asarray(state, dtype=float), np.asarray(action, dtype=float)])
    phi = activation(net.w_hidden @ z)
    value = float(net.w_out @ phi)
    return CriticTape(z=z, phi=phi, value=value)


def critic_forward(net: CriticNet, state, action) -> float:
    """Approximate cost-to-go of taking ``action`` in ``state``."""
    return critic_eval(net, state, action).value


def actor_eval(net: ActorNet, state) -> ActorTape:
    s = np.asarray(state, dtype=float)
    phi = activation(net.w_hidden @ s)
    output = activation(net.w_out @ phi)
    return ActorTape(state=s, phi=phi, output=output)


def actor_forward(net: ActorNet, state) -> np.ndarray:
    """Constrained action for ``state``; every component lies in (-1, 1)."""
    return actor_eval(net, state).output


def td_error(value_now: float, value_prev: float, cost_prev: float, discount: float) -> float:
    """Temporal-difference error of the critic.

    Zero exactly when the previous estimate satisfies the one-step
    recursion value_prev = cost_prev + discount * value_now.
    """
    return discount * value_now - (value_prev - cost_prev)


@dataclass(frozen=True)
class StageCostParams:
    """Quadratic penalty weights on tracking error and control effort."""

    state_weight: np.ndarray   # (2, 2), positive definite
    action_weight: np.ndarray  # (3, 3), positive definite
    discount: float = 0.95

    def __post_init__(self):
        for name, mat, dim in (
            ("state_weight", self.state_weight, N_STATE),
            ("action_weight", self.action_weight, N_ACTION),
        ):
            if mat.shape != (dim, dim):
                raise ValueError(f"{name} must be {dim}x{dim}")
            if not np.allclose(mat, mat.T):
                raise ValueError(f"{name} must be symmetric")
            if np.min(np.linalg.eigvalsh(mat)) <= 0.0:
                raise ValueError(f"{name} must be positive definite")
        if not 0.0 < self.discount < 1.0:
            raise ValueError(f"discount must lie in (0, 1), got {self.discount}")

    @classmethod
    def default(cls) -> "StageCostParams":
        return cls(state_weight=np.diag([1.0, 1.0]),
                   action_weight=np.diag([0.1, 0.1, 0.1]))


def stage_cost(state, action, params: StageCostParams) -> float:
    """Instantaneous quadratic cost; non-negative, zero only at the origin."""
    s = np.asarray(state, dtype=float)
    u = np.asarray(action, dtype=float)
    return float(s @ params.state_weight @ s + u @ params.action_weight @ u)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericFaultError("weight update overflowed to a non-finite value")


def critic_update(net: CriticNet, td: float, tape: CriticTape,
                  lr: float, discount: float) -> CriticNet:
    """One gradient step on half the squared TD error.

    The lagged value and cost inside the TD error are treated as constants,
    so the gradient flows only through the current critic output.  The
    hidden-layer delta uses the pre-update output weights.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        grad_scale = lr * discount * td
        gate = activation_deriv(tape.phi)
        w_out = net.w_out - grad_scale * tape.phi
        w_hidden = net.w_hidden - grad_scale * (net.w_out * gate)[:, None] * tape.z[None, :]
    _check_finite(w_out, w_hidden)
    return CriticNet(w_hidden=w_hidden, w_out=w_out)


def critic_action_gradient(net: CriticNet, tape: CriticTape) -> np.ndarray:
    """d(critic value)/d(action): the chain through the action input columns."""
    return (net.w_out * activation_deriv(tape.phi)) @ net.w_hidden[:, N_STATE:]


def actor_update(actor: ActorNet, critic: CriticNet, critic_tape: CriticTape,
                 actor_tape: ActorTape, lr: float) -> ActorNet:
    """One gradient step on half the squared critic value.

    The error signal is the critic value itself; it is backpropagated
    through the critic's action inputs and through both actor saturations.
    A saturated action component contributes nothing, because its
    derivative factor (1 - u^2) / 2 vanishes.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        value = critic_tape.value
        dq_du = critic_action_gradient(critic, critic_tape)      # (3,)
        out_signal = dq_du * activation_deriv(actor_tape.output)  # (3,)
        grad_out = value * out_signal[:, None] * actor_tape.phi[None, :]
        back = out_signal @ actor.w_out                            # (hidden,)
        grad_hidden = (
            value * (back * activation_deriv(actor_tape.phi))[:, None]
            * actor_tape.state[None, :]
        )
        w_out = actor.w_out - lr * grad_out
        w_hidden = actor.w_hidden - lr * grad_hidden
    _check_finite(w_out, w_hidden)
    return ActorNet(w_hidden=w_hidden, w_out=w_out)


@dataclass(frozen=True)
class MonitorParams:
    """Weighting factors of the learning-rate stability conditions.

    The conditions require alpha1 > discount, alpha2 > 4 / discount^2 and
    alpha3 > alpha2; violating them would make the bounds meaningless.
    """

    alpha1: float
    alpha2: float
    alpha3: float
    discount: float

    def __post_init__(self):
        if not self.alpha1 > self.discount > 0.0:
            raise ValueError("alpha1 must exceed the discount factor")
        if not self.alpha2 > 4.0 / self.discount**2:
            raise ValueError("alpha2 must exceed 4 / discount^2")
        if not self.alpha3 > self.alpha2:
            raise ValueError("alpha3 must exceed alpha2")

    @classmethod
    def for_discount(cls, discount: float) -> "MonitorParams":
        # Smallest simple choices satisfying all three inequalities.
        alpha2 = 4.0 / discount**2 + 1.0
        return cls(alpha1=2.0 * discount, alpha2=alpha2, alpha3=2.0 * alpha2,
                   discount=discount)


@dataclass(frozen=True)
class MonitorReport:
    """Per-cycle learning-rate ceilings and whether the rates respect them."""

    critic_bound: float
    actor_bound: float
    critic_ok: bool
    actor_ok: bool

    @property
    def ok(self) -> bool:
        return self.critic_ok and self.actor_ok


def stability_monitor(critic: CriticNet, actor: ActorNet, critic_tape: CriticTape,
                      actor_tape: ActorTape, params: MonitorParams,
                      critic_lr: float, actor_lr: float) -> MonitorReport:
    """Evaluate the learning-rate ceilings that keep weight errors bounded.

    Degenerate denominators (all activations zero) mean the current step
    puts no constraint on the rates; the bound is reported as +inf and the
    check passes.
    """
    g = params.discount
    phi_c = critic_tape.phi
    phi_a = actor_tape.phi

    a_vec = activation_deriv(phi_c) * critic.w_out
    denom_c = g * g * params.alpha1 * (
        float(phi_c @ phi_c)
        + float(a_vec @ a_vec) * float(critic_tape.z @ critic_tape.z) / params.alpha1
    )
    critic_bound = (params.alpha1 - g) / denom_c if denom_c > 0.0 else math.inf

    c_mat = (
        activation_deriv(phi_c)[:, None]
        * critic.w_hidden[:, N_STATE:]
        * activation_deriv(actor_tape.output)[None, :]
    )
    wc = critic.w_out @ c_mat                                   # (3,)
    d_mat = actor.w_out * activation_deriv(phi_a)[None, :]      # (3, hidden)
    wcd = wc @ d_mat                                            # (hidden,)
    denom_a = params.alpha3 * float(wc @ wc) * float(phi_a @ phi_a) + params.alpha2 * float(
        wcd @ wcd
    ) * float(actor_tape.state @ actor_tape.state)
    actor_bound = (params.alpha3 - params.alpha2) / denom_a if denom_a > 0.0 else math.inf

    return MonitorReport(
        critic_bound=critic_bound,
        actor_bound=actor_bound,
        critic_ok=critic_lr < critic_bound,
        actor_ok=actor_lr < actor_bound,
    )


@dataclass(frozen=True)
class ActionScale:
    """Physical half-ranges mapping the (-1, 1)^3 actor output to deltas.

    Row order follows the phases; columns are (stiffness, damping,
    equilibrium) half-ranges.
    """

    half_ranges: np.ndarray  # (4, 3), strictly positive

    def __post_init__(self):
        if self.half_ranges.shape != (4, N_ACTION):
            raise ValueError("action scale must be a 4x3 table")
        if not np.all(self.half_ranges > 0.0):
            raise ValueError("action half-ranges must be strictly positive")

    def for_phase(self, phase) -> np.ndarray:
        return self.half_ranges[int(phase) - 1]

    @classmethod
    def default(cls) -> "ActionScale":
        return cls(np.tile(np.array([10.0, 1.0, 0.12]), (4, 1)))


def scale_action(action, half_ranges) -> np.ndarray:
    """Map a normalized action to physical deltas, componentwise."""
    u = np.asarray(action, dtype=float)
    return u * np.asarray(half_ranges, dtype=float)


# ---------------------------------------------------------------------------
# Policy snapshots
#
# Snapshots are plain JSON: one entry per phase holding each weight matrix as
# its shape plus row-major values.  Floats are serialized with full repr
# precision, so a save/load round trip is bit-exact.

POLICY_FORMAT = "kneetrack-policy"
POLICY_VERSION = 1


def _matrix_to_json(mat: np.ndarray) -> dict:
    return {"shape": list(mat.shape), "data": [float(v) for v in mat.ravel()]}


def _matrix_from_json(obj, name: str) -> np.ndarray:
    try:
        shape = tuple(int(d) for d in obj["shape"])
        data = np.array([float(v) for v in obj["data"]], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise PolicyFormatError(f"{name}: malformed matrix entry") from exc
    if data.size != math.prod(shape):
        raise PolicyFormatError(
            f"{name}: {data.size} values do not fill shape {list(shape)}"
        )
    return data.reshape(shape)


def save_policy(path, actors, critics=None) -> None:
    """Write per-phase actor (and optionally critic) weights to ``path``."""
    phases = []
    for idx, actor in enumerate(actors):
        entry = {
            "phase": idx + 1,
            "actor_hidden": _matrix_to_json(actor.w_hidden),
            "actor_output": _matrix_to_json(actor.w_out),
        }
        if critics is not None:
            critic = critics[idx]
            entry["critic_hidden"] = _matrix_to_json(critic.w_hidden)
            entry["critic_output"] = _matrix_to_json(critic.w_out)
        phases.append(entry)
    doc = {"format": POLICY_FORMAT, "version": POLICY_VERSION, "phases": phases}
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_policy(path, expect_actor_hidden=None, expect_critic_hidden=None):
    """Read a snapshot back into (actors, critics-or-None).

    When expected hidden sizes are given, a mismatching snapshot raises
    :class:`PolicyFormatError` naming the expected and found dimensions.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise PolicyFormatError(f"cannot read policy snapshot {path}: {exc}") from exc
    if doc.get("format") != POLICY_FORMAT:
        raise PolicyFormatError(f"{path}: not a policy snapshot")
    phases = doc.get("phases")
    if not isinstance(phases, list) or len(phases) != 4:
        raise PolicyFormatError(f"{path}: snapshot must hold four phases")

    actors, critics = [], []
    for entry in phases:
        w_hidden = _matrix_from_json(entry["actor_hidden"], "actor_hidden")
        w_out = _matrix_from_json(entry["actor_output"], "actor_output")
        if expect_actor_hidden is not None and w_hidden.shape[0] != expect_actor_hidden:
            raise PolicyFormatError(
                f"actor hidden size mismatch: expected {expect_actor_hidden}, "
                f"found {w_hidden.shape[0]}"
            )
        actors.append(ActorNet(w_hidden=w_hidden, w_out=w_out))
        if "critic_hidden" in entry:
            c_hidden = _matrix_from_json(entry["critic_hidden"], "critic_hidden")
            c_out = _matrix_from_json(entry["critic_output"], "critic_output")
            if expect_critic_hidden is not None and c_hidden.shape[0] != expect_critic_hidden:
                raise PolicyFormatError(
                    f"critic hidden size mismatch: expected {expect_critic_hidden}, "
                    f"found {c_hidden.shape[0]}"
                )
            critics.append(CriticNet(w_hidden=c_hidden, w_out=c_out.ravel()))
    return actors, (critics if len(critics) == 4 else None)
