"""Run configuration: JSON files with defaults, validation and overrides.

A config file is a plain JSON object mirroring the template below.  Any
key the template does not know is rejected, naming its full dotted path.
Command-line flags override file values, which override defaults.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np

from .core import BoundsTable, GaitFeatures, ImpedanceTriple, PhaseBound
from .dhdp import ActionScale, MonitorParams, StageCostParams
from .fsm import ImpedanceSet, ParameterRanges, PhaseRanges
from .harness import DhdpConfig, TrialConfig
from .plant import FeatureMapConfig, OdeKneeConfig


class ConfigError(ValueError):
    """A config file could not be read, parsed, or validated."""


def _imp_to_list(imp: ImpedanceSet):
    return [[t.stiffness, t.damping, t.equilibrium] for t in imp.phases]


def default_config() -> dict:
    """Full config tree with library defaults filled in."""
    fm = FeatureMapConfig.default()
    ode = OdeKneeConfig()
    dhdp = DhdpConfig()
    bounds = BoundsTable.default()
    ranges = ParameterRanges.default()
    return {
        "scenario": 1,
        "stage": "training",
        "plant": "feature-map",
        "seed": 0,
        "jobs": 1,
        "strict_monitor": False,
        "out_dir": "runs/out",
        "trials": 30,
        "keep_policies": 10,
        "trials_per_policy": 30,
        "policy_dir": None,
        "load_critic": False,
        "max_cycles": 500,
        "window": 10,
        "quota": 8,
        "rms_window": 10,
        "init_spread": 0.3,
        "bounds": {
            "safety": [[b.angle, b.duration_pct] for b in bounds.safety],
            "tolerance": [[b.angle, b.duration_pct] for b in bounds.tolerance],
        },
        "ranges": [
            [list(p.stiffness), list(p.damping), list(p.equilibrium)]
            for p in ranges.phases
        ],
        "dhdp": {
            "critic_hidden": dhdp.critic_hidden,
            "actor_hidden": dhdp.actor_hidden,
            "discount": dhdp.discount,
            "critic_lr": dhdp.critic_lr,
            "actor_lr": dhdp.actor_lr,
            "init_weight_scale": dhdp.init_weight_scale,
            "state_cost": dhdp.cost.state_weight.tolist(),
            "action_cost": dhdp.cost.action_weight.tolist(),
            "action_scale": dhdp.action_scale.half_ranges.tolist(),
            "alpha1": None,
            "alpha2": None,
            "alpha3": None,
        },
        "feature_map": {
            "smoothing": fm.smoothing,
            "noise_std": list(fm.noise_std),
            "pace_passthrough": fm.pace_passthrough,
            "reference_impedance": _imp_to_list(fm.reference_impedance),
            "reference_features": [[f.duration, f.peak_angle] for f in fm.reference_features],
            "sensitivity": fm.sensitivity.tolist(),
        },
        "ode": {
            "inertia": ode.inertia,
            "timestep": ode.timestep,
            "initial_angle": ode.initial_angle,
            "initial_velocity": ode.initial_velocity,
            "load_torque": list(ode.load_torque),
            "toe_off_angle": ode.toe_off_angle,
            "heel_strike_angle": ode.heel_strike_angle,
            "max_phase_time": ode.max_phase_time,
            "velocity_limit": ode.velocity_limit,
        },
        "terrain": {
            "pool_size": 5,
            "pool_spread": 0.06,
            "switch_period": 20,
            "consecutive_tracks": 3,
        },
        "pace": {
            "training": [1.0, 1.12, 1.0, 0.88],
            "testing": [1.0, 0.8, 1.0, 1.2],
        },
        "drift": {"gain": 0.0, "smoothing": 0.2},
    }


def _merge(template: dict, user: dict, path: str = "") -> dict:
    merged = {}
    for key, default in template.items():
        here = f"{path}.{key}" if path else key
        if key in user:
            value = user[key]
            if isinstance(default, dict):
                if not isinstance(value, dict):
                    raise ConfigError(f"{here}: expected an object")
                merged[key] = _merge(default, value, here)
            else:
                merged[key] = _check_leaf(value, default, here)
        else:
            merged[key] = copy.deepcopy(default)
    for key in user:
        if key not in template:
            here = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown config key: {here}")
    return merged


def _check_leaf(value, default, path: str):
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean")
        return value
    if isinstance(default, (int, float)):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list")
        return copy.deepcopy(value)
    raise ConfigError(f"{path}: unsupported value type")


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Resolve defaults <- file <- overrides into a validated config tree."""
    user: dict = {}
    if path is not None:
        file = Path(path)
        if not file.exists():
            raise ConfigError(f"config not found: {file}")
        try:
            user = json.loads(file.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {file}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"config root must be an object: {file}")
    resolved = _merge(default_config(), user)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in resolved:
            raise ConfigError(f"unknown override: {key}")
        resolved[key] = value
    return resolved


def _section(fn, name):
    try:
        return fn()
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def trial_config_from(resolved: dict) -> TrialConfig:
    """Build the typed trial configuration out of a resolved config tree."""

    def bounds():
        raw = resolved["bounds"]
        return BoundsTable(
            safety=tuple(PhaseBound(*map(float, b)) for b in raw["safety"]),
            tolerance=tuple(PhaseBound(*map(float, b)) for b in raw["tolerance"]),
        )

    def ranges():
        phases = []
        for entry in resolved["ranges"]:
            ks, bs, es = entry
            phases.append(PhaseRanges(
                stiffness=(float(ks[0]), float(ks[1])),
                damping=(float(bs[0]), float(bs[1])),
                equilibrium=(float(es[0]), float(es[1])),
            ))
        return ParameterRanges(tuple(phases))

    def dhdp():
        raw = resolved["dhdp"]
        discount = float(raw["discount"])
        monitor = None
        if raw["alpha1"] is not None:
            monitor = MonitorParams(
                alpha1=float(raw["alpha1"]), alpha2=float(raw["alpha2"]),
                alpha3=float(raw["alpha3"]), discount=discount,
            )
        return DhdpConfig(
            critic_hidden=int(raw["critic_hidden"]),
            actor_hidden=int(raw["actor_hidden"]),
            discount=discount,
            critic_lr=float(raw["critic_lr"]),
            actor_lr=float(raw["actor_lr"]),
            init_weight_scale=float(raw["init_weight_scale"]),
            cost=StageCostParams(
                state_weight=np.array(raw["state_cost"], dtype=float),
                action_weight=np.array(raw["action_cost"], dtype=float),
                discount=discount,
            ),
            action_scale=ActionScale(np.array(raw["action_scale"], dtype=float)),
            monitor=monitor,
        )

    def feature_map():
        raw = resolved["feature_map"]
        return FeatureMapConfig(
            reference_impedance=ImpedanceSet(tuple(
                ImpedanceTriple(*map(float, t)) for t in raw["reference_impedance"]
            )),
            reference_features=tuple(
                GaitFeatures(*map(float, f)) for f in raw["reference_features"]
            ),
            sensitivity=np.array(raw["sensitivity"], dtype=float),
            smoothing=float(raw["smoothing"]),
            noise_std=tuple(float(v) for v in raw["noise_std"]),
            pace_passthrough=float(raw["pace_passthrough"]),
        )

    def ode():
        raw = resolved["ode"]
        return OdeKneeConfig(
            inertia=float(raw["inertia"]),
            timestep=float(raw["timestep"]),
            initial_angle=float(raw["initial_angle"]),
            initial_velocity=float(raw["initial_velocity"]),
            load_torque=tuple(float(v) for v in raw["load_torque"]),
            toe_off_angle=float(raw["toe_off_angle"]),
            heel_strike_angle=float(raw["heel_strike_angle"]),
            max_phase_time=float(raw["max_phase_time"]),
            velocity_limit=float(raw["velocity_limit"]),
        )

    terrain = resolved["terrain"]
    return _section(lambda: TrialConfig(
        scenario=int(resolved["scenario"]),
        stage=str(resolved["stage"]),
        plant_kind=str(resolved["plant"]),
        max_cycles=int(resolved["max_cycles"]),
        window=int(resolved["window"]),
        quota=int(resolved["quota"]),
        rms_window=int(resolved["rms_window"]),
        bounds=_section(bounds, "bounds"),
        ranges=_section(ranges, "ranges"),
        dhdp=_section(dhdp, "dhdp"),
        feature_map=_section(feature_map, "feature_map"),
        ode=_section(ode, "ode"),
        init_spread=float(resolved["init_spread"]),
        pool_size=int(terrain["pool_size"]),
        pool_spread=float(terrain["pool_spread"]),
        switch_period=int(terrain["switch_period"]),
        consecutive_tracks=int(terrain["consecutive_tracks"]),
        pace_training=tuple(float(v) for v in resolved["pace"]["training"]),
        pace_testing=tuple(float(v) for v in resolved["pace"]["testing"]),
        drift_gain=float(resolved["drift"]["gain"]),
        drift_smoothing=float(resolved["drift"]["smoothing"]),
        strict_monitor=bool(resolved["strict_monitor"]),
        load_critic=bool(resolved["load_critic"]),
    ), "config")
