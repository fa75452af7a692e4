"""Experiment configuration: YAML parsing, validation, and content hashing.

Configs are plain nested dictionaries with a documented schema (see
README). validate_config returns the full list of violations with field
paths; config_hash gives a stable content digest that output files embed so
stale artifacts are never silently reused.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import yaml

from .errors import ConfigError

DEFAULT_CONFIG: dict = {
    "output_dir": "runs/default",
    "global_seed": 0,
    "deterministic": True,
    "env": {
        "name": "double_integrator_2d",
        "dt": 0.05,
        "horizon": 100,
        "params": {"accel_gain": 12.0},
    },
    "clips": {
        "families": ["figure_eight", "waypoint_dash"],
        "n_train": 20,
        "n_heldout": 5,
        "seed": 2024,
    },
    "cloning": {
        "eta": 0.1,
        "n_rollouts": 100,
        "methods": ["bc", "lfpc"],
        "hidden_dims": [64, 64],
        "steps": None,
        "batch_size": 256,
        "learning_rate": 1e-3,
        "perturbation_rollouts": 5,
        "seed": 1,
    },
    "npmp": {
        "beta": 0.1,
        "latent_dim": 8,
        "alpha": 0.95,
        "lookahead": 5,
        "mode": "noisy_rollout_cloning",
        "rollouts_per_clip": 10,
        "encoder_hidden": [64, 64],
        "decoder_hidden": [64, 64, 64],
        "subsequence_count": 32,
        "subsequence_length": 30,
        "perturbed_copies": 5,
        "steps": 6000,
        "learning_rate": 1e-3,
        "kl_mode": "closed_form",
        "seed": 3,
    },
    "evaluation": {
        "noise_levels": [0.0],
        "n_seeds": 20,
        "optimize_steps": 200,
        "optimize_step_size": 0.1,
        "failure_threshold": 0.5,
    },
    "reuse": {
        "optimizer": "policy_gradient",
        "iterations": 150,
        "episodes_per_iteration": 16,
        "learning_rate": 3e-3,
        "explore_std": 0.5,
        "n_seeds": 10,
        "eval_episodes": 5,
        "capture_radius": 0.2,
        "dwell_steps": 3,
        "spawn_box": 1.5,
        "episode_length": 200,
        "seed": 5,
    },
}


def merge_config(overrides: dict | None) -> dict:
    """Deep-merge overrides onto the defaults."""
    config = copy.deepcopy(DEFAULT_CONFIG)

    def merge(dst, src, path):
        for key, value in src.items():
            if key not in dst:
                dst[key] = copy.deepcopy(value)
            elif isinstance(dst[key], dict) and isinstance(value, dict):
                merge(dst[key], value, f"{path}{key}.")
            else:
                dst[key] = copy.deepcopy(value)

    if overrides:
        merge(config, overrides, "")
    return config


def load_config(path: str | Path) -> dict:
    """Read a YAML config file and merge it onto the defaults."""
    raw = yaml.safe_load(Path(path).read_text())
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError([f"config root must be a mapping, got {type(raw).__name__}"])
    config = merge_config(raw)
    errors = validate_config(config)
    if errors:
        raise ConfigError(errors)
    return config


def validate_config(config: dict) -> list[str]:
    """All range and consistency checks; returns violations with field paths."""
    errors = []

    def check(cond, path, message):
        if not cond:
            errors.append(f"{path}: {message}")

    env = config.get("env", {})
    check(env.get("name") in ("double_integrator_2d", "pendulum", "unicycle_plane"),
          "env.name", f"unknown environment {env.get('name')!r}")
    check(isinstance(env.get("dt"), (int, float)) and env.get("dt", 0) > 0,
          "env.dt", "must be > 0")
    check(isinstance(env.get("horizon"), int) and env.get("horizon", 0) >= 2,
          "env.horizon", "must be an integer >= 2")

    clips = config.get("clips", {})
    check(clips.get("n_train", 0) >= 1, "clips.n_train", "must be >= 1")
    check(clips.get("n_heldout", 0) >= 0, "clips.n_heldout", "must be >= 0")
    families = clips.get("families", [])
    known = {"figure_eight", "waypoint_dash", "swing_up", "oscillation"}
    check(bool(families) and set(families) <= known, "clips.families",
          f"must be a nonempty subset of {sorted(known)}")

    cloning = config.get("cloning", {})
    check(cloning.get("eta", -1) >= 0, "cloning.eta", "must be >= 0")
    check(cloning.get("n_rollouts", 0) >= 1, "cloning.n_rollouts", "must be >= 1")
    for method in cloning.get("methods", []):
        check(method in ("bc", "lfpc", "blind"), "cloning.methods",
              f"unknown method {method!r}")
    steps = cloning.get("steps")
    check(steps is None or (isinstance(steps, int) and steps >= 0),
          "cloning.steps", "must be null or a nonnegative integer")

    npmp = config.get("npmp", {})
    check(isinstance(npmp.get("beta"), (int, float)) and npmp.get("beta", 0) > 0,
          "npmp.beta", "must be > 0")
    check(0 <= npmp.get("alpha", -1) < 1, "npmp.alpha", "must be in [0, 1)")
    check(npmp.get("latent_dim", 0) >= 1, "npmp.latent_dim", "must be >= 1")
    check(npmp.get("lookahead", -1) >= 0, "npmp.lookahead", "must be >= 0")
    check(npmp.get("subsequence_length", 0) >= 2, "npmp.subsequence_length",
          "must be >= 2")
    check(npmp.get("mode") in ("noisy_rollout_cloning", "lfpc"), "npmp.mode",
          "must be noisy_rollout_cloning or lfpc")
    check(npmp.get("kl_mode") in ("closed_form", "sample"), "npmp.kl_mode",
          "must be closed_form or sample")
    check(npmp.get("rollouts_per_clip", 0) >= 1, "npmp.rollouts_per_clip",
          "must be >= 1")

    ev = config.get("evaluation", {})
    for lvl in ev.get("noise_levels", []):
        check(lvl >= 0, "evaluation.noise_levels", "levels must be >= 0")
    check(ev.get("n_seeds", 0) >= 1, "evaluation.n_seeds", "must be >= 1")
    check(0 < ev.get("failure_threshold", 0) < 1, "evaluation.failure_threshold",
          "must be in (0, 1)")

    reuse = config.get("reuse", {})
    check(reuse.get("optimizer") in ("policy_gradient", "cross_entropy_method"),
          "reuse.optimizer", "must be policy_gradient or cross_entropy_method")
    check(reuse.get("capture_radius", 0) > 0, "reuse.capture_radius", "must be > 0")
    check(reuse.get("n_seeds", 0) >= 1, "reuse.n_seeds", "must be >= 1")
    check(reuse.get("spawn_box", 0) > 0, "reuse.spawn_box", "must be > 0")
    check(reuse.get("episode_length", 0) >= 1, "reuse.episode_length",
          "must be >= 1")

    return errors


def canonical_json(value) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict, *subtree_keys: str) -> str:
    """Stable digest of the whole config or of named top-level subtrees."""
    if subtree_keys:
        payload = {key: config.get(key) for key in sorted(subtree_keys)}
    else:
        payload = {k: v for k, v in config.items() if k != "output_dir"}
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()[:16]
