"""Canonical bundled environments and clips used by the experiment presets.

The single-skill transfer suite holds four behaviors whose open-loop replay
collapses under moderate action noise while the feedback experts stay robust;
that contrast is what makes the cloning comparison meaningful. The library
environment hosts the many-clip collections used for motor-primitive training
and reuse.
"""

from __future__ import annotations

import numpy as np

from .envs import EnvSpec
from .references import (
    ReferenceTrajectory,
    figure_eight,
    oscillation,
    sample_clip_library,
    swing_up,
    waypoint_dash,
)

# stiff double integrator: accelerations strong enough that action noise
# visibly corrupts open-loop replay within one episode
LIBRARY_ACCEL_GAIN = 12.0


def transfer_env_di() -> EnvSpec:
    return EnvSpec(name="double_integrator_2d", dt=0.05, horizon=100,
                   params={"accel_gain": LIBRARY_ACCEL_GAIN})


def transfer_env_pendulum() -> EnvSpec:
    return EnvSpec(name="pendulum", dt=0.05, horizon=100)


def transfer_suite() -> list[ReferenceTrajectory]:
    """The four bundled single-skill transfer clips."""
    di = transfer_env_di()
    pe = transfer_env_pendulum()
    return [
        figure_eight(di, "fig8", amplitude=1.3, period=4.0),
        waypoint_dash(di, "dash", n_waypoints=3, box=1.1, seed=4),
        swing_up(pe, "swingup", rise_fraction=0.45),
        oscillation(pe, "balance-wobble", amplitude=0.5, period=3.0,
                    center=float(np.pi)),
    ]


def library_env() -> EnvSpec:
    return transfer_env_di()


def clip_library(n_train: int = 20, n_heldout: int = 5, seed: int = 2024,
                 ) -> tuple[list[ReferenceTrajectory], list[ReferenceTrajectory]]:
    """Train/held-out clip split for motor-primitive training."""
    env = library_env()
    clips = sample_clip_library(env, ["figure_eight", "waypoint_dash"],
                                n_train + n_heldout, seed=seed, id_prefix="lib")
    train = clips[:n_train]
    heldout = [
        ReferenceTrajectory(clip_id=c.clip_id.replace("lib-", "held-"),
                            family=c.family, env=c.env, states=c.states,
                            params=c.params)
        for c in clips[n_train:]
    ]
    return train, heldout


def stress_clips(n: int = 4, seed: int = 777) -> list[ReferenceTrajectory]:
    """Deliberately wide clips outside the library's sampled parameter range;
    used to exercise the latent-optimization triage path."""
    env = library_env()
    rng = np.random.default_rng(seed)
    clips = []
    for i in range(n):
        period = float(rng.uniform(2.6, 3.2))
        clips.append(figure_eight(env, f"stress-{i:02d}",
                                  amplitude=None, period=period,
                                  phase=float(rng.uniform(0.0, 2.0 * np.pi))))
    return clips
