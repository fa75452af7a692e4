"""Stationary policy cloning from limit cycles.

A driven pendulum tracking a sinusoid settles into a periodic closed-loop
orbit; LFPC on a few whole periods, with the time input dropped, yields a
stationary state->action policy. The report projects noisy rollouts of the
cloned policy into a PCA plane together with the reference cycle and tracks
the distance-to-cycle series.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace as dc_replace
from pathlib import Path

import numpy as np

from .cloning import (
    NominalTrace,
    PerturbationModel,
    StudentPolicy,
    StudentTrainingConfig,
    estimate_perturbation_model,
    record_nominal_trace,
    train_student,
)
from .envs import EnvSpec, RolloutNoiseConfig, rollout
from .errors import DomainError, ValidationError
from .evaluation import pca_fit, pca_project
from .experts import ExpertPolicy, build_expert
from .references import oscillation

PERIOD_CLOSURE_TOL = 1e-3
SETTLE_PERIODS = 2


@dataclass
class LimitCycleClip:
    """A nominal trace restricted to whole periods of a periodic expert."""

    trace: NominalTrace
    period_steps: int
    n_periods: int
    env: EnvSpec

    def __post_init__(self):
        if self.n_periods < 3:
            raise DomainError("need at least 3 whole periods")
        if self.trace.horizon != self.period_steps * self.n_periods:
            raise DomainError("trace length must equal period_steps * n_periods")
        full = self.trace.full_states
        for k in range(self.n_periods):
            gap = np.max(np.abs(full[k * self.period_steps]
                                - full[(k + 1) * self.period_steps]))
            if gap > PERIOD_CLOSURE_TOL:
                raise ValidationError(
                    f"period {k} fails to close (gap {gap:.2e})")

    @property
    def cycle_states(self) -> np.ndarray:
        return self.trace.states[:self.period_steps]


def make_limit_cycle_clip(amplitude: float = 2.0, period: float = 3.0,
                          n_periods: int = 3, dt: float = 0.05,
                          env_params: dict | None = None,
                          ) -> tuple[LimitCycleClip, ExpertPolicy]:
    """Build the driven-pendulum expert and cut its settled middle periods.

    The requested period is rounded to a whole number of steps; the expert
    runs for settle + n_periods + 1 periods so the extracted span sits away
    from the finite-horizon gain transients at both ends.
    """
    period_steps = int(round(period / dt))
    period_eff = period_steps * dt
    total_periods = SETTLE_PERIODS + n_periods + 1
    env = EnvSpec(name="pendulum", dt=dt, horizon=total_periods * period_steps,
                  params=env_params or {})
    clip = oscillation(env, f"limit-cycle-A{amplitude}-P{period_eff}",
                       amplitude=amplitude, period=period_eff)
    expert = build_expert(env, clip)
    trace = record_nominal_trace(expert)
    start = SETTLE_PERIODS * period_steps
    stop = start + n_periods * period_steps
    restricted = NominalTrace(
        states=trace.states[start:stop],
        actions=trace.actions[start:stop],
        jacobians=trace.jacobians[start:stop],
        final_state=trace.states[stop].copy(),
    )
    return (LimitCycleClip(trace=restricted, period_steps=period_steps,
                           n_periods=n_periods, env=env), expert)


def stationary_delta(expert: ExpertPolicy, eta: float = 0.1, n_rollouts: int = 5,
                     seed: int = 0) -> PerturbationModel:
    """Environment-level perturbation model from noisy expert rollouts."""
    env = expert.env
    trace = record_nominal_trace(expert, validate=False)
    rollouts = [rollout(env, expert, RolloutNoiseConfig(eta, seed + k),
                        expert.reference.states[0]) for k in range(n_rollouts)]
    return estimate_perturbation_model(rollouts, trace)


def tube_radius(delta: PerturbationModel) -> float:
    """3x the pooled (RMS over dimensions) perturbation std."""
    return 3.0 * float(np.sqrt(np.mean(delta.stds ** 2)))


def clone_stationary(clip: LimitCycleClip, delta: PerturbationModel,
                     config: StudentTrainingConfig | None = None,
                     ) -> tuple[StudentPolicy, dict]:
    """LFPC training with the phase input dropped: the student sees state only."""
    if config is None:
        config = StudentTrainingConfig()
    if config.time_indexed:
        config = dc_replace(config, time_indexed=False)
    return train_student("lfpc", config, trace=clip.trace, delta=delta)


def distance_to_cycle(states: np.ndarray, cycle_states: np.ndarray) -> np.ndarray:
    """Per-row Euclidean distance to the nearest cycle point."""
    diffs = states[:, None, :] - cycle_states[None, :, :]
    return np.sqrt((diffs ** 2).sum(axis=2)).min(axis=1)


def stationary_rollout(student: StudentPolicy, clip: LimitCycleClip,
                       start_state: np.ndarray, n_periods: int,
                       eta: float = 0.0, seed: int = 0):
    env = dc_replace(clip.env, horizon=n_periods * clip.period_steps)
    return rollout(env, student, RolloutNoiseConfig(eta, seed), start_state)


def limit_cycle_report(student: StudentPolicy, clip: LimitCycleClip,
                       delta: PerturbationModel, out_dir: str | Path,
                       seeds: tuple[int, ...] = tuple(range(20)),
                       eta: float = 0.1, n_periods: int = 10) -> dict:
    """PCA point files plus distance-to-cycle series for noisy rollouts."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = clip.trace.states[0]
    rollouts = [stationary_rollout(student, clip, start, n_periods, eta, seed)
                for seed in seeds]
    pooled = np.vstack([traj.states for traj in rollouts])
    proj = pca_fit(pooled, k=min(2, pooled.shape[1]))
    distances = np.stack([distance_to_cycle(traj.states, clip.cycle_states)
                          for traj in rollouts])

    points_path = out_dir / "limit_cycle_points.csv"
    with open(points_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "seed", "t", "pc1", "pc2"])
        for seed, traj in zip(seeds, rollouts):
            pts = pca_project(proj, traj.states)
            for t, row in enumerate(pts):
                writer.writerow(["rollout", seed, t,
                                 repr(float(row[0])), repr(float(row[1]))])
        ref_pts = pca_project(proj, clip.cycle_states)
        for t, row in enumerate(ref_pts):
            writer.writerow(["reference", -1, t,
                             repr(float(row[0])), repr(float(row[1]))])

    dist_path = out_dir / "distance_to_cycle.csv"
    with open(dist_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "t", "distance"])
        for seed, series in zip(seeds, distances):
            for t, d in enumerate(series):
                writer.writerow([seed, t, repr(float(d))])

    return {"points_file": str(points_path), "distance_file": str(dist_path),
            "distances": distances, "tube_radius": tube_radius(delta)}
