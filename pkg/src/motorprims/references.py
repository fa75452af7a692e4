"""Reference trajectory ("clip") generators for the toy environments.

Each family is a parameterized generator, so arbitrarily many distinct clips
(and held-out clips) can be sampled by varying amplitude, period, phase, or
waypoint seeds. State sequences are built so that every consecutive pair is
exactly reachable under the semi-implicit step map; construction validates
this by inverting the dynamics and checking action bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .envs import EnvSpec, env_invert
from .errors import FeasibilityError, ShapeError

FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class ReferenceTrajectory:
    """A clip: (horizon + 1) states, validated as dynamically feasible."""

    clip_id: str
    family: str
    env: EnvSpec
    states: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.float64)
        expected = (self.env.horizon + 1, self.env.state_dim)
        if states.shape != expected:
            raise ShapeError(f"reference states shape {states.shape} != {expected}")
        object.__setattr__(self, "states", states)
        reference_actions(self.env, states)  # raises FeasibilityError if unreachable

    @property
    def horizon(self) -> int:
        return self.env.horizon


def reference_actions(env: EnvSpec, states: np.ndarray,
                      tol: float = FEASIBILITY_TOL) -> np.ndarray:
    """Nominal actions recovered by inverting the dynamics along the states.

    Raises FeasibilityError naming the first step whose transition is either
    off the reachable manifold or needs an out-of-bounds action.
    """
    states = np.asarray(states, dtype=np.float64)
    T = states.shape[0] - 1
    actions = np.empty((T, env.action_dim))
    for t in range(T):
        action, residual = env_invert(env, states[t], states[t + 1])
        if residual > tol:
            raise FeasibilityError(
                f"step {t}: transition off the reachable manifold (residual {residual:.3e})",
                step=t)
        if np.any(np.abs(action) > 1.0 + 1e-12):
            raise FeasibilityError(
                f"step {t}: required action {action} exceeds [-1, 1]", step=t)
        actions[t] = action
    return actions


def _states_from_positions(env: EnvSpec, positions: np.ndarray,
                           v0: np.ndarray) -> np.ndarray:
    """Double-integrator states consistent with a position profile.

    Velocities are backward differences of positions, which is exactly the
    semi-implicit consistency requirement p' = p + dt * v'.
    """
    T = positions.shape[0] - 1
    states = np.empty((T + 1, 4))
    states[:, :2] = positions
    states[0, 2:] = v0
    states[1:, 2:] = (positions[1:] - positions[:-1]) / env.dt
    return states


def _states_from_angles(env: EnvSpec, thetas: np.ndarray, omega0: float) -> np.ndarray:
    """Pendulum states consistent with an angle profile."""
    T = thetas.shape[0] - 1
    states = np.empty((T + 1, 2))
    states[:, 0] = thetas
    states[0, 1] = omega0
    states[1:, 1] = (thetas[1:] - thetas[:-1]) / env.dt
    return states


def max_feasible_eight_amplitude(env: EnvSpec, period: float) -> float:
    """Largest figure-eight amplitude the actuators can drive at this period."""
    w = 2.0 * np.pi / period
    if env.name == "double_integrator_2d":
        # fast axis needs acceleration 2*A*w^2
        return 0.85 * env.params["accel_gain"] / (2.0 * w * w)
    if env.name == "unicycle_plane":
        # speed along the curve peaks near A*w*sqrt(2)
        return 0.8 * env.params["speed_gain"] / (w * np.sqrt(2.0))
    raise ShapeError(f"figure_eight is not defined for {env.name}")


def figure_eight(env: EnvSpec, clip_id: str, amplitude: float | None = None,
                 period: float = 6.0, phase: float = 0.0) -> ReferenceTrajectory:
    """Lissajous 1:2 loop for the planar environments."""
    if amplitude is None:
        amplitude = 0.8 * max_feasible_eight_amplitude(env, period)
    T = env.horizon
    t_grid = np.arange(T + 1) * env.dt
    w = 2.0 * np.pi / period
    px = amplitude * np.sin(w * t_grid + phase)
    py = 0.5 * amplitude * np.sin(2.0 * (w * t_grid + phase))
    params = {"amplitude": amplitude, "period": period, "phase": phase}
    if env.name == "double_integrator_2d":
        v0 = amplitude * w * np.array([np.cos(phase), np.cos(2.0 * phase)])
        states = _states_from_positions(env, np.stack([px, py], axis=1), v0)
    elif env.name == "unicycle_plane":
        states = _unicycle_states_from_positions(env, np.stack([px, py], axis=1))
    else:
        raise ShapeError(f"figure_eight is not defined for {env.name}")
    return ReferenceTrajectory(clip_id=clip_id, family="figure_eight", env=env,
                               states=states, params=params)


def _unicycle_states_from_positions(env: EnvSpec, positions: np.ndarray) -> np.ndarray:
    """Unicycle states whose headings follow the displacement directions."""
    T = positions.shape[0] - 1
    disp = positions[1:] - positions[:-1]
    if np.any(np.linalg.norm(disp, axis=1) < 1e-12):
        raise FeasibilityError("unicycle reference must keep moving")
    angles = np.unwrap(np.arctan2(disp[:, 1], disp[:, 0]))
    states = np.empty((T + 1, 3))
    states[:, :2] = positions
    states[1:, 2] = angles
    states[0, 2] = angles[0]
    return states


def waypoint_dash(env: EnvSpec, clip_id: str, n_waypoints: int = 3,
                  box: float | None = None, seed: int = 0,
                  ) -> ReferenceTrajectory:
    """Dashes between random waypoints with smooth ease-in/ease-out segments."""
    rng = np.random.default_rng(seed)
    if box is None:
        box = 0.1 * env.params.get("accel_gain", 1.0) if env.name == "double_integrator_2d" else 1.2
    params = {"n_waypoints": n_waypoints, "box": box, "seed": seed}
    if env.name == "double_integrator_2d":
        states = _di_waypoint_states(env, rng, n_waypoints, box)
    elif env.name == "unicycle_plane":
        states = _unicycle_waypoint_states(env, rng, n_waypoints, box)
    else:
        raise ShapeError(f"waypoint_dash is not defined for {env.name}")
    return ReferenceTrajectory(clip_id=clip_id, family="waypoint_dash", env=env,
                               states=states, params=params)


def _di_waypoint_states(env: EnvSpec, rng: np.random.Generator, n_waypoints: int,
                        box: float) -> np.ndarray:
    """Cycloidal-eased dashes whose segment durations adapt to actuator limits.

    The cycloidal profile u - sin(2 pi u)/(2 pi) has zero velocity AND zero
    acceleration at both segment ends, so the nominal action is continuous
    through the dwells.
    """
    T = env.horizon
    dt = env.dt
    a_max = 0.8 * env.params["accel_gain"]
    way = np.vstack([np.zeros(2), rng.uniform(-box, box, size=(n_waypoints, 2))])
    lengths = np.linalg.norm(np.diff(way, axis=0), axis=1)
    # cycloidal ease over n steps peaks at acceleration 2 pi L / (n dt)^2
    n_min = np.ceil(np.sqrt(2.0 * np.pi * lengths / a_max) / dt).astype(int) + 1
    dwell = 3
    budget = T - n_waypoints * dwell
    if n_min.sum() > budget:
        raise FeasibilityError(
            f"waypoints too far apart for the horizon (need {int(n_min.sum())} steps)")
    # distribute leftover steps proportionally to sqrt of segment length
    weights = np.sqrt(lengths) / max(np.sum(np.sqrt(lengths)), 1e-12)
    extra = budget - n_min.sum()
    n_move = n_min + np.floor(extra * weights).astype(int)
    positions = [np.zeros(2)]
    for k in range(n_waypoints):
        a, b = way[k], way[k + 1]
        for i in range(1, n_move[k] + 1):
            u = i / n_move[k]
            alpha = u - np.sin(2.0 * np.pi * u) / (2.0 * np.pi)
            positions.append(a + alpha * (b - a))
        positions.extend([b.copy()] * dwell)
    while len(positions) < T + 1:
        positions.append(way[-1].copy())
    positions = np.asarray(positions[:T + 1])
    return _states_from_positions(env, positions, np.zeros(2))


def _unicycle_waypoint_states(env: EnvSpec, rng: np.random.Generator,
                              n_waypoints: int, box: float) -> np.ndarray:
    """Scripted pursuit of successive waypoints, integrated through the dynamics."""
    from .envs import env_step

    T = env.horizon
    way = rng.uniform(-box, box, size=(n_waypoints, 2))
    states = np.empty((T + 1, 3))
    state = np.array([0.0, 0.0, float(np.arctan2(way[0, 1], way[0, 0]))])
    states[0] = state
    target = 0
    for t in range(T):
        goal = way[target]
        offset = goal - state[:2]
        dist = float(np.linalg.norm(offset))
        if dist < 0.25 and target < n_waypoints - 1:
            target += 1
            goal = way[target]
            offset = goal - state[:2]
            dist = float(np.linalg.norm(offset))
        desired = np.arctan2(offset[1], offset[0])
        err = np.arctan2(np.sin(desired - state[2]), np.cos(desired - state[2]))
        turn = float(np.clip(2.0 * err, -0.9, 0.9))
        speed = float(np.clip(1.2 * dist, 0.35, 0.85))
        state = env_step(env, state, np.array([speed, turn]))
        states[t + 1] = state
    return states


def swing_up(env: EnvSpec, clip_id: str, rise_fraction: float = 0.55,
             target_angle: float = np.pi, phase: float = 0.0) -> ReferenceTrajectory:
    """Pendulum: smooth rise from hanging to the target angle, then hold.

    phase shifts the start of the rise as a fraction of the horizon.
    """
    if env.name != "pendulum":
        raise ShapeError("swing_up is defined for the pendulum only")
    T = env.horizon
    t = np.arange(T + 1, dtype=np.float64) / T
    start = min(max(phase, 0.0), 0.25)
    rise_end = start + rise_fraction
    u = np.clip((t - start) / (rise_end - start), 0.0, 1.0)
    thetas = target_angle * 0.5 * (1.0 - np.cos(np.pi * u))
    states = _states_from_angles(env, thetas, 0.0)
    params = {"rise_fraction": rise_fraction, "target_angle": target_angle, "phase": phase}
    return ReferenceTrajectory(clip_id=clip_id, family="swing_up", env=env,
                               states=states, params=params)


def oscillation(env: EnvSpec, clip_id: str, amplitude: float = 2.2,
                period: float = 2.8, phase: float = 0.0,
                center: float = 0.0) -> ReferenceTrajectory:
    """Pendulum: sinusoidal angle oscillation; the limit-cycle family.

    center=0 swings about hanging; center=pi wobbles about the unstable
    upright equilibrium.
    """
    if env.name != "pendulum":
        raise ShapeError("oscillation is defined for the pendulum only")
    T = env.horizon
    t_grid = np.arange(T + 1) * env.dt
    w = 2.0 * np.pi / period
    thetas = center + amplitude * np.sin(w * t_grid + phase)
    omega0 = amplitude * w * np.cos(phase)
    states = _states_from_angles(env, thetas, omega0)
    params = {"amplitude": amplitude, "period": period, "phase": phase,
              "center": center}
    return ReferenceTrajectory(clip_id=clip_id, family="oscillation", env=env,
                               states=states, params=params)


GENERATORS = {
    "figure_eight": figure_eight,
    "waypoint_dash": waypoint_dash,
    "swing_up": swing_up,
    "oscillation": oscillation,
}


def make_clip(env: EnvSpec, family: str, clip_id: str, **params) -> ReferenceTrajectory:
    if family not in GENERATORS:
        raise ShapeError(f"unknown reference family {family!r}")
    return GENERATORS[family](env, clip_id, **params)


def sample_clip_library(env: EnvSpec, families: list[str], n_clips: int, seed: int,
                        id_prefix: str = "clip") -> list[ReferenceTrajectory]:
    """Sample n_clips feasible clips with randomized generator parameters."""
    rng = np.random.default_rng(seed)
    clips = []
    attempts = 0
    while len(clips) < n_clips and attempts < 50 * n_clips:
        attempts += 1
        family = families[len(clips) % len(families)]
        clip_id = f"{id_prefix}-{len(clips):03d}-{family}"
        try:
            if family == "figure_eight":
                period = float(rng.uniform(4.0, 6.5))
                cap = max_feasible_eight_amplitude(env, period)
                clip = figure_eight(
                    env, clip_id,
                    amplitude=float(rng.uniform(0.55, 0.95) * cap),
                    period=period,
                    phase=float(rng.uniform(0.0, 2.0 * np.pi)))
            elif family == "waypoint_dash":
                if env.name == "double_integrator_2d":
                    box = float(rng.uniform(0.55, 1.0)) * 0.12 * env.params["accel_gain"]
                else:
                    box = float(rng.uniform(0.8, 1.6))
                clip = waypoint_dash(env, clip_id, n_waypoints=int(rng.integers(2, 5)),
                                     box=box, seed=int(rng.integers(0, 2 ** 31)))
            elif family == "swing_up":
                clip = swing_up(env, clip_id,
                                rise_fraction=float(rng.uniform(0.45, 0.65)),
                                target_angle=float(rng.uniform(0.85, 1.0) * np.pi),
                                phase=float(rng.uniform(0.0, 0.2)))
            elif family == "oscillation":
                clip = oscillation(env, clip_id,
                                   amplitude=float(rng.uniform(1.6, 2.4)),
                                   period=float(rng.uniform(2.7, 3.4)),
                                   phase=float(rng.uniform(0.0, 2.0 * np.pi)))
            else:
                raise ShapeError(f"unknown reference family {family!r}")
        except FeasibilityError:
            continue
        clips.append(clip)
    if len(clips) < n_clips:
        raise FeasibilityError(
            f"could not sample {n_clips} feasible clips for {env.name}")
    return clips
