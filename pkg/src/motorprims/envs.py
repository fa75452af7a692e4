"""Toy deterministic control environments with analytic dynamics.

All environments step with semi-implicit Euler (velocity-like coordinates
update first, position-like coordinates use the new velocities), which makes
the dynamics exactly invertible along a state sequence. Actions are
normalized to [-1, 1] per dimension.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericError, ShapeError

REWARD_WIDTH = 0.5  # Gaussian tracking reward width, normalized state units

_ENV_DIMS = {
    "double_integrator_2d": (4, 2),
    "pendulum": (2, 1),
    "unicycle_plane": (3, 2),
}

_ENV_DEFAULT_PARAMS = {
    "double_integrator_2d": {"accel_gain": 1.0},
    "pendulum": {"gravity": 5.0, "damping": 0.1, "torque_gain": 8.0},
    "unicycle_plane": {"speed_gain": 1.5, "turn_gain": 4.0},
}


@dataclass(frozen=True)
class EnvSpec:
    """Environment identity plus integration and episode settings."""

    name: str
    dt: float = 0.05
    horizon: int = 100
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in _ENV_DIMS:
            raise ShapeError(f"unknown environment {self.name!r}")
        if not self.dt > 0.0:
            raise DomainError("dt must be positive")
        if self.horizon < 2:
            raise DomainError("horizon must be >= 2")
        merged = dict(_ENV_DEFAULT_PARAMS[self.name])
        merged.update(self.params)
        object.__setattr__(self, "params", merged)

    @property
    def state_dim(self) -> int:
        return _ENV_DIMS[self.name][0]

    @property
    def action_dim(self) -> int:
        return _ENV_DIMS[self.name][1]

    @property
    def action_low(self) -> np.ndarray:
        return -np.ones(self.action_dim)

    @property
    def action_high(self) -> np.ndarray:
        return np.ones(self.action_dim)


@dataclass(frozen=True)
class RolloutNoiseConfig:
    """I.i.d. per-actuator Gaussian action noise applied during rollout."""

    action_noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.action_noise_std < 0.0:
            raise DomainError("action noise std must be nonnegative")


@dataclass
class Trajectory:
    """One episode: states, executed and logged-mean actions, rewards.

    states has one more row than the actions; per_step_rewards[t] scores
    states[t + 1] against the reference it was rolled out against.
    """

    states: np.ndarray
    executed_actions: np.ndarray
    logged_mean_actions: np.ndarray
    per_step_rewards: np.ndarray


def _check_state(spec: EnvSpec, state: np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (spec.state_dim,):
        raise ShapeError(f"state shape {state.shape} != ({spec.state_dim},)")
    if not np.all(np.isfinite(state)):
        raise NumericError("state contains NaN or Inf")
    return state


def _check_action(spec: EnvSpec, action: np.ndarray) -> np.ndarray:
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (spec.action_dim,):
        raise ShapeError(f"action shape {action.shape} != ({spec.action_dim},)")
    if not np.all(np.isfinite(action)):
        raise NumericError("action contains NaN or Inf")
    return np.clip(action, -1.0, 1.0)


def env_step(spec: EnvSpec, state: np.ndarray, action: np.ndarray) -> np.ndarray:
    """One semi-implicit Euler step; actions are clamped to [-1, 1]."""
    s = _check_state(spec, state)
    a = _check_action(spec, action)
    dt = spec.dt
    p = spec.params
    if spec.name == "double_integrator_2d":
        v_next = s[2:] + dt * p["accel_gain"] * a
        pos_next = s[:2] + dt * v_next
        return np.concatenate([pos_next, v_next])
    if spec.name == "pendulum":
        theta, omega = s
        omega_next = omega + dt * (-p["gravity"] * np.sin(theta)
                                   - p["damping"] * omega
                                   + p["torque_gain"] * a[0])
        theta_next = theta + dt * omega_next
        return np.array([theta_next, omega_next])
    # unicycle_plane
    theta_next = s[2] + dt * p["turn_gain"] * a[1]
    speed = p["speed_gain"] * a[0]
    x_next = s[0] + dt * speed * np.cos(theta_next)
    y_next = s[1] + dt * speed * np.sin(theta_next)
    return np.array([x_next, y_next, theta_next])


def env_linearize(spec: EnvSpec, state: np.ndarray,
                  action: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Analytic Jacobians (A, B) of env_step at (state, action)."""
    s = _check_state(spec, state)
    a = _check_action(spec, action)
    dt = spec.dt
    p = spec.params
    if spec.name == "double_integrator_2d":
        g = p["accel_gain"]
        A = np.eye(4)
        A[0, 2] = dt
        A[1, 3] = dt
        B = np.zeros((4, 2))
        B[0, 0] = dt * dt * g
        B[1, 1] = dt * dt * g
        B[2, 0] = dt * g
        B[3, 1] = dt * g
        return A, B
    if spec.name == "pendulum":
        theta = s[0]
        g, c, tau = p["gravity"], p["damping"], p["torque_gain"]
        dw_dtheta = -dt * g * np.cos(theta)
        dw_domega = 1.0 - dt * c
        A = np.array([[1.0 + dt * dw_dtheta, dt * dw_domega],
                      [dw_dtheta, dw_domega]])
        B = np.array([[dt * dt * tau], [dt * tau]])
        return A, B
    # unicycle_plane
    sp, tu = p["speed_gain"], p["turn_gain"]
    theta_next = s[2] + dt * tu * a[1]
    speed = sp * a[0]
    ct, st = np.cos(theta_next), np.sin(theta_next)
    A = np.eye(3)
    A[0, 2] = -dt * speed * st
    A[1, 2] = dt * speed * ct
    B = np.array([
        [dt * sp * ct, -dt * speed * st * dt * tu],
        [dt * sp * st, dt * speed * ct * dt * tu],
        [0.0, dt * tu],
    ])
    return A, B


def env_invert(spec: EnvSpec, state: np.ndarray,
               next_state: np.ndarray) -> tuple[np.ndarray, float]:
    """Recover the action taking state to next_state, plus a consistency residual.

    The residual measures how far the transition is from the reachable
    manifold of the semi-implicit step map; the action is not clamped so
    callers can check bounds.
    """
    s = _check_state(spec, state)
    sn = _check_state(spec, next_state)
    dt = spec.dt
    p = spec.params
    if spec.name == "double_integrator_2d":
        v_next = sn[2:]
        action = (v_next - s[2:]) / (dt * p["accel_gain"])
        residual = float(np.max(np.abs(sn[:2] - (s[:2] + dt * v_next))))
        return action, residual
    if spec.name == "pendulum":
        theta, omega = s
        omega_next = sn[1]
        u = ((omega_next - omega) / dt + p["gravity"] * np.sin(theta)
             + p["damping"] * omega) / p["torque_gain"]
        residual = float(abs(sn[0] - (theta + dt * omega_next)))
        return np.array([u]), residual
    # unicycle_plane
    w = (sn[2] - s[2]) / (dt * p["turn_gain"])
    heading = np.array([np.cos(sn[2]), np.sin(sn[2])])
    disp = sn[:2] - s[:2]
    v = float(disp @ heading) / (dt * p["speed_gain"])
    residual = float(np.max(np.abs(disp - dt * p["speed_gain"] * v * heading)))
    return np.array([v, w]), residual


def _policy_fn(policy):
    """Accept either a callable (state, t) -> action or an object with mean_action."""
    if callable(policy):
        return policy
    if hasattr(policy, "mean_action"):
        return policy.mean_action
    raise ShapeError(f"cannot interpret {type(policy).__name__} as a policy")


def rollout(spec: EnvSpec, policy, noise: RolloutNoiseConfig, start_state: np.ndarray,
            reference_states: np.ndarray | None = None) -> Trajectory:
    """Execute a policy for spec.horizon steps with Gaussian action noise.

    Noise draws are generated once upfront from the config seed, so identical
    inputs give bitwise identical trajectories. If reference_states is given
    (shape (horizon + 1, state_dim)), per-step tracking rewards are recorded.
    """
    fn = _policy_fn(policy)
    T = spec.horizon
    state = _check_state(spec, start_state)
    rng = np.random.default_rng(noise.seed)
    draws = rng.normal(size=(T, spec.action_dim)) * noise.action_noise_std

    states = np.empty((T + 1, spec.state_dim))
    executed = np.empty((T, spec.action_dim))
    means = np.empty((T, spec.action_dim))
    rewards = np.zeros(T)
    states[0] = state
    for t in range(T):
        mean = np.asarray(fn(states[t], t), dtype=np.float64)
        if mean.shape != (spec.action_dim,):
            raise ShapeError(f"policy returned action shape {mean.shape}")
        act = np.clip(mean + draws[t], -1.0, 1.0)
        means[t] = mean
        executed[t] = act
        states[t + 1] = env_step(spec, states[t], act)
        if reference_states is not None:
            rewards[t] = tracking_reward(states[t + 1], reference_states[t + 1])
    return Trajectory(states=states, executed_actions=executed,
                      logged_mean_actions=means, per_step_rewards=rewards)


def tracking_reward(state: np.ndarray, reference_state: np.ndarray,
                    width: float = REWARD_WIDTH) -> float:
    """exp(-||state - reference||^2 / (2 width^2)), in (0, 1]."""
    if width <= 0.0:
        raise DomainError("reward width must be positive")
    state = np.asarray(state, dtype=np.float64)
    reference_state = np.asarray(reference_state, dtype=np.float64)
    if state.shape != reference_state.shape:
        raise ShapeError("state and reference_state must have the same shape")
    d2 = float(np.sum((state - reference_state) ** 2))
    return float(np.exp(-d2 / (2.0 * width * width)))


def episode_return(trajectory: Trajectory, reference_states: np.ndarray,
                   width: float = REWARD_WIDTH) -> float:
    """Mean tracking reward of states[1:] against reference_states[1:]."""
    states = trajectory.states
    reference_states = np.asarray(reference_states, dtype=np.float64)
    if reference_states.shape != states.shape:
        raise ShapeError(f"reference shape {reference_states.shape} != states {states.shape}")
    rewards = [tracking_reward(states[t], reference_states[t], width)
               for t in range(1, states.shape[0])]
    return float(np.mean(rewards))


def relative_performance(candidate_return: float, expert_return: float) -> float:
    """Candidate return divided by expert return; may exceed 1.0 by chance."""
    if not expert_return > 0.0:
        raise DomainError("expert return must be positive")
    return candidate_return / expert_return
