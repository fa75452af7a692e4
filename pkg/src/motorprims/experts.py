"""Analytically constructed feedback experts that track reference clips.

An expert is a time-indexed affine feedback controller: nominal actions come
from inverting the dynamics along the reference, and feedback gains from a
finite-horizon LQR backward Riccati recursion on the linearized dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import EnvSpec, RolloutNoiseConfig, env_linearize, rollout
from .errors import ValidationError
from .references import ReferenceTrajectory, reference_actions

STATE_COST = 1.0
ACTION_COST = 0.1
REPRODUCTION_TOL = 1e-9


@dataclass
class ExpertPolicy:
    """Time-indexed feedback controller around a nominal trajectory.

    gains[t] is the additive feedback matrix: the mean action at step t is
    clamp(nominal_actions[t] + gains[t] @ (state - reference.states[t])).
    """

    reference: ReferenceTrajectory
    nominal_actions: np.ndarray
    gains: np.ndarray
    clamp: bool = True

    @property
    def env(self) -> EnvSpec:
        return self.reference.env

    def mean_action(self, state: np.ndarray, t: int) -> np.ndarray:
        a = self.nominal_actions[t] + self.gains[t] @ (state - self.reference.states[t])
        if self.clamp:
            a = np.clip(a, -1.0, 1.0)
        return a

    def action_state_jacobian(self, state: np.ndarray, t: int) -> np.ndarray:
        """d mean_action / d state; constant in state for this affine expert."""
        return self.gains[t].copy()


def lqr_tracking_gains(env: EnvSpec, states: np.ndarray, actions: np.ndarray,
                       state_cost: float = STATE_COST,
                       action_cost: float = ACTION_COST) -> np.ndarray:
    """Finite-horizon LQR gains along a nominal (states, actions) trajectory.

    Minimizes sum_t [ds_{t+1}' Q ds_{t+1} + da_t' R da_t] with Q = state_cost*I
    and R = action_cost*I on the time-varying linearization. Returns the
    additive-convention gains (i.e. already negated).
    """
    T = actions.shape[0]
    d, m = env.state_dim, env.action_dim
    Q = state_cost * np.eye(d)
    R = action_cost * np.eye(m)
    gains = np.empty((T, m, d))
    P = np.zeros((d, d))
    for t in range(T - 1, -1, -1):
        A, B = env_linearize(env, states[t], actions[t])
        M = Q + P
        BtM = B.T @ M
        K = np.linalg.solve(R + BtM @ B, BtM @ A)
        gains[t] = -K
        P = A.T @ M @ (A - B @ K)
        P = 0.5 * (P + P.T)
    return gains


def build_expert(env: EnvSpec, reference: ReferenceTrajectory,
                 state_cost: float = STATE_COST,
                 action_cost: float = ACTION_COST) -> ExpertPolicy:
    """Construct the tracking expert and verify it reproduces its reference."""
    nominal = reference_actions(env, reference.states)
    gains = lqr_tracking_gains(env, reference.states, nominal, state_cost, action_cost)
    expert = ExpertPolicy(reference=reference, nominal_actions=nominal, gains=gains)
    traj = rollout(env, expert, RolloutNoiseConfig(0.0, seed=0), reference.states[0],
                   reference_states=reference.states)
    err = float(np.max(np.abs(traj.states - reference.states)))
    if err > REPRODUCTION_TOL:
        raise ValidationError(
            f"expert fails to reproduce reference (max state error {err:.3e})")
    return expert


def open_loop_policy(expert: ExpertPolicy):
    """Replays the expert's nominal actions, ignoring the state entirely."""

    def policy(state, t):
        return expert.nominal_actions[t].copy()

    return policy
