"""Motor-primitive reuse: a frozen decoder becomes the action space of a
high-level policy trained on a sparse go-to-target task.

The high-level policy emits a bounded latent z each step; the decoder turns
(z, state) into an actuator command. Training uses a likelihood-ratio policy
gradient with a per-timestep batch baseline (cross-entropy method available
as a fallback); the decoder parameters are never touched.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .envs import EnvSpec, env_step
from .errors import CompatibilityError, DomainError, TrainingError
from .nn import (
    MlpSpec,
    adam_init,
    adam_step,
    init_params,
    mlp_backward,
    mlp_forward,
    mlp_forward_cached,
)
from .npmp import NpmpModel, decode_mean

LATENT_BOUND = 3.0


@dataclass(frozen=True)
class GoToTargetTask:
    """Sparse-reward target pursuit: 1 per step within the capture radius;
    after dwell_steps consecutive captured steps the target respawns
    uniformly in the spawn box."""

    env: EnvSpec
    capture_radius: float = 0.2
    dwell_steps: int = 3
    spawn_box: float = 1.5
    episode_length: int = 200

    def __post_init__(self):
        if self.capture_radius <= 0.0:
            raise DomainError("capture radius must be positive")
        if self.env.name == "pendulum":
            raise CompatibilityError("go-to-target needs a planar environment")

    @property
    def observation_dim(self) -> int:
        return 2 + self.env.state_dim


@dataclass
class HighLevelPolicy:
    """Maps task observations to bounded latent actions, z = B*tanh(u)."""

    spec: MlpSpec
    params: np.ndarray
    output_scale: float = LATENT_BOUND

    def presquash(self, obs: np.ndarray) -> np.ndarray:
        return mlp_forward(self.spec, self.params, obs)

    def latent(self, obs: np.ndarray) -> np.ndarray:
        return self.output_scale * np.tanh(self.presquash(obs))


@dataclass
class ReuseConfig:
    optimizer: str = "policy_gradient"  # or "cross_entropy_method"
    iterations: int = 150
    episodes_per_iteration: int = 16
    hidden_dims: tuple[int, ...] = (32, 32)
    learning_rate: float = 3e-3
    explore_std: float = 0.5
    discount: float = 0.99
    seed: int = 0
    # cross-entropy method settings
    population: int = 24
    elite_fraction: float = 0.25
    init_param_std: float = 0.5

    def __post_init__(self):
        if self.optimizer not in ("policy_gradient", "cross_entropy_method"):
            raise DomainError(f"unknown optimizer {self.optimizer!r}")


def decoder_checksum(model: NpmpModel) -> str:
    return hashlib.sha256(model.decoder_params.tobytes()).hexdigest()


def init_hl_policy(model: NpmpModel, task: GoToTargetTask,
                   seed: int = 0) -> HighLevelPolicy:
    spec = MlpSpec(input_dim=task.observation_dim, hidden_dims=(32, 32),
                   output_dim=model.prior.latent_dim, activation="elu",
                   output_activation="linear")
    rng = np.random.default_rng(seed)
    return HighLevelPolicy(spec=spec, params=init_params(spec, rng))


def task_observation(task: GoToTargetTask, state: np.ndarray,
                     target: np.ndarray) -> np.ndarray:
    return np.concatenate([target - state[:2], state])


def reuse_step(model: NpmpModel, hl: HighLevelPolicy, task: GoToTargetTask,
               state: np.ndarray, target: np.ndarray,
               presquash_noise: np.ndarray | None = None):
    """One step of the composed system: latent from the HL policy, action from
    the frozen decoder, env step, sparse reward."""
    obs = task_observation(task, state, target)
    if obs.shape != (task.observation_dim,):
        raise CompatibilityError("observation dimension mismatch")
    u = hl.presquash(obs)
    if presquash_noise is not None:
        u = u + presquash_noise
    z = hl.output_scale * np.tanh(u)
    action = decode_mean(model, z, state)
    next_state = env_step(task.env, state, action)
    reward = 1.0 if np.linalg.norm(next_state[:2] - target) < task.capture_radius else 0.0
    return z, action, next_state, reward


def run_episode(model: NpmpModel, hl: HighLevelPolicy, task: GoToTargetTask,
                rng: np.random.Generator, explore_std: float = 0.0,
                record: bool = False):
    """One episode; returns the total reward and, when recording, the per-step
    observations, pre-squash samples, means, and rewards for the gradient."""
    state = np.zeros(task.env.state_dim)
    target = rng.uniform(-task.spawn_box, task.spawn_box, size=2)
    dwell = 0
    total = 0.0
    obs_list, u_list, mean_list, rewards = [], [], [], []
    for _ in range(task.episode_length):
        obs = task_observation(task, state, target)
        mean_u = hl.presquash(obs)
        noise = rng.normal(size=mean_u.shape) * explore_std if explore_std > 0 else None
        u = mean_u + noise if noise is not None else mean_u
        z = hl.output_scale * np.tanh(u)
        action = decode_mean(model, z, state)
        state = env_step(task.env, state, action)
        captured = np.linalg.norm(state[:2] - target) < task.capture_radius
        reward = 1.0 if captured else 0.0
        total += reward
        if record:
            obs_list.append(obs)
            u_list.append(u)
            mean_list.append(mean_u)
            rewards.append(reward)
        if captured:
            dwell += 1
            if dwell >= task.dwell_steps:
                target = rng.uniform(-task.spawn_box, task.spawn_box, size=2)
                dwell = 0
        else:
            dwell = 0
    if record:
        return total, (np.asarray(obs_list), np.asarray(u_list),
                       np.asarray(mean_list), np.asarray(rewards))
    return total, None


def _reward_to_go(rewards: np.ndarray, discount: float) -> np.ndarray:
    out = np.empty_like(rewards)
    acc = 0.0
    for t in range(rewards.size - 1, -1, -1):
        acc = rewards[t] + discount * acc
        out[t] = acc
    return out


def train_hl(model: NpmpModel, task: GoToTargetTask, config: ReuseConfig,
             ) -> tuple[HighLevelPolicy, dict]:
    """Optimize expected episode return with the configured method.

    Returns the trained policy plus a per-iteration mean-return curve. The
    decoder is read-only throughout; a checksum guards against accidents.
    """
    if model.state_dim != task.env.state_dim:
        raise CompatibilityError("model and task environment disagree on state dim")
    checksum = decoder_checksum(model)
    if config.optimizer == "policy_gradient":
        hl, curve = _train_policy_gradient(model, task, config)
    else:
        hl, curve = _train_cem(model, task, config)
    if decoder_checksum(model) != checksum:
        raise TrainingError("decoder parameters changed during reuse training")
    return hl, {"return_curve": np.asarray(curve), "optimizer": config.optimizer}


def _train_policy_gradient(model, task, config):
    hl = init_hl_policy(model, task, seed=config.seed)
    rng = np.random.default_rng(config.seed + 1)
    adam = adam_init(hl.spec.n_params, learning_rate=config.learning_rate)
    params = hl.params
    curve = []
    sigma2 = max(config.explore_std, 1e-6) ** 2
    for it in range(config.iterations):
        work = HighLevelPolicy(spec=hl.spec, params=params,
                               output_scale=hl.output_scale)
        episodes = []
        returns = []
        for _ in range(config.episodes_per_iteration):
            total, data = run_episode(model, work, task, rng,
                                      explore_std=config.explore_std, record=True)
            episodes.append(data)
            returns.append(total)
        curve.append(float(np.mean(returns)))
        if not np.isfinite(curve[-1]):
            raise TrainingError(f"reuse training diverged at iteration {it}",
                                step=it)
        togo = np.stack([_reward_to_go(ep[3], config.discount) for ep in episodes])
        baseline = togo.mean(axis=0, keepdims=True)
        adv = togo - baseline
        std = adv.std()
        if std > 1e-8:
            adv = adv / std
        all_obs = np.concatenate([ep[0] for ep in episodes])
        all_u = np.concatenate([ep[1] for ep in episodes])
        all_mean = np.concatenate([ep[2] for ep in episodes])
        flat_adv = adv.reshape(-1)
        # d log N(u; mean, sigma) / d mean = (u - mean)/sigma^2; ascend
        cot = (flat_adv[:, None] * (all_u - all_mean) / sigma2
               / all_obs.shape[0])
        _, cache = mlp_forward_cached(hl.spec, params, all_obs)
        grad, _ = mlp_backward(hl.spec, params, cache, -cot)
        adam, params = adam_step(adam, params, grad)
    return HighLevelPolicy(spec=hl.spec, params=params,
                           output_scale=hl.output_scale), curve


def _train_cem(model, task, config):
    hl = init_hl_policy(model, task, seed=config.seed)
    rng = np.random.default_rng(config.seed + 1)
    mean = hl.params.copy()
    std = np.full_like(mean, config.init_param_std)
    n_elite = max(1, int(config.population * config.elite_fraction))
    curve = []
    for _ in range(config.iterations):
        pop = mean + std * rng.normal(size=(config.population, mean.size))
        scores = np.empty(config.population)
        for i in range(config.population):
            cand = HighLevelPolicy(spec=hl.spec, params=pop[i],
                                   output_scale=hl.output_scale)
            rets = [run_episode(model, cand, task, rng)[0]
                    for _ in range(max(1, config.episodes_per_iteration // 4))]
            scores[i] = np.mean(rets)
        elite = pop[np.argsort(scores)[::-1][:n_elite]]
        mean = elite.mean(axis=0)
        std = elite.std(axis=0) + 1e-3
        curve.append(float(scores.max()))
    return HighLevelPolicy(spec=hl.spec, params=mean,
                           output_scale=hl.output_scale), curve


def evaluate_reuse(model: NpmpModel, hl: HighLevelPolicy, task: GoToTargetTask,
                   episodes: int = 5, seeds: tuple[int, ...] = tuple(range(10)),
                   ) -> dict:
    """Deterministic per-seed mean returns plus median and quartiles."""
    per_seed = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        rets = [run_episode(model, hl, task, rng)[0] for _ in range(episodes)]
        per_seed.append(float(np.mean(rets)))
    per_seed_arr = np.asarray(per_seed)
    return {
        "per_seed": per_seed_arr,
        "median": float(np.median(per_seed_arr)),
        "q25": float(np.quantile(per_seed_arr, 0.25)),
        "q75": float(np.quantile(per_seed_arr, 0.75)),
    }
