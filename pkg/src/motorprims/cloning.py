"""Offline policy transfer: behavioral cloning from noisy rollouts and
linear feedback policy cloning (LFPC) from a single nominal trajectory.

BC regresses student actions onto expert mean actions logged at noisy-rollout
states. LFPC records the expert's action-state Jacobians along one noiseless
rollout and regresses the student onto the induced linear feedback targets at
perturbed nominal states. The blind variant drops the feedback correction and
exists as a negative control.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .envs import EnvSpec, RolloutNoiseConfig, Trajectory, rollout
from .errors import DomainError, ShapeError, TrainingError, ValidationError
from .nn import (
    MlpSpec,
    adam_init,
    adam_step,
    init_params,
    mlp_backward,
    mlp_forward,
    mlp_forward_cached,
    mlp_input_jacobian,
)

PERTURBATION_STD_FLOOR = 1e-3
JACOBIAN_CHECK_TOL = 1e-4


@dataclass
class CloningDataset:
    """Logged (state, expert-mean-action) pairs from noisy rollouts."""

    states: np.ndarray
    targets: np.ndarray
    phases: np.ndarray
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.states.shape[0] != self.targets.shape[0] or self.states.shape[0] == 0:
            raise ShapeError("dataset must be nonempty with aligned states/targets")
        if self.phases.shape[0] != self.states.shape[0]:
            raise ShapeError("phases must align with states")

    def __len__(self) -> int:
        return self.states.shape[0]


@dataclass
class NominalTrace:
    """States, mean actions, and action-state Jacobians of one noiseless rollout.

    states[t] is the state at which actions[t] was taken; final_state closes
    the sequence so lookahead windows can be built from the trace.
    """

    states: np.ndarray
    actions: np.ndarray
    jacobians: np.ndarray
    final_state: np.ndarray

    def __post_init__(self):
        T, d = self.states.shape
        m = self.actions.shape[1]
        if self.actions.shape[0] != T or self.jacobians.shape != (T, m, d):
            raise ShapeError("trace arrays are inconsistent")

    @property
    def horizon(self) -> int:
        return self.states.shape[0]

    @property
    def full_states(self) -> np.ndarray:
        return np.vstack([self.states, self.final_state[None, :]])


@dataclass(frozen=True)
class PerturbationModel:
    """Diagonal Gaussian state-perturbation distribution (the stand-in for
    the stationary transition noise induced by noisy actions)."""

    stds: np.ndarray
    kind: str = "diagonal_gaussian"

    def __post_init__(self):
        stds = np.asarray(self.stds, dtype=np.float64)
        if not np.all(stds > 0.0):
            raise DomainError("perturbation stds must be positive")
        object.__setattr__(self, "stds", stds)

    def sample(self, rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
        return rng.normal(size=(*shape, self.stds.size)) * self.stds

    def scaled(self, factor: float) -> "PerturbationModel":
        return PerturbationModel(stds=self.stds * factor, kind=self.kind)


@dataclass
class StudentPolicy:
    """MLP policy; optionally receives normalized time phase as an extra input."""

    spec: MlpSpec
    params: np.ndarray
    time_indexed: bool
    horizon: int

    def _input(self, state: np.ndarray, t: int) -> np.ndarray:
        if self.time_indexed:
            return np.concatenate([state, [t / self.horizon]])
        return np.asarray(state, dtype=np.float64)

    def mean_action(self, state: np.ndarray, t: int) -> np.ndarray:
        return mlp_forward(self.spec, self.params, self._input(state, t))

    def action_state_jacobian(self, state: np.ndarray, t: int) -> np.ndarray:
        jac = mlp_input_jacobian(self.spec, self.params, self._input(state, t))
        state_dim = jac.shape[1] - (1 if self.time_indexed else 0)
        return jac[:, :state_dim]


def student_inputs(student: StudentPolicy, states: np.ndarray,
                   phases: np.ndarray) -> np.ndarray:
    if student.time_indexed:
        return np.hstack([states, phases[:, None]])
    return states


def collect_bc_dataset(expert, eta: float, n_rollouts: int, seed: int) -> CloningDataset:
    """Noisy rollouts of the expert, logging mean actions (DART-style)."""
    if n_rollouts < 1:
        raise DomainError("n_rollouts must be >= 1")
    env: EnvSpec = expert.env
    reference = expert.reference
    master = np.random.default_rng(seed)
    states, targets, phases = [], [], []
    T = env.horizon
    for _ in range(n_rollouts):
        rollout_seed = int(master.integers(0, 2 ** 62))
        traj = rollout(env, expert, RolloutNoiseConfig(eta, rollout_seed),
                       reference.states[0], reference_states=reference.states)
        states.append(traj.states[:-1])
        targets.append(traj.logged_mean_actions)
        phases.append(np.arange(T) / T)
    return CloningDataset(
        states=np.vstack(states),
        targets=np.vstack(targets),
        phases=np.concatenate(phases),
        source={"clip_id": reference.clip_id, "eta": eta, "n_rollouts": n_rollouts,
                "seed": seed, "horizon": T},
    )


def record_nominal_trace(expert, env: EnvSpec | None = None,
                         start_state: np.ndarray | None = None,
                         validate: bool = True, check_seed: int = 0) -> NominalTrace:
    """One noiseless rollout with per-step action-state Jacobians.

    Jacobians come from the expert's own analytic accessor and are spot
    checked against central finite differences.
    """
    if env is None:
        env = expert.env
    if start_state is None:
        start_state = expert.reference.states[0]
    traj = rollout(env, expert, RolloutNoiseConfig(0.0, 0), start_state)
    T = env.horizon
    jacobians = np.empty((T, env.action_dim, env.state_dim))
    for t in range(T):
        jacobians[t] = expert.action_state_jacobian(traj.states[t], t)
    trace = NominalTrace(states=traj.states[:-1], actions=traj.logged_mean_actions,
                         jacobians=jacobians, final_state=traj.states[-1])
    if validate:
        _validate_jacobians(expert, trace, check_seed)
    return trace


def _validate_jacobians(expert, trace: NominalTrace, seed: int, n_checks: int = 5,
                        step: float = 1e-5) -> None:
    rng = np.random.default_rng(seed)
    T, m, d = trace.jacobians.shape
    ts = rng.choice(T, size=min(n_checks, T), replace=False)
    for t in ts:
        numeric = np.empty((m, d))
        for j in range(d):
            e = np.zeros(d)
            e[j] = step
            hi = expert.mean_action(trace.states[t] + e, int(t))
            lo = expert.mean_action(trace.states[t] - e, int(t))
            numeric[:, j] = (hi - lo) / (2.0 * step)
        scale = max(np.max(np.abs(numeric)), np.max(np.abs(trace.jacobians[t])), 1e-8)
        err = np.max(np.abs(numeric - trace.jacobians[t])) / scale
        if err > JACOBIAN_CHECK_TOL:
            raise ValidationError(
                f"trace Jacobian at step {int(t)} disagrees with finite differences "
                f"(relative error {err:.2e})")


def feedback_action(trace: NominalTrace, t: int, state: np.ndarray,
                    clamp: bool = True) -> np.ndarray:
    """Linear-feedback-stabilized action: a*_t + J*_t (state - s*_t)."""
    if not 0 <= t < trace.horizon:
        raise IndexError(f"trace index {t} out of range [0, {trace.horizon})")
    a = trace.actions[t] + trace.jacobians[t] @ (np.asarray(state) - trace.states[t])
    if clamp:
        a = np.clip(a, -1.0, 1.0)
    return a


def feedback_policy(trace: NominalTrace):
    """The trace's feedback controller as a rollout-compatible policy."""

    def policy(state, t):
        return feedback_action(trace, t, state)

    return policy


def estimate_perturbation_model(trajectories: list[Trajectory],
                                nominal: NominalTrace) -> PerturbationModel:
    """Per-dimension std of time-aligned deviations from the nominal states."""
    if not trajectories:
        raise DomainError("need at least one trajectory")
    T = nominal.horizon
    deviations = [traj.states[:T] - nominal.states for traj in trajectories]
    pooled = np.vstack(deviations)
    stds = pooled.std(axis=0)
    return PerturbationModel(stds=np.maximum(stds, PERTURBATION_STD_FLOOR))


def bc_loss(student: StudentPolicy, states: np.ndarray, targets: np.ndarray,
            phases: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over batch and action coordinates, with gradient."""
    if states.shape[0] == 0:
        raise ShapeError("empty batch")
    inputs = student_inputs(student, states, phases)
    pred, cache = mlp_forward_cached(student.spec, student.params, inputs)
    diff = pred - targets
    loss = float(np.mean(diff * diff))
    dout = 2.0 * diff / diff.size
    grad, _ = mlp_backward(student.spec, student.params, cache, dout)
    return loss, grad


def bc_loss_on_dataset(student: StudentPolicy, dataset: CloningDataset,
                       indices: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    if indices is None:
        indices = np.arange(len(dataset))
    return bc_loss(student, dataset.states[indices], dataset.targets[indices],
                   dataset.phases[indices])


def lfpc_pairs(trace: NominalTrace, delta: PerturbationModel,
               perturbations_per_state: int, rng: np.random.Generator,
               indices: np.ndarray | None = None, blind: bool = False):
    """Materialize perturbed states and their feedback (or blind) targets.

    Targets are computed pre-clamp: supervising against clamped targets would
    flatten gradients at saturation.
    """
    if perturbations_per_state < 1:
        raise DomainError("perturbations_per_state must be >= 1")
    if indices is None:
        indices = np.arange(trace.horizon)
    k = perturbations_per_state
    base_states = trace.states[indices]
    base_actions = trace.actions[indices]
    jac = trace.jacobians[indices]
    deltas = delta.sample(rng, (k, indices.size))
    states = base_states[None, :, :] + deltas
    if blind:
        targets = np.broadcast_to(base_actions[None, :, :], (k, *base_actions.shape))
    else:
        targets = base_actions[None, :, :] + np.einsum("tmd,ktd->ktm", jac, deltas)
    phases = np.broadcast_to(indices / trace.horizon, (k, indices.size))
    d = states.shape[-1]
    m = targets.shape[-1]
    return (states.reshape(-1, d), np.ascontiguousarray(targets).reshape(-1, m),
            np.ascontiguousarray(phases).reshape(-1))


def _sample_subsequence_indices(rng: np.random.Generator, horizon: int,
                                count: int, length: int) -> np.ndarray:
    # wrap around the trace end so every step gets equal coverage; the LFPC
    # objective is per-state, so window contiguity carries no semantics
    length = min(length, horizon)
    starts = rng.integers(0, horizon, size=count)
    return (starts[:, None] + np.arange(length)[None, :]).reshape(-1) % horizon


def lfpc_loss(student: StudentPolicy, trace: NominalTrace, delta: PerturbationModel,
              perturbations_per_state: int, rng: np.random.Generator,
              subsequence_count: int | None = None,
              subsequence_length: int | None = None,
              blind: bool = False) -> tuple[float, np.ndarray]:
    """LFPC objective: match feedback targets at perturbed nominal states.

    With no subsequence arguments the loss covers every trace state; training
    passes a sampled-subsequence batch shape instead.
    """
    if subsequence_count is not None:
        indices = _sample_subsequence_indices(
            rng, trace.horizon, subsequence_count,
            subsequence_length or trace.horizon)
    else:
        indices = None
    states, targets, phases = lfpc_pairs(trace, delta, perturbations_per_state,
                                         rng, indices, blind=blind)
    return bc_loss(student, states, targets, phases)


def blind_loss(student: StudentPolicy, trace: NominalTrace, delta: PerturbationModel,
               perturbations_per_state: int, rng: np.random.Generator,
               subsequence_count: int | None = None,
               subsequence_length: int | None = None) -> tuple[float, np.ndarray]:
    """Negative control: perturbed inputs regressed onto uncorrected actions."""
    return lfpc_loss(student, trace, delta, perturbations_per_state, rng,
                     subsequence_count, subsequence_length, blind=True)


BC_DEFAULT_STEPS = 20000
LFPC_DEFAULT_STEPS = 4000


@dataclass
class StudentTrainingConfig:
    """steps=None resolves per loss kind: 20k for bc (batch 256 pairs), 4k for
    lfpc/blind (whose per-step batch is the full subsequence shape)."""

    hidden_dims: tuple[int, ...] = (64, 64)
    activation: str = "elu"
    output_activation: str = "tanh"
    time_indexed: bool = True
    steps: int | None = None
    batch_size: int = 256
    learning_rate: float = 1e-3
    lr_decay: str = "cosine"  # "cosine" or "none"
    final_lr_fraction: float = 0.05
    seed: int = 0
    subsequence_count: int = 32
    subsequence_length: int = 30
    perturbations_per_state: int = 5

    def resolved_steps(self, loss_kind: str) -> int:
        if self.steps is not None:
            return self.steps
        return BC_DEFAULT_STEPS if loss_kind == "bc" else LFPC_DEFAULT_STEPS


def lr_schedule(base: float, step: int, total: int, decay: str = "cosine",
                floor: float = 0.05) -> float:
    """Per-step learning rate under the configured decay."""
    if decay == "none" or total <= 1:
        return base
    frac = step / max(total - 1, 1)
    return base * (floor + (1.0 - floor) * 0.5 * (1.0 + np.cos(np.pi * frac)))


LOSS_KINDS = ("bc", "lfpc", "blind")


def init_student(state_dim: int, action_dim: int, horizon: int,
                 config: StudentTrainingConfig) -> StudentPolicy:
    input_dim = state_dim + (1 if config.time_indexed else 0)
    spec = MlpSpec(input_dim=input_dim, hidden_dims=config.hidden_dims,
                   output_dim=action_dim, activation=config.activation,
                   output_activation=config.output_activation)
    rng = np.random.default_rng(config.seed)
    return StudentPolicy(spec=spec, params=init_params(spec, rng),
                         time_indexed=config.time_indexed, horizon=horizon)


def train_student(loss_kind: str, config: StudentTrainingConfig,
                  dataset: CloningDataset | None = None,
                  trace: NominalTrace | None = None,
                  delta: PerturbationModel | None = None,
                  horizon: int | None = None) -> tuple[StudentPolicy, dict]:
    """Adam-driven minimization of the chosen cloning objective."""
    if loss_kind not in LOSS_KINDS:
        raise DomainError(f"loss_kind must be one of {LOSS_KINDS}")
    if loss_kind == "bc":
        if dataset is None:
            raise DomainError("bc training requires a dataset")
        state_dim = dataset.states.shape[1]
        action_dim = dataset.targets.shape[1]
        if horizon is None:
            horizon = dataset.source.get("horizon")
        if horizon is None:
            raise DomainError("bc training requires the episode horizon")
    else:
        if trace is None or delta is None:
            raise DomainError(f"{loss_kind} training requires a trace and a "
                              "perturbation model")
        state_dim = trace.states.shape[1]
        action_dim = trace.actions.shape[1]
        horizon = trace.horizon
    student = init_student(state_dim, action_dim, horizon, config)
    rng = np.random.default_rng(config.seed + 1)
    adam = adam_init(student.spec.n_params, learning_rate=config.learning_rate)
    params = student.params
    n_steps = config.resolved_steps(loss_kind)
    curve = []
    for step in range(n_steps):
        work = StudentPolicy(spec=student.spec, params=params,
                             time_indexed=student.time_indexed, horizon=horizon)
        if loss_kind == "bc":
            idx = rng.integers(0, len(dataset), size=min(config.batch_size, len(dataset)))
            loss, grad = bc_loss_on_dataset(work, dataset, idx)
        else:
            loss, grad = lfpc_loss(
                work, trace, delta, config.perturbations_per_state, rng,
                subsequence_count=config.subsequence_count,
                subsequence_length=config.subsequence_length,
                blind=(loss_kind == "blind"))
        if not np.isfinite(loss):
            raise TrainingError(f"{loss_kind} loss diverged at step {step}", step=step)
        curve.append(loss)
        adam.learning_rate = lr_schedule(config.learning_rate, step, n_steps,
                                         config.lr_decay, config.final_lr_fraction)
        adam, params = adam_step(adam, params, grad)
    student = StudentPolicy(spec=student.spec, params=params,
                            time_indexed=student.time_indexed, horizon=horizon)
    metrics = {"loss_curve": np.asarray(curve), "loss_kind": loss_kind,
               "steps": n_steps}
    return student, metrics
