"""One-shot imitation, direct latent optimization, latent concatenation,
PCA projection, and report export.

One-shot imitation encodes a reference clip once (posterior means by
default), then rolls out closed-loop in state while replaying the frozen
latent sequence; that the rollout never touches the encoder is part of the
contract.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .envs import EnvSpec, RolloutNoiseConfig, episode_return, relative_performance, rollout
from .errors import CompatibilityError, DomainError, NumericError, ShapeError
from .experts import build_expert
from .npmp import NpmpModel, build_lookaheads, decode_mean, encode_step
from .nn import mlp_backward, mlp_forward_cached
from .references import ReferenceTrajectory


@dataclass
class LatentSequence:
    """Time-indexed latent vectors conditioning a rollout."""

    latents: np.ndarray
    provenance: str

    def __post_init__(self):
        latents = np.asarray(self.latents, dtype=np.float64)
        if latents.ndim != 2:
            raise ShapeError("latents must be a (T, latent_dim) array")
        if not np.all(np.isfinite(latents)):
            raise NumericError("latent sequence contains NaN/Inf")
        object.__setattr__(self, "latents", latents)

    def __len__(self) -> int:
        return self.latents.shape[0]


@dataclass
class ImitationResult:
    clip_id: str
    provenance: str
    per_step_rewards: np.ndarray
    episode_return: float
    relative_performance: float
    split: str


def encode_sequence(model: NpmpModel, reference_states: np.ndarray,
                    sample: bool = False,
                    rng: np.random.Generator | None = None) -> LatentSequence:
    """Encode a state sequence into latents; deterministic posterior means by
    default, reparameterized samples behind the flag."""
    states = np.asarray(reference_states, dtype=np.float64)
    if states.ndim != 2 or states.shape[1] != model.state_dim:
        raise CompatibilityError(
            f"reference states shape {states.shape} does not match model "
            f"state_dim {model.state_dim}")
    windows = build_lookaheads(states, model.lookahead)
    T = windows.shape[0]
    z_prev = np.zeros(model.prior.latent_dim)
    latents = np.empty((T, model.prior.latent_dim))
    for t in range(T):
        q = encode_step(model, z_prev, windows[t])
        if sample:
            if rng is None:
                raise DomainError("sampling encoder requires an rng")
            z = q.mean + q.std * rng.normal(size=q.mean.shape)
        else:
            z = q.mean
        latents[t] = z
        z_prev = z
    return LatentSequence(latents=latents,
                          provenance="encoded" if not sample else "encoded")


def latent_policy(model: NpmpModel, latents: LatentSequence):
    """Policy that replays frozen latents while reading the live state."""
    z = latents.latents

    def policy(state, t):
        return decode_mean(model, z[min(t, len(z) - 1)], state)

    return policy


def execute_latents(model: NpmpModel, latents: LatentSequence, env: EnvSpec,
                    reference_states: np.ndarray, eval_noise: float = 0.0,
                    seed: int = 0):
    """Roll out the decoder conditioned on a frozen latent sequence."""
    return rollout(env, latent_policy(model, latents),
                   RolloutNoiseConfig(eval_noise, seed),
                   reference_states[0], reference_states=reference_states)


def expert_return_for(clip: ReferenceTrajectory, eval_noise: float = 0.0,
                      seeds: tuple[int, ...] = (0,)) -> float:
    """Mean expert return on a clip under the given noise condition."""
    expert = build_expert(clip.env, clip)
    rets = []
    for seed in seeds:
        traj = rollout(clip.env, expert, RolloutNoiseConfig(eval_noise, seed),
                       clip.states[0], reference_states=clip.states)
        rets.append(episode_return(traj, clip.states))
    return float(np.mean(rets))


def one_shot_imitate(model: NpmpModel, clip: ReferenceTrajectory,
                     eval_noise: float = 0.0, seed: int = 0,
                     split: str = "train", expert_return: float | None = None,
                     sample_latents: bool = False,
                     rng: np.random.Generator | None = None,
                     ) -> tuple[ImitationResult, LatentSequence]:
    """Encode the clip once, then execute open-loop in latents."""
    if clip.env.state_dim != model.state_dim:
        raise CompatibilityError("clip environment does not match the model")
    latents = encode_sequence(model, clip.states, sample=sample_latents, rng=rng)
    traj = execute_latents(model, latents, clip.env, clip.states, eval_noise, seed)
    ret = episode_return(traj, clip.states)
    if expert_return is None:
        expert_return = expert_return_for(clip, eval_noise,
                                          seeds=(seed,) if eval_noise > 0 else (0,))
    result = ImitationResult(
        clip_id=clip.clip_id,
        provenance=latents.provenance,
        per_step_rewards=traj.per_step_rewards,
        episode_return=ret,
        relative_performance=relative_performance(ret, expert_return),
        split=split,
    )
    return result, latents


def latent_reconstruction_loss(model: NpmpModel, states: np.ndarray,
                               target_actions: np.ndarray,
                               latents: np.ndarray,
                               want_grad: bool = True):
    """Sum over t of ||decoder_mean(s_t, z_t) - a*_t||^2, with d/d latents."""
    T = latents.shape[0]
    norm_states = model.normalize_states(states[:T])
    inputs = np.hstack([latents, norm_states])
    pred, cache = mlp_forward_cached(model.decoder_spec, model.decoder_params,
                                     inputs)
    diff = pred - target_actions[:T]
    loss = float(np.sum(diff * diff))
    if not want_grad:
        return loss, None
    _, dinp = mlp_backward(model.decoder_spec, model.decoder_params, cache,
                           2.0 * diff)
    return loss, dinp[:, :model.prior.latent_dim]


def optimize_latents(model: NpmpModel, states: np.ndarray,
                     target_actions: np.ndarray, init: LatentSequence,
                     steps: int = 200, step_size: float = 0.1,
                     ) -> tuple[LatentSequence, np.ndarray]:
    """Gradient descent on the latents only, with a backtracking step rule.

    Each iteration proposes z - step * grad; improvements are accepted and the
    step grows slightly, failures halve the step. The recorded curve holds the
    best objective seen, so it is nonincreasing by construction.
    """
    z = init.latents.copy()
    loss, grad = latent_reconstruction_loss(model, states, target_actions, z)
    curve = [loss]
    step = step_size
    best = loss
    for _ in range(steps):
        candidate = z - step * grad
        cand_loss, cand_grad = latent_reconstruction_loss(
            model, states, target_actions, candidate)
        if cand_loss < best:
            z = candidate
            best = cand_loss
            grad = cand_grad
            step *= 1.2
        else:
            step *= 0.5
        curve.append(best)
        if step < 1e-12:
            break
    if not np.all(np.isfinite(z)):
        raise NumericError("latent optimization produced non-finite values")
    return LatentSequence(latents=z, provenance="optimized"), np.asarray(curve)


def concat_latents(sequences: list[LatentSequence]) -> LatentSequence:
    """Plain temporal concatenation."""
    if not sequences:
        raise DomainError("need at least one latent sequence")
    dims = {s.latents.shape[1] for s in sequences}
    if len(dims) != 1:
        raise ShapeError(f"latent dims differ: {sorted(dims)}")
    return LatentSequence(latents=np.vstack([s.latents for s in sequences]),
                          provenance="concatenated")


# ---------------------------------------------------------------------- PCA

@dataclass(frozen=True)
class PcaProjection:
    """Centered principal axes with explained-variance fractions."""

    mean: np.ndarray
    axes: np.ndarray
    explained: np.ndarray


def pca_fit(vectors: np.ndarray, k: int) -> PcaProjection:
    """Principal axes of the centered data by descending variance.

    Built on the eigendecomposition of the covariance matrix, so the result
    depends on the data only through its second moments; axis signs are
    canonicalized to make the largest-magnitude coefficient positive.
    """
    data = np.asarray(vectors, dtype=np.float64)
    if data.ndim != 2:
        raise ShapeError("pca_fit expects a (n, dim) array")
    n, dim = data.shape
    if k < 1 or k > dim:
        raise DomainError(f"k must be in [1, {dim}]")
    if n < k + 1:
        raise DomainError(f"need at least {k + 1} vectors, got {n}")
    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.maximum(eigvals[order], 0.0)
    axes = eigvecs[:, order].T[:k]
    for i in range(k):
        j = int(np.argmax(np.abs(axes[i])))
        if axes[i, j] < 0:
            axes[i] = -axes[i]
    total = float(eigvals.sum())
    explained = eigvals[:k] / total if total > 0 else np.zeros(k)
    return PcaProjection(mean=mean, axes=axes, explained=explained)


def pca_project(proj: PcaProjection, vectors: np.ndarray) -> np.ndarray:
    """Inner products with the axes after centering; accepts one or many rows."""
    data = np.asarray(vectors, dtype=np.float64)
    single = data.ndim == 1
    if single:
        data = data[None, :]
    if data.shape[1] != proj.mean.shape[0]:
        raise ShapeError("vector dimension does not match the projection")
    out = (data - proj.mean) @ proj.axes.T
    return out[0] if single else out


def pca_reconstruct(proj: PcaProjection, components: np.ndarray) -> np.ndarray:
    comps = np.asarray(components, dtype=np.float64)
    single = comps.ndim == 1
    if single:
        comps = comps[None, :]
    out = comps @ proj.axes + proj.mean
    return out[0] if single else out


# ------------------------------------------------------------------- reports

def _fmt(x) -> str:
    return repr(float(x))


def write_performance_csv(path: str | Path, results: list[ImitationResult],
                          conditions: list[str] | None = None) -> None:
    """Per-clip relative performance by condition; byte-stable across reruns."""
    if not results:
        raise DomainError("no results to export")
    rows = sorted(
        ((r.clip_id, r.split, r.provenance, r.relative_performance,
          r.episode_return) for r in results))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip_id", "split", "condition", "relative_performance",
                         "episode_return"])
        for clip_id, split, cond, rel, ret in rows:
            writer.writerow([clip_id, split, cond, _fmt(rel), _fmt(ret)])


def write_pca_points(path: str | Path, proj: PcaProjection,
                     labeled_sequences: list[tuple[str, str, LatentSequence]],
                     ) -> None:
    """3-component projections of latent sequences as a plotting-ready file."""
    if not labeled_sequences:
        raise DomainError("no sequences to export")
    if proj.axes.shape[0] < 3:
        raise DomainError("need a 3-component projection")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip_id", "kind", "t", "pc1", "pc2", "pc3"])
        for clip_id, kind, seq in labeled_sequences:
            pts = pca_project(proj, seq.latents)
            for t, row in enumerate(pts):
                writer.writerow([clip_id, kind, t, _fmt(row[0]), _fmt(row[1]),
                                 _fmt(row[2])])
