"""Latent motor-primitive model: AR(1) latent prior, look-ahead encoder,
state-conditional action decoder, and ELBO training.

The encoder maps (z_{t-1}, lookahead window of future states) to a Gaussian
over z_t; the decoder maps (z_t, s_t) to an action mean with a fixed output
std. Training maximizes the per-step ELBO with a beta-weighted prior term,
either from noisy-rollout cloning data or from perturbed nominal traces with
feedback-corrected action targets (the LFPC adaptation). Gradients are
hand-rolled reverse-mode with full backprop through the sampled latent path
(truncation is switchable).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cloning import NominalTrace, PerturbationModel
from .errors import (
    CompatibilityError,
    DomainError,
    NumericError,
    ShapeError,
    TrainingError,
)
from .nn import (
    MlpSpec,
    adam_init,
    adam_step,
    init_params,
    mlp_backward,
    mlp_forward_cached,
)

DECODER_ACTION_STD = 0.1
LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_2PI = float(np.log(2.0 * np.pi))

CHECKPOINT_FORMAT = "motorprims-npmp"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class PriorConfig:
    """AR(1) latent prior z_t = alpha z_{t-1} + sigma eps with unit marginal."""

    alpha: float
    latent_dim: int

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise DomainError("alpha must be in [0, 1)")
        if self.latent_dim < 1:
            raise DomainError("latent_dim must be >= 1")

    @property
    def sigma(self) -> float:
        # derived, never stored: keeps sigma^2 + alpha^2 = 1 exact
        return float(np.sqrt(1.0 - self.alpha * self.alpha))


def prior_step(config: PriorConfig, z_prev: np.ndarray, noise: np.ndarray) -> np.ndarray:
    z_prev = np.asarray(z_prev, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if z_prev.shape != noise.shape or z_prev.shape[-1] != config.latent_dim:
        raise ShapeError("z_prev and noise must both have the latent dimension")
    return config.alpha * z_prev + config.sigma * noise


def prior_log_prob(config: PriorConfig, z_prev: np.ndarray, z: np.ndarray) -> float:
    z_prev = np.asarray(z_prev, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if z_prev.shape != z.shape or z.shape[-1] != config.latent_dim:
        raise ShapeError("z_prev and z must both have the latent dimension")
    sigma = config.sigma
    resid = (z - config.alpha * z_prev) / sigma
    per_dim = -0.5 * resid * resid - np.log(sigma) - 0.5 * LOG_2PI
    return float(per_dim.sum())


@dataclass
class NpmpModel:
    """Encoder + decoder parameters, prior, and state normalization."""

    encoder_spec: MlpSpec
    encoder_params: np.ndarray
    decoder_spec: MlpSpec
    decoder_params: np.ndarray
    prior: PriorConfig
    lookahead: int
    state_dim: int
    action_dim: int
    state_shift: np.ndarray
    state_scale: np.ndarray
    decoder_action_std: float = DECODER_ACTION_STD
    training_config: dict = field(default_factory=dict)

    def __post_init__(self):
        L, K, d = self.prior.latent_dim, self.lookahead, self.state_dim
        if self.encoder_spec.input_dim != L + (K + 1) * d:
            raise ShapeError("encoder input dim must be latent + (K+1)*state_dim")
        if self.encoder_spec.output_dim != 2 * L:
            raise ShapeError("encoder must output mean and log-std per latent dim")
        if self.decoder_spec.input_dim != L + d:
            raise ShapeError("decoder input dim must be latent + state_dim")
        if self.decoder_spec.output_dim != self.action_dim:
            raise ShapeError("decoder output dim must be action_dim")

    def normalize_states(self, states: np.ndarray) -> np.ndarray:
        return (states - self.state_shift) / self.state_scale

    def normalize_windows(self, windows: np.ndarray) -> np.ndarray:
        reps = self.lookahead + 1
        shift = np.tile(self.state_shift, reps)
        scale = np.tile(self.state_scale, reps)
        return (windows - shift) / scale


def init_npmp_model(state_dim: int, action_dim: int, latent_dim: int = 8,
                    alpha: float = 0.95, lookahead: int = 5,
                    encoder_hidden: tuple[int, ...] = (64, 64),
                    decoder_hidden: tuple[int, ...] = (64, 64, 64),
                    state_shift: np.ndarray | None = None,
                    state_scale: np.ndarray | None = None,
                    seed: int = 0) -> NpmpModel:
    prior = PriorConfig(alpha=alpha, latent_dim=latent_dim)
    enc_spec = MlpSpec(input_dim=latent_dim + (lookahead + 1) * state_dim,
                       hidden_dims=encoder_hidden, output_dim=2 * latent_dim,
                       activation="elu", output_activation="linear")
    dec_spec = MlpSpec(input_dim=latent_dim + state_dim,
                       hidden_dims=decoder_hidden, output_dim=action_dim,
                       activation="elu", output_activation="tanh")
    rng = np.random.default_rng(seed)
    return NpmpModel(
        encoder_spec=enc_spec,
        encoder_params=init_params(enc_spec, rng),
        decoder_spec=dec_spec,
        decoder_params=init_params(dec_spec, rng),
        prior=prior,
        lookahead=lookahead,
        state_dim=state_dim,
        action_dim=action_dim,
        state_shift=np.zeros(state_dim) if state_shift is None else np.asarray(state_shift, dtype=np.float64),
        state_scale=np.ones(state_dim) if state_scale is None else np.asarray(state_scale, dtype=np.float64),
    )


def build_lookaheads(states: np.ndarray, lookahead: int) -> np.ndarray:
    """Windows [s_t, ..., s_{t+K}] for t = 0..N-2, repeating the final state.

    states has N rows; the returned array has N-1 rows of length (K+1)*dim,
    one window per step the trajectory actually takes.
    """
    states = np.asarray(states, dtype=np.float64)
    n = states.shape[0]
    idx = np.minimum(np.arange(n - 1)[:, None] + np.arange(lookahead + 1)[None, :],
                     n - 1)
    return states[idx].reshape(n - 1, -1)


def encode_step(model: NpmpModel, z_prev: np.ndarray, window: np.ndarray):
    """Posterior q(z_t | z_{t-1}, x_t) as (mean, std) with clamped log-std."""
    from .distributions import DiagonalGaussian

    z_prev = np.asarray(z_prev, dtype=np.float64)
    window = np.asarray(window, dtype=np.float64).ravel()
    L = model.prior.latent_dim
    if z_prev.shape != (L,):
        raise ShapeError(f"z_prev must have shape ({L},)")
    if window.size != (model.lookahead + 1) * model.state_dim:
        raise ShapeError("lookahead window has the wrong size")
    x = model.normalize_windows(window[None, :])
    inp = np.hstack([z_prev[None, :], x])
    out, _ = mlp_forward_cached(model.encoder_spec, model.encoder_params, inp)
    mean = out[0, :L]
    log_std = np.clip(out[0, L:], LOG_STD_MIN, LOG_STD_MAX)
    return DiagonalGaussian(mean=mean, std=np.exp(log_std))


def decode_action(model: NpmpModel, z: np.ndarray, state: np.ndarray):
    """Action distribution pi(a | z, s): tanh-headed mean, fixed std."""
    from .distributions import DiagonalGaussian

    mean = decode_mean(model, z, state)
    return DiagonalGaussian(mean=mean,
                            std=np.full(model.action_dim, model.decoder_action_std))


def decode_mean(model: NpmpModel, z: np.ndarray, state: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    state = np.asarray(state, dtype=np.float64)
    if z.shape != (model.prior.latent_dim,):
        raise ShapeError("latent has the wrong dimension")
    if state.shape != (model.state_dim,):
        raise CompatibilityError(
            f"state dim {state.shape} does not match model state_dim {model.state_dim}")
    inp = np.hstack([z[None, :], model.normalize_states(state[None, :])])
    out, _ = mlp_forward_cached(model.decoder_spec, model.decoder_params, inp)
    return out[0]


KL_MODES = ("closed_form", "sample")


def elbo(model: NpmpModel, states: np.ndarray, lookaheads: np.ndarray,
         targets: np.ndarray, beta: float, noise: np.ndarray,
         kl_mode: str = "closed_form", backprop_through_time: bool = True,
         want_grads: bool = True) -> dict:
    """Per-step ELBO over a batch of subsequences, with parameter gradients.

    states (B,L,d), lookaheads (B,L,(K+1)d), targets (B,L,m) are raw
    (unnormalized); noise (B,L,latent) supplies the reparameterized draws.
    Returns a dict with elbo/recon/kl (per-step means), the loss (-elbo), and
    gradients of the loss w.r.t. encoder and decoder parameters.
    """
    if beta <= 0.0:
        raise DomainError("beta must be positive")
    if kl_mode not in KL_MODES:
        raise DomainError(f"kl_mode must be one of {KL_MODES}")
    states = np.asarray(states, dtype=np.float64)
    lookaheads = np.asarray(lookaheads, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if states.ndim != 3 or lookaheads.ndim != 3 or targets.ndim != 3:
        raise ShapeError("states, lookaheads, and targets must be (B, L, dim)")
    B, L, d = states.shape
    if L < 1:
        raise ShapeError("subsequence length must be >= 1")
    Lz = model.prior.latent_dim
    if noise.shape != (B, L, Lz):
        raise ShapeError(f"noise must have shape ({B}, {L}, {Lz})")
    if targets.shape[:2] != (B, L) or lookaheads.shape[:2] != (B, L):
        raise ShapeError("batch shapes are inconsistent")

    alpha = model.prior.alpha
    sigma_p = model.prior.sigma
    sd = model.decoder_action_std
    norm_states = model.normalize_states(states.reshape(-1, d)).reshape(B, L, d)
    norm_windows = model.normalize_windows(
        lookaheads.reshape(B * L, -1)).reshape(B, L, -1)

    # forward pass, keeping per-step caches for the reverse sweep
    z_prev = np.zeros((B, Lz))
    steps = []
    recon_sum = 0.0
    kl_sum = 0.0
    for t in range(L):
        enc_in = np.hstack([z_prev, norm_windows[:, t, :]])
        enc_out, enc_cache = mlp_forward_cached(model.encoder_spec,
                                                model.encoder_params, enc_in)
        mu_q = enc_out[:, :Lz]
        raw = enc_out[:, Lz:]
        log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
        clamp_mask = ((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)).astype(np.float64)
        sigma_q = np.exp(log_std)
        eps = noise[:, t, :]
        z = mu_q + sigma_q * eps
        dec_in = np.hstack([z, norm_states[:, t, :]])
        a_mean, dec_cache = mlp_forward_cached(model.decoder_spec,
                                               model.decoder_params, dec_in)
        resid = (targets[:, t, :] - a_mean) / sd
        recon_t = (-0.5 * resid * resid - np.log(sd) - 0.5 * LOG_2PI).sum(axis=1)
        if kl_mode == "closed_form":
            mu_diff = mu_q - alpha * z_prev
            kl_t = (np.log(sigma_p / sigma_q)
                    + (sigma_q ** 2 + mu_diff ** 2) / (2.0 * sigma_p ** 2)
                    - 0.5).sum(axis=1)
        else:
            prior_resid = (z - alpha * z_prev) / sigma_p
            log_pz = (-0.5 * prior_resid * prior_resid - np.log(sigma_p)
                      - 0.5 * LOG_2PI).sum(axis=1)
            log_q = (-0.5 * eps * eps - log_std - 0.5 * LOG_2PI).sum(axis=1)
            kl_t = log_q - log_pz
        recon_sum += float(recon_t.sum())
        kl_sum += float(kl_t.sum())
        steps.append((enc_cache, dec_cache, mu_q, sigma_q, clamp_mask, eps, z,
                      z_prev, a_mean))
        z_prev = z

    n = B * L
    recon_mean = recon_sum / n
    kl_mean = kl_sum / n
    elbo_value = recon_mean - beta * kl_mean
    if not np.isfinite(elbo_value):
        term = "reconstruction" if not np.isfinite(recon_mean) else "kl"
        raise NumericError(f"ELBO is not finite ({term} term)")
    result = {"elbo": elbo_value, "loss": -elbo_value, "recon": recon_mean,
              "kl": kl_mean,
              "latents": np.stack([s[6] for s in steps], axis=1)}
    if not want_grads:
        return result

    # reverse sweep: loss = -(recon_sum - beta * kl_sum)/n
    denc = np.zeros_like(model.encoder_params)
    ddec = np.zeros_like(model.decoder_params)
    gz_next = np.zeros((B, Lz))
    cr = -1.0 / n          # d loss / d recon_t contributions
    ck = beta / n          # d loss / d kl_t contributions
    for t in range(L - 1, -1, -1):
        (enc_cache, dec_cache, mu_q, sigma_q, clamp_mask, eps, z, z_prev,
         a_mean) = steps[t]
        # d recon / d a_mean = (target - a_mean)/sd^2 ; d loss = cr * that
        d_a_mean = cr * (targets[:, t, :] - a_mean) / (sd * sd)
        dp_dec, d_dec_in = mlp_backward(model.decoder_spec, model.decoder_params,
                                        dec_cache, d_a_mean)
        ddec += dp_dec
        g_z = gz_next + d_dec_in[:, :Lz]

        d_mu = np.zeros_like(mu_q)
        d_sigma = np.zeros_like(sigma_q)
        gz_prev = np.zeros((B, Lz))
        if kl_mode == "closed_form":
            mu_diff = mu_q - alpha * z_prev
            d_mu += ck * mu_diff / (sigma_p ** 2)
            d_sigma += ck * (sigma_q / (sigma_p ** 2) - 1.0 / sigma_q)
            gz_prev += ck * (-alpha) * mu_diff / (sigma_p ** 2)
        else:
            prior_resid_over_var = (z - alpha * z_prev) / (sigma_p ** 2)
            g_z += ck * prior_resid_over_var
            gz_prev += ck * (-alpha) * prior_resid_over_var
            d_sigma += ck * (-1.0 / sigma_q)
        # reparameterization path
        d_mu += g_z
        d_sigma += g_z * eps
        d_raw = d_sigma * sigma_q * clamp_mask
        dp_enc, d_enc_in = mlp_backward(model.encoder_spec, model.encoder_params,
                                        enc_cache, np.hstack([d_mu, d_raw]))
        denc += dp_enc
        if backprop_through_time:
            gz_next = gz_prev + d_enc_in[:, :Lz]
        else:
            gz_next = np.zeros((B, Lz))

    result["grad_encoder"] = denc
    result["grad_decoder"] = ddec
    return result


def lfpc_elbo(model: NpmpModel, traces: list[NominalTrace], delta: PerturbationModel,
              beta: float, noise: np.ndarray, rng: np.random.Generator,
              subsequence_length: int | None = None,
              perturbed_copies: int = 1, kl_mode: str = "closed_form",
              backprop_through_time: bool = True, want_grads: bool = True) -> dict:
    """ELBO on perturbation-shifted nominal traces with feedback targets.

    Each batch row draws a trace, a subsequence start, and an i.i.d. per-step
    perturbation sequence; the same draws shift the decoder states and the
    encoder lookahead windows, and correct the action targets through the
    logged Jacobians.
    """
    B = noise.shape[0]
    states, lookaheads, targets = prepare_lfpc_batch(
        model, traces, delta, rng, n_rows=B,
        subsequence_length=subsequence_length or noise.shape[1],
        perturbed_copies=perturbed_copies)
    return elbo(model, states, lookaheads, targets, beta, noise,
                kl_mode=kl_mode, backprop_through_time=backprop_through_time,
                want_grads=want_grads)


def prepare_lfpc_batch(model: NpmpModel, traces: list[NominalTrace],
                       delta: PerturbationModel, rng: np.random.Generator,
                       n_rows: int, subsequence_length: int,
                       perturbed_copies: int = 1):
    """Sample perturbed subsequences from nominal traces.

    n_rows must be divisible by perturbed_copies; consecutive copies share the
    (trace, start) choice but draw independent perturbation sequences.
    """
    if n_rows % perturbed_copies != 0:
        raise ShapeError("n_rows must be divisible by perturbed_copies")
    K = model.lookahead
    d = model.state_dim
    m = model.action_dim
    L = subsequence_length
    n_groups = n_rows // perturbed_copies
    states = np.empty((n_rows, L, d))
    lookaheads = np.empty((n_rows, L, (K + 1) * d))
    targets = np.empty((n_rows, L, m))
    row = 0
    for _ in range(n_groups):
        trace = traces[int(rng.integers(0, len(traces)))]
        T = trace.horizon
        length = min(L, T)
        # starts range over the whole trace; windows clip at the end (the
        # final state acts as an absorbing hold) so late steps keep coverage
        start = int(rng.integers(0, T - 1))
        full = trace.full_states  # (T+1, d)
        span_idx = np.minimum(np.arange(start, start + length + K), T)
        rel = span_idx - start
        for _ in range(perturbed_copies):
            span_delta = delta.sample(rng, (length + K,))
            perturbed_span = full[span_idx] + span_delta
            win_idx = np.minimum(np.arange(length)[:, None] + np.arange(K + 1)[None, :],
                                 length + K - 1)
            lookaheads[row] = perturbed_span[win_idx].reshape(length, -1)
            states[row] = perturbed_span[:length]
            step_idx = np.minimum(span_idx[:length], T - 1)
            targets[row] = (trace.actions[step_idx]
                            + np.einsum("tmd,td->tm", trace.jacobians[step_idx],
                                        span_delta[:length]))
            row += 1
    return states, lookaheads, targets


@dataclass
class NpmpTrainingConfig:
    beta: float = 0.1
    latent_dim: int = 8
    alpha: float = 0.95
    lookahead: int = 5
    encoder_hidden: tuple[int, ...] = (64, 64)
    decoder_hidden: tuple[int, ...] = (64, 64, 64)
    mode: str = "noisy_rollout_cloning"  # or "lfpc"
    subsequence_count: int = 32
    subsequence_length: int = 30
    perturbed_copies: int = 5
    steps: int = 6000
    learning_rate: float = 1e-3
    lr_decay: str = "cosine"
    final_lr_fraction: float = 0.05
    kl_mode: str = "closed_form"
    backprop_through_time: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.beta <= 0.0:
            raise DomainError("beta must be positive")
        if self.subsequence_length < 2:
            raise DomainError("subsequence length must be >= 2")
        if self.mode not in ("noisy_rollout_cloning", "lfpc"):
            raise DomainError(f"unknown training mode {self.mode!r}")


@dataclass
class RolloutStore:
    """Noisy-rollout cloning data for one clip: state and mean-action sequences."""

    clip_id: str
    states: list[np.ndarray]        # each (T+1, d)
    mean_actions: list[np.ndarray]  # each (T, m)


def prepare_cloning_batch(model: NpmpModel, stores: list[RolloutStore],
                          rng: np.random.Generator, n_rows: int,
                          subsequence_length: int):
    """Sample subsequences uniformly across clips and rollouts."""
    K = model.lookahead
    d, m = model.state_dim, model.action_dim
    L = subsequence_length
    states = np.empty((n_rows, L, d))
    lookaheads = np.empty((n_rows, L, (K + 1) * d))
    targets = np.empty((n_rows, L, m))
    for row in range(n_rows):
        store = stores[int(rng.integers(0, len(stores)))]
        k = int(rng.integers(0, len(store.states)))
        seq = store.states[k]
        acts = store.mean_actions[k]
        T = acts.shape[0]
        length = min(L, T)
        start = int(rng.integers(0, T - 1))
        span_idx = np.minimum(np.arange(start, start + length + K), T)
        span = seq[span_idx]
        win_idx = np.minimum(np.arange(length)[:, None] + np.arange(K + 1)[None, :],
                             length + K - 1)
        lookaheads[row] = span[win_idx].reshape(length, -1)
        states[row] = span[:length]
        targets[row] = acts[np.minimum(np.arange(start, start + length), T - 1)]
    return states, lookaheads, targets


def state_normalizer_from_data(arrays: list[np.ndarray]):
    pooled = np.vstack(arrays)
    shift = pooled.mean(axis=0)
    scale = np.maximum(pooled.std(axis=0), 1e-3)
    return shift, scale


def train_npmp(data, config: NpmpTrainingConfig, state_dim: int, action_dim: int,
               delta: PerturbationModel | None = None) -> tuple[NpmpModel, dict]:
    """Minibatch ELBO training.

    data is a list of RolloutStore (noisy_rollout_cloning mode) or a list of
    NominalTrace (lfpc mode, which also needs the perturbation model).
    """
    if config.mode == "lfpc":
        if delta is None:
            raise DomainError("lfpc mode requires a perturbation model")
        norm_source = [tr.full_states for tr in data]
    else:
        norm_source = [s for store in data for s in store.states]
    if len(data) < 1:
        raise DomainError("training needs at least one clip")
    shift, scale = state_normalizer_from_data(norm_source)
    model = init_npmp_model(
        state_dim, action_dim, latent_dim=config.latent_dim, alpha=config.alpha,
        lookahead=config.lookahead, encoder_hidden=config.encoder_hidden,
        decoder_hidden=config.decoder_hidden, state_shift=shift,
        state_scale=scale, seed=config.seed)
    model.training_config = _config_dict(config)

    rng = np.random.default_rng(config.seed + 1)
    adam_enc = adam_init(model.encoder_spec.n_params, config.learning_rate)
    adam_dec = adam_init(model.decoder_spec.n_params, config.learning_rate)
    B, L = config.subsequence_count, config.subsequence_length
    Lz = config.latent_dim
    curves = {"loss": [], "recon": [], "kl": []}
    for step in range(config.steps):
        noise = rng.normal(size=(B, L, Lz))
        try:
            if config.mode == "lfpc":
                out = lfpc_elbo(model, data, delta, config.beta, noise, rng,
                                subsequence_length=L,
                                perturbed_copies=config.perturbed_copies,
                                kl_mode=config.kl_mode,
                                backprop_through_time=config.backprop_through_time)
            else:
                states, looks, targets = prepare_cloning_batch(model, data, rng, B, L)
                out = elbo(model, states, looks, targets, config.beta, noise,
                           kl_mode=config.kl_mode,
                           backprop_through_time=config.backprop_through_time)
        except NumericError as exc:
            raise TrainingError(f"training diverged at step {step}: {exc}",
                                step=step) from exc
        curves["loss"].append(out["loss"])
        curves["recon"].append(out["recon"])
        curves["kl"].append(out["kl"])
        lr = _npmp_lr(config, step)
        adam_enc.learning_rate = lr
        adam_dec.learning_rate = lr
        adam_enc, model.encoder_params = adam_step(adam_enc, model.encoder_params,
                                                   out["grad_encoder"])
        adam_dec, model.decoder_params = adam_step(adam_dec, model.decoder_params,
                                                   out["grad_decoder"])
    metrics = {k: np.asarray(v) for k, v in curves.items()}
    return model, metrics


def _npmp_lr(config: NpmpTrainingConfig, step: int) -> float:
    if config.lr_decay == "none" or config.steps <= 1:
        return config.learning_rate
    frac = step / max(config.steps - 1, 1)
    floor = config.final_lr_fraction
    return config.learning_rate * (floor + (1.0 - floor)
                                   * 0.5 * (1.0 + np.cos(np.pi * frac)))


def _config_dict(config: NpmpTrainingConfig) -> dict:
    out = {}
    for key, value in vars(config).items():
        out[key] = list(value) if isinstance(value, tuple) else value
    return out


def save_npmp(path: str | Path, model: NpmpModel) -> None:
    """Versioned text checkpoint; round-trips the parameters bit-exactly."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "state_dim": model.state_dim,
        "action_dim": model.action_dim,
        "lookahead": model.lookahead,
        "prior": {"alpha": model.prior.alpha, "latent_dim": model.prior.latent_dim},
        "decoder_action_std": model.decoder_action_std,
        "state_shift": model.state_shift.tolist(),
        "state_scale": model.state_scale.tolist(),
        "encoder": {
            "hidden_dims": list(model.encoder_spec.hidden_dims),
            "activation": model.encoder_spec.activation,
            "output_activation": model.encoder_spec.output_activation,
            "params": model.encoder_params.tolist(),
        },
        "decoder": {
            "hidden_dims": list(model.decoder_spec.hidden_dims),
            "activation": model.decoder_spec.activation,
            "output_activation": model.decoder_spec.output_activation,
            "params": model.decoder_params.tolist(),
        },
        "training_config": model.training_config,
    }
    Path(path).write_text(json.dumps(doc))


def load_npmp(path: str | Path) -> NpmpModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ShapeError(f"not a {CHECKPOINT_FORMAT} checkpoint: {path}")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ShapeError(f"unsupported checkpoint version {doc.get('version')}")
    prior = PriorConfig(alpha=doc["prior"]["alpha"],
                        latent_dim=doc["prior"]["latent_dim"])
    d, m, K = doc["state_dim"], doc["action_dim"], doc["lookahead"]
    enc = doc["encoder"]
    dec = doc["decoder"]
    enc_spec = MlpSpec(input_dim=prior.latent_dim + (K + 1) * d,
                       hidden_dims=tuple(enc["hidden_dims"]),
                       output_dim=2 * prior.latent_dim,
                       activation=enc["activation"],
                       output_activation=enc["output_activation"])
    dec_spec = MlpSpec(input_dim=prior.latent_dim + d,
                       hidden_dims=tuple(dec["hidden_dims"]), output_dim=m,
                       activation=dec["activation"],
                       output_activation=dec["output_activation"])
    return NpmpModel(
        encoder_spec=enc_spec,
        encoder_params=np.asarray(enc["params"], dtype=np.float64),
        decoder_spec=dec_spec,
        decoder_params=np.asarray(dec["params"], dtype=np.float64),
        prior=prior,
        lookahead=K,
        state_dim=d,
        action_dim=m,
        state_shift=np.asarray(doc["state_shift"], dtype=np.float64),
        state_scale=np.asarray(doc["state_scale"], dtype=np.float64),
        decoder_action_std=doc["decoder_action_std"],
        training_config=doc.get("training_config", {}),
    )
