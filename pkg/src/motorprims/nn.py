"""Multilayer perceptrons with hand-rolled reverse-mode gradients, plus Adam.

Everything is float64 and works on flat parameter vectors so that gradient
checking against central finite differences stays sharp. Parameters are laid
out as ordered (weight-matrix, bias) blocks per layer; weight matrices are
row-major with shape (fan_out, fan_in).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ShapeError

HIDDEN_ACTIVATIONS = ("tanh", "relu", "elu")
OUTPUT_ACTIVATIONS = ("linear", "tanh")

PARAM_FORMAT = "motorprims-mlp"
PARAM_FORMAT_VERSION = 1


@dataclass(frozen=True)
class MlpSpec:
    """Shape and activation choices of a fully connected network."""

    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int
    activation: str = "elu"
    output_activation: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ShapeError("input_dim and output_dim must be >= 1")
        if any(h < 1 for h in self.hidden_dims):
            raise ShapeError("hidden dims must be >= 1")
        if self.activation not in HIDDEN_ACTIVATIONS:
            raise ShapeError(f"unknown hidden activation {self.activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ShapeError(f"unknown output activation {self.output_activation!r}")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.output_dim)

    @property
    def n_params(self) -> int:
        dims = self.layer_dims
        return sum(fi * fo + fo for fi, fo in zip(dims[:-1], dims[1:]))


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "linear":
        return z
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "elu":
        return np.where(z > 0.0, z, np.expm1(z))
    raise ShapeError(f"unknown activation {name!r}")


def _act_deriv(name: str, z: np.ndarray) -> np.ndarray:
    if name == "linear":
        return np.ones_like(z)
    if name == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    if name == "elu":
        return np.where(z > 0.0, 1.0, np.exp(np.minimum(z, 0.0)))
    raise ShapeError(f"unknown activation {name!r}")


def unpack_params(spec: MlpSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views into the flat vector: one (W, b) pair per layer, W shape (fan_out, fan_in)."""
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1 or params.size != spec.n_params:
        raise ShapeError(f"expected {spec.n_params} params, got shape {params.shape}")
    layers = []
    dims = spec.layer_dims
    offset = 0
    for fi, fo in zip(dims[:-1], dims[1:]):
        w = params[offset:offset + fi * fo].reshape(fo, fi)
        offset += fi * fo
        b = params[offset:offset + fo]
        offset += fo
        layers.append((w, b))
    return layers


def init_params(spec: MlpSpec, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean uniform weights scaled by 1/sqrt(fan_in); zero biases."""
    params = np.zeros(spec.n_params)
    for w, _b in unpack_params(spec, params):
        fan_in = w.shape[1]
        w[:] = rng.uniform(-1.0, 1.0, size=w.shape) / np.sqrt(fan_in)
    return params


def _as_batch(spec: MlpSpec, x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ShapeError(f"input shape {x.shape} does not match input_dim {spec.input_dim}")
    return x, single


def mlp_forward(spec: MlpSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on a single input (d,) or a batch (B, d)."""
    return mlp_forward_cached(spec, params, x)[0]


def mlp_forward_cached(spec: MlpSpec, params: np.ndarray, x: np.ndarray):
    """Forward pass that also returns the cache needed by mlp_backward.

    Cache holds, per layer, the layer input and pre-activation; both are
    batched (B, dim) arrays.
    """
    xb, single = _as_batch(spec, x)
    layers = unpack_params(spec, params)
    names = [spec.activation] * len(spec.hidden_dims) + [spec.output_activation]
    inputs, preacts = [], []
    h = xb
    for (w, b), name in zip(layers, names):
        inputs.append(h)
        z = h @ w.T + b
        preacts.append(z)
        h = _act(name, z)
    out = h[0] if single else h
    return out, (inputs, preacts, single)


def mlp_backward(spec: MlpSpec, params: np.ndarray, cache, dout: np.ndarray):
    """Vector-Jacobian product for L = <dout, output>, summed over the batch.

    Returns (dparams, dx) where dparams is flat in the parameter layout and
    dx matches the input batch shape.
    """
    inputs, preacts, single = cache
    layers = unpack_params(spec, params)
    names = [spec.activation] * len(spec.hidden_dims) + [spec.output_activation]
    dout = np.asarray(dout, dtype=np.float64)
    if single:
        dout = dout[None, :]
    if dout.shape != (inputs[0].shape[0], spec.output_dim):
        raise ShapeError(f"cotangent shape {dout.shape} does not match output")

    dparams = np.zeros(spec.n_params)
    dlayers = unpack_params(spec, dparams)
    delta = dout
    for idx in range(len(layers) - 1, -1, -1):
        delta = delta * _act_deriv(names[idx], preacts[idx])
        dw, db = dlayers[idx]
        dw += delta.T @ inputs[idx]
        db += delta.sum(axis=0)
        delta = delta @ layers[idx][0]
    dx = delta[0] if single else delta
    return dparams, dx


def mlp_param_gradient(spec: MlpSpec, params: np.ndarray, x: np.ndarray,
                       cotangent: np.ndarray) -> np.ndarray:
    """dL/dparams for L = <cotangent, mlp_forward(x)>."""
    _, cache = mlp_forward_cached(spec, params, x)
    dparams, _ = mlp_backward(spec, params, cache, cotangent)
    return dparams


def mlp_input_gradient(spec: MlpSpec, params: np.ndarray, x: np.ndarray,
                       cotangent: np.ndarray) -> np.ndarray:
    """dL/dx for L = <cotangent, mlp_forward(x)>."""
    _, cache = mlp_forward_cached(spec, params, x)
    _, dx = mlp_backward(spec, params, cache, cotangent)
    return dx


def mlp_input_jacobian(spec: MlpSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Full Jacobian d output / d input, shape (output_dim, input_dim)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("mlp_input_jacobian expects a single input vector")
    tiled = np.tile(x, (spec.output_dim, 1))
    _, cache = mlp_forward_cached(spec, params, tiled)
    _, dx = mlp_backward(spec, params, cache, np.eye(spec.output_dim))
    return dx


@dataclass
class AdamState:
    """Adam optimizer state for one flat parameter vector."""

    step_count: int
    first_moment: np.ndarray
    second_moment: np.ndarray
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_init(n_params: int, learning_rate: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    return AdamState(
        step_count=0,
        first_moment=np.zeros(n_params),
        second_moment=np.zeros(n_params),
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def adam_step(state: AdamState, params: np.ndarray,
              gradient: np.ndarray) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam update; does not mutate its inputs."""
    params = np.asarray(params, dtype=np.float64)
    gradient = np.asarray(gradient, dtype=np.float64)
    if params.shape != gradient.shape or params.shape != state.first_moment.shape:
        raise ShapeError("params, gradient, and moments must share a shape")
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * gradient
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * gradient * gradient
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    new_state = replace(state, step_count=t, first_moment=m, second_moment=v)
    return new_state, new_params


def save_params(path: str | Path, spec: MlpSpec, params: np.ndarray) -> None:
    """Write spec + flat parameters as text; round-trips bit-exactly."""
    params = np.asarray(params, dtype=np.float64)
    if params.size != spec.n_params:
        raise ShapeError("parameter vector does not match spec")
    doc = {
        "format": PARAM_FORMAT,
        "version": PARAM_FORMAT_VERSION,
        "input_dim": spec.input_dim,
        "hidden_dims": list(spec.hidden_dims),
        "output_dim": spec.output_dim,
        "activation": spec.activation,
        "output_activation": spec.output_activation,
        "values": params.tolist(),
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_params(path: str | Path) -> tuple[MlpSpec, np.ndarray]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != PARAM_FORMAT:
        raise ShapeError(f"not a {PARAM_FORMAT} file: {path}")
    spec = MlpSpec(
        input_dim=doc["input_dim"],
        hidden_dims=tuple(doc["hidden_dims"]),
        output_dim=doc["output_dim"],
        activation=doc["activation"],
        output_activation=doc["output_activation"],
    )
    params = np.asarray(doc["values"], dtype=np.float64)
    if params.size != spec.n_params:
        raise ShapeError("stored parameter count does not match stored spec")
    return spec, params
