import numpy as np
import pytest

from motorprims.errors import ShapeError
from motorprims.nn import (
    AdamState,
    MlpSpec,
    adam_init,
    adam_step,
    init_params,
    load_params,
    mlp_forward,
    mlp_input_jacobian,
    mlp_param_gradient,
    save_params,
    unpack_params,
)

from conftest import central_diff_gradient, relative_error


def linear_spec(n_in, n_out):
    return MlpSpec(input_dim=n_in, hidden_dims=(), output_dim=n_out,
                   output_activation="linear")


def set_linear(spec, w, b):
    params = np.zeros(spec.n_params)
    pw, pb = unpack_params(spec, params)[0]
    pw[:] = w
    pb[:] = b
    return params


def test_identity_linear_layer():
    spec = linear_spec(2, 2)
    params = set_linear(spec, np.eye(2), np.zeros(2))
    out = mlp_forward(spec, params, np.array([0.3, -0.7]))
    np.testing.assert_allclose(out, [0.3, -0.7], rtol=0, atol=0)


def test_zero_params_tanh_output_is_zero():
    spec = MlpSpec(input_dim=3, hidden_dims=(5, 4), output_dim=2,
                   activation="tanh", output_activation="tanh")
    params = np.zeros(spec.n_params)
    out = mlp_forward(spec, params, np.array([1.0, -2.0, 0.5]))
    np.testing.assert_array_equal(out, np.zeros(2))


def test_single_tanh_unit():
    spec = MlpSpec(input_dim=1, hidden_dims=(), output_dim=1,
                   output_activation="tanh")
    params = set_linear(spec, np.array([[1.0]]), np.zeros(1))
    out = mlp_forward(spec, params, np.array([0.5]))
    assert out[0] == pytest.approx(np.tanh(0.5))
    assert out[0] == pytest.approx(0.462117, abs=1e-6)


def test_forward_shape_errors():
    spec = linear_spec(3, 2)
    params = np.zeros(spec.n_params)
    with pytest.raises(ShapeError):
        mlp_forward(spec, params, np.zeros(4))
    with pytest.raises(ShapeError):
        mlp_forward(spec, np.zeros(spec.n_params + 1), np.zeros(3))


def test_param_gradient_zero_cotangent(rng):
    spec = MlpSpec(input_dim=2, hidden_dims=(4,), output_dim=3)
    params = init_params(spec, rng)
    g = mlp_param_gradient(spec, params, rng.normal(size=2), np.zeros(3))
    np.testing.assert_array_equal(g, np.zeros_like(params))


def test_param_gradient_linear_row():
    # For a linear layer, dL/dW[0, j] with cotangent e1 is x[j].
    spec = linear_spec(3, 2)
    params = set_linear(spec, np.ones((2, 3)), np.zeros(2))
    x = np.array([0.4, -1.2, 2.0])
    g = mlp_param_gradient(spec, params, x, np.array([1.0, 0.0]))
    gw, gb = unpack_params(spec, g)[0]
    np.testing.assert_allclose(gw[0], x)
    np.testing.assert_allclose(gw[1], np.zeros(3))
    np.testing.assert_allclose(gb, [1.0, 0.0])


@pytest.mark.parametrize("activation", ["tanh", "relu", "elu"])
def test_param_gradient_matches_finite_differences(rng, activation):
    spec = MlpSpec(input_dim=3, hidden_dims=(6, 5), output_dim=2,
                   activation=activation, output_activation="tanh")
    params = init_params(spec, rng)
    x = rng.normal(size=3)
    cot = rng.normal(size=2)
    analytic = mlp_param_gradient(spec, params, x, cot)

    def loss(p):
        return float(cot @ mlp_forward(spec, p, x))

    numeric = central_diff_gradient(loss, params)
    assert relative_error(analytic, numeric) < 1e-5


def test_input_jacobian_is_weight_matrix_for_linear():
    spec = linear_spec(3, 2)
    w = np.array([[1.0, -2.0, 0.5], [0.0, 3.0, 1.0]])
    params = set_linear(spec, w, np.array([0.3, -0.1]))
    jac = mlp_input_jacobian(spec, params, np.array([0.2, 0.1, -0.4]))
    np.testing.assert_allclose(jac, w)


def test_input_jacobian_constant_network_is_zero(rng):
    spec = MlpSpec(input_dim=2, hidden_dims=(4,), output_dim=2)
    params = np.zeros(spec.n_params)
    _, b = unpack_params(spec, params)[1]
    b[:] = np.array([0.7, -0.2])
    jac = mlp_input_jacobian(spec, params, rng.normal(size=2))
    np.testing.assert_array_equal(jac, np.zeros((2, 2)))


def test_input_jacobian_matches_finite_differences(rng):
    spec = MlpSpec(input_dim=4, hidden_dims=(8, 6), output_dim=3,
                   activation="elu", output_activation="tanh")
    params = init_params(spec, rng)
    x = rng.normal(size=4)
    analytic = mlp_input_jacobian(spec, params, x)
    step = 1e-5
    numeric = np.zeros_like(analytic)
    for j in range(4):
        e = np.zeros(4)
        e[j] = step
        numeric[:, j] = (mlp_forward(spec, params, x + e)
                         - mlp_forward(spec, params, x - e)) / (2.0 * step)
    assert relative_error(analytic, numeric) < 1e-5


def test_forward_deterministic_and_batched(rng):
    spec = MlpSpec(input_dim=3, hidden_dims=(5,), output_dim=2)
    params = init_params(spec, rng)
    xs = rng.normal(size=(7, 3))
    batched = mlp_forward(spec, params, xs)
    rows = np.stack([mlp_forward(spec, params, x) for x in xs])
    # batched and per-row evaluation may differ only by BLAS summation order
    np.testing.assert_allclose(batched, rows, rtol=1e-13, atol=1e-15)
    # identical calls are bitwise identical
    np.testing.assert_array_equal(batched, mlp_forward(spec, params, xs))


def test_adam_zero_gradient_keeps_params():
    state = adam_init(4, learning_rate=0.01)
    params = np.array([1.0, -2.0, 0.5, 3.0])
    new_state, new_params = adam_step(state, params, np.zeros(4))
    np.testing.assert_array_equal(new_params, params)
    assert new_state.step_count == 1


def test_adam_first_step_magnitude(rng):
    # Bias correction makes the first update a signed step of about lr.
    lr = 0.003
    state = adam_init(5, learning_rate=lr)
    params = np.zeros(5)
    grad = rng.normal(size=5) * 10.0
    _, new_params = adam_step(state, params, grad)
    np.testing.assert_allclose(np.abs(new_params), lr, rtol=1e-6)
    np.testing.assert_allclose(np.sign(new_params), -np.sign(grad))


def test_adam_constant_gradient_monotone():
    state = adam_init(1, learning_rate=0.05)
    params = np.array([0.0])
    grad = np.array([2.5])
    history = [params[0]]
    for _ in range(20):
        state, params = adam_step(state, params, grad)
        history.append(params[0])
    diffs = np.diff(history)
    assert np.all(diffs < 0.0)


def test_adam_shape_mismatch():
    state = adam_init(3)
    with pytest.raises(ShapeError):
        adam_step(state, np.zeros(3), np.zeros(4))


def test_param_serialization_roundtrip_bit_exact(tmp_path, rng):
    spec = MlpSpec(input_dim=3, hidden_dims=(4, 2), output_dim=2,
                   activation="relu", output_activation="tanh")
    params = init_params(spec, rng)
    params[0] = 1.0 / 3.0
    params[1] = -1e-17
    path = tmp_path / "model.json"
    save_params(path, spec, params)
    spec2, params2 = load_params(path)
    assert spec2 == spec
    np.testing.assert_array_equal(params2, params)
    assert params2.dtype == np.float64


def test_spec_param_count():
    spec = MlpSpec(input_dim=3, hidden_dims=(5, 4), output_dim=2)
    assert spec.n_params == (3 * 5 + 5) + (5 * 4 + 4) + (4 * 2 + 2)


def test_init_params_scale(rng):
    spec = MlpSpec(input_dim=100, hidden_dims=(50,), output_dim=10)
    params = init_params(spec, rng)
    (w0, b0), (w1, b1) = unpack_params(spec, params)
    assert np.all(np.abs(w0) <= 1.0 / np.sqrt(100))
    assert np.all(np.abs(w1) <= 1.0 / np.sqrt(50))
    assert abs(np.mean(w0)) < 0.01
    np.testing.assert_array_equal(b0, 0.0)
    np.testing.assert_array_equal(b1, 0.0)
