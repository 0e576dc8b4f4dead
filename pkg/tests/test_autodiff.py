import numpy as np
import pytest

from sandmask.autodiff import (
    AutodiffError,
    MlpSpec,
    ParamVector,
    central_difference,
    finite_difference_gradient,
    init_params,
    loss_and_grad,
    mlp_backward,
    mlp_forward,
    softmax_cross_entropy,
)


def identity_net():
    spec = MlpSpec(input_dim=1, depth=1, width=1, output_dim=1)
    return spec, ParamVector(np.array([1.0, 0.0, 1.0, 0.0]), spec.layout())


def test_identity_composition():
    spec, params = identity_net()
    logits, _ = mlp_forward(spec, params, [[2.0]])
    assert logits.tolist() == [[2.0]]


def test_zero_weights_give_output_bias():
    spec = MlpSpec(input_dim=3, depth=2, width=4, output_dim=2)
    values = np.zeros(spec.num_params)
    values[-2:] = [0.25, -1.5]
    logits, _ = mlp_forward(spec, ParamVector(values, spec.layout()), np.random.default_rng(0).normal(size=(5, 3)))
    np.testing.assert_array_equal(logits, np.tile([0.25, -1.5], (5, 1)))


def test_large_shape_contract():
    spec = MlpSpec(input_dim=18, depth=3, width=256, output_dim=2)
    rng = np.random.default_rng(1)
    logits, _ = mlp_forward(spec, init_params(spec, rng), rng.normal(size=(512, 18)))
    assert logits.shape == (512, 2)
    assert np.all(np.isfinite(logits))


def test_linear_rule():
    spec, params = identity_net()
    _, tape = mlp_forward(spec, params, [[3.0]])
    grad = params.tensors(mlp_backward(tape, [[1.0]]))
    # relu is active, so dy/dW0 = x * W1 and dy/dW1 = relu(x * W0)
    assert grad["W0"][0, 0] == 3.0
    assert grad["W1"][0, 0] == 3.0
    assert grad["b1"][0] == 1.0


def test_gradient_vanishes_at_optimum():
    spec = MlpSpec(input_dim=2, depth=1, width=3, output_dim=1)
    params = init_params(spec, np.random.default_rng(2))
    x = np.random.default_rng(3).normal(size=(6, 2))
    target, tape = mlp_forward(spec, params, x)
    # squared error against the network's own output
    grad = mlp_backward(tape, 2.0 * (target - target) / len(x))
    np.testing.assert_array_equal(grad, np.zeros(spec.num_params))


def test_tape_cannot_be_reused():
    spec, params = identity_net()
    _, tape = mlp_forward(spec, params, [[1.0]])
    mlp_backward(tape, [[1.0]])
    with pytest.raises(AutodiffError, match="already"):
        mlp_backward(tape, [[1.0]])


def test_dimension_mismatch_names_layer():
    spec = MlpSpec(input_dim=3, depth=1, width=2)
    params = init_params(spec, np.random.default_rng(0))
    with pytest.raises(AutodiffError) as err:
        mlp_forward(spec, params, np.ones((4, 5)))
    assert err.value.layer == "W0"


def test_nonfinite_input_rejected():
    spec = MlpSpec(input_dim=2, depth=1, width=2)
    params = init_params(spec, np.random.default_rng(0))
    with pytest.raises(AutodiffError):
        mlp_forward(spec, params, [[np.inf, 0.0]])


def test_nonfinite_intermediate_carries_layer():
    spec = MlpSpec(input_dim=1, depth=1, width=1, output_dim=1)
    params = ParamVector(np.array([1e300, 0.0, 1e300, 0.0]), spec.layout())
    with pytest.raises(AutodiffError) as err:
        mlp_forward(spec, params, [[1e10]])
    assert err.value.layer == "W0"


@pytest.mark.parametrize("kwargs", [
    {"depth": 0}, {"width": 0}, {"activation": "gelu"}, {"dropout_rate": 1.0},
])
def test_spec_validation(kwargs):
    base = dict(input_dim=2, depth=1, width=2)
    base.update(kwargs)
    with pytest.raises(ValueError):
        MlpSpec(**base)


def test_param_vector_invariants():
    spec = MlpSpec(input_dim=2, depth=1, width=2)
    with pytest.raises(ValueError):
        ParamVector(np.zeros(spec.num_params + 1), spec.layout())
    bad = np.zeros(spec.num_params)
    bad[0] = np.nan
    with pytest.raises(ValueError):
        ParamVector(bad, spec.layout())


def test_central_difference_examples():
    fd = central_difference(lambda t: float(t[0] ** 2), [1.0], h=1e-5)
    assert fd.gradient[0] == pytest.approx(2.0, abs=1e-6)
    assert not fd.underflow
    np.testing.assert_array_equal(central_difference(lambda t: 3.0, [1.0, 2.0]).gradient, [0.0, 0.0])
    assert central_difference(lambda t: float(t[0]), [1e20], h=1e-5).underflow


def test_eval_forward_is_pure():
    spec = MlpSpec(input_dim=4, depth=2, width=8, dropout_rate=0.5)
    rng = np.random.default_rng(5)
    params = init_params(spec, rng)
    x = rng.normal(size=(10, 4))
    a, _ = mlp_forward(spec, params, x, mode="eval")
    b, _ = mlp_forward(spec, params, x, mode="eval")
    assert a.tobytes() == b.tobytes()
    c, _ = mlp_forward(spec, params, x, mode="train", rng=np.random.default_rng(0))
    d, _ = mlp_forward(spec, params, x, mode="train", rng=np.random.default_rng(0))
    assert c.tobytes() == d.tobytes()
    assert not np.array_equal(a, c)


def random_instance(rng, activation=None):
    spec = MlpSpec(
        input_dim=int(rng.integers(1, 6)),
        depth=int(rng.integers(1, 4)),
        width=int(rng.integers(1, 33)),
        output_dim=int(rng.integers(2, 4)),
        activation=activation or str(rng.choice(["relu", "tanh"])),
    )
    params = init_params(spec, rng)
    params = params.with_values(params.values + 0.1 * rng.normal(size=len(params)))
    x = rng.normal(size=(int(rng.integers(1, 9)), spec.input_dim))
    y = rng.integers(0, spec.output_dim, size=len(x))
    return spec, params, x, y


def max_rel_error(g, ref):
    return float(np.max(np.abs(g - ref) / (np.abs(ref) + 1e-8)))


@pytest.mark.parametrize("seed", range(10))
def test_backward_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    spec, params, x, y = random_instance(rng)
    _, grad = loss_and_grad(spec, params, x, y)
    fd = finite_difference_gradient(spec, params, x, lambda z: softmax_cross_entropy(z, y)[0], h=1e-5)
    assert max_rel_error(grad, fd.gradient) < 1e-4


def test_sum_loss_is_sum_of_per_example_gradients():
    rng = np.random.default_rng(11)
    spec, params, x, y = random_instance(rng)
    _, tape = mlp_forward(spec, params, x)
    logits = mlp_forward(spec, params, x)[0]
    _, dlogits = softmax_cross_entropy(logits, y)
    total = mlp_backward(tape, dlogits * len(x))
    parts = sum(loss_and_grad(spec, params, x[i:i + 1], y[i:i + 1])[1] for i in range(len(x)))
    np.testing.assert_allclose(total, parts, atol=1e-10, rtol=0)


def test_environment_axis_gives_per_env_rows():
    rng = np.random.default_rng(12)
    spec = MlpSpec(input_dim=3, depth=2, width=5)
    params = init_params(spec, rng)
    x = rng.normal(size=(4, 6, 3))
    y = rng.integers(0, 2, size=(4, 6))
    loss, grads = loss_and_grad(spec, params, x, y)
    assert loss.shape == (4,) and grads.shape == (4, spec.num_params)
    for e in range(4):
        loss_e, grad_e = loss_and_grad(spec, params, x[e], y[e])
        assert loss[e] == pytest.approx(loss_e, rel=1e-12)
        np.testing.assert_allclose(grads[e], grad_e, rtol=1e-12, atol=1e-15)


def test_init_scale_multiplier():
    spec = MlpSpec(input_dim=3, depth=1, width=4)
    a = init_params(spec, np.random.default_rng(0), 1.0).values
    b = init_params(spec, np.random.default_rng(0), 2.0).values
    np.testing.assert_allclose(b, 2.0 * a)
    limit = np.sqrt(6.0 / 7.0)
    assert np.all(np.abs(init_params(spec, np.random.default_rng(1)).tensors()["W0"]) <= limit)


def test_softmax_cross_entropy_is_stable():
    loss, grad = softmax_cross_entropy(np.array([[1000.0, -1000.0]]), np.array([0]))
    assert loss == pytest.approx(0.0)
    assert np.all(np.isfinite(grad))
