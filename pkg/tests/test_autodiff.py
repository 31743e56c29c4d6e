# tests/test_autodiff.py
import threading

import numpy as np
import pytest

from src.autodiff import (
    GraphError,
    NonDeterministicError,
    NonFiniteError,
    ShapeError,
    Tensor,
    get_precision,
    grad_check,
    no_grad,
    ops,
    precision,
    set_precision,
)
from src.autodiff.ops import _result


def _param(rng, shape, low=-1.0, high=1.0):
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=True)


# --- conv2d ---

def test_conv2d_identity_kernel_returns_input(rng):
    x = Tensor(rng.standard_normal((1, 4, 4, 1)))
    out = ops.conv2d(x, Tensor(np.ones((1, 1, 1, 1))), stride=1, padding="same")
    np.testing.assert_array_equal(out.data, x.data)


def test_conv2d_valid_all_ones():
    out = ops.conv2d(Tensor(np.ones((1, 3, 3, 1))), Tensor(np.ones((2, 2, 1, 1))), stride=1, padding="valid")
    assert out.shape == (1, 2, 2, 1)
    np.testing.assert_array_equal(out.data, np.full((1, 2, 2, 1), 4.0))


def test_conv2d_stride_two_same_halves_extent(rng):
    out = ops.conv2d(Tensor(rng.random((1, 28, 28, 1))), Tensor(rng.random((3, 3, 1, 2))), stride=2)
    assert out.shape == (1, 14, 14, 2)


def test_conv2d_channel_mismatch_raises(rng):
    with pytest.raises(ShapeError, match="channels"):
        ops.conv2d(Tensor(rng.random((1, 4, 4, 2))), Tensor(rng.random((3, 3, 1, 1))))


# --- core ops ---

def test_sigmoid_of_zero_is_half():
    assert ops.sigmoid(Tensor([0.0])).item() == 0.5


def test_sigmoid_stays_strictly_inside_unit_interval():
    out = ops.sigmoid(Tensor([-800.0, 800.0])).data
    assert np.all(out > 0.0) and np.all(out < 1.0)


def test_global_avg_pool_of_constant_map():
    out = ops.global_avg_pool(Tensor(np.full((2, 5, 3, 4), 2.5)))
    np.testing.assert_allclose(out.data, np.full((2, 4), 2.5))


def test_upsample2x_repeats_values(rng):
    x = rng.random((1, 4, 4, 1))
    out = ops.upsample2x(Tensor(x)).data
    assert out.shape == (1, 8, 8, 1)
    for i in range(8):
        for j in range(8):
            assert out[0, i, j, 0] == x[0, i // 2, j // 2, 0]


def test_batch_norm_training_needs_two_samples(rng):
    with pytest.raises(ShapeError, match="at least 2"):
        ops.batch_norm(Tensor(rng.random((1, 2, 2, 3))), Tensor(np.ones(3)), Tensor(np.zeros(3)),
                       np.zeros(3), np.ones(3), training=True)


def test_batch_norm_updates_running_statistics(rng):
    x = rng.standard_normal((4, 2, 2, 3)) * 2.0 + 1.0
    running_mean, running_var = np.zeros(3), np.ones(3)
    ops.batch_norm(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3)), running_mean, running_var, training=True)
    np.testing.assert_allclose(running_mean, 0.01 * x.mean(axis=(0, 1, 2)))
    np.testing.assert_allclose(running_var, 0.99 + 0.01 * x.var(axis=(0, 1, 2)))


def test_general_broadcasting_is_rejected(rng):
    with pytest.raises(ShapeError):
        ops.add(Tensor(rng.random((2, 3, 4))), Tensor(rng.random((3, 1))))


def test_channel_broadcast_is_accepted(rng):
    sigma = Tensor(rng.random((2, 3, 3, 1)))
    image = Tensor(rng.random((2, 3, 3, 3)))
    out = ops.mul(sigma, image)
    np.testing.assert_allclose(out.data, sigma.data * image.data)


def test_add_and_mul_commute(rng):
    a, b = Tensor(rng.random((3, 4))), Tensor(rng.random((3, 4)))
    np.testing.assert_array_equal(ops.add(a, b).data, ops.add(b, a).data)
    np.testing.assert_array_equal(ops.mul(a, b).data, ops.mul(b, a).data)


def test_overflow_is_reported_as_non_finite():
    with np.errstate(over="ignore"):
        with pytest.raises(NonFiniteError):
            ops.exp(Tensor([1000.0]))


def test_tensor_rejects_nan():
    with pytest.raises(NonFiniteError):
        Tensor([1.0, np.nan])


# --- backward ---

def test_backward_of_sum_of_squares_is_two_x(rng):
    x = _param(rng, (3, 4))
    ops.sum(ops.square(x)).backward()
    np.testing.assert_allclose(x.grad, 2.0 * x.data)


def test_backward_of_sigmoid_at_zero_is_quarter():
    x = Tensor(np.zeros(5), requires_grad=True)
    ops.sum(ops.sigmoid(x)).backward()
    np.testing.assert_allclose(x.grad, np.full(5, 0.25))


def test_backward_requires_scalar_loss(rng):
    x = _param(rng, (3,))
    with pytest.raises(GraphError, match="scalar"):
        ops.square(x).backward()


def test_backward_on_detached_graph_raises(rng):
    x = _param(rng, (3,))
    with no_grad():
        loss = ops.sum(ops.square(x))
    with pytest.raises(GraphError):
        loss.backward()


def test_gradients_accumulate_over_shared_inputs(rng):
    x = _param(rng, (4,))
    ops.sum(ops.add(ops.mul(x, 3.0), x)).backward()
    np.testing.assert_allclose(x.grad, np.full(4, 4.0))


def test_forward_is_bitwise_deterministic(rng):
    x = rng.standard_normal((2, 6, 6, 2))
    kernel = rng.standard_normal((3, 3, 2, 3))

    def run():
        return ops.relu(ops.conv2d(Tensor(x), Tensor(kernel), stride=2)).data

    np.testing.assert_array_equal(run(), run())


# --- grad_check ---

def test_grad_check_linear_function_is_exact(rng):
    coeffs = rng.uniform(-1.0, 1.0, size=5)
    x = _param(rng, (5,))
    error = grad_check(lambda t: ops.sum(ops.mul(t, Tensor(coeffs))), [x], eps=1e-3)
    assert error < 1e-9


def test_grad_check_dense_relu_sum(rng):
    x, w, b = _param(rng, (3, 4)), _param(rng, (4, 5)), _param(rng, (5,))
    error = grad_check(lambda x, w, b: ops.sum(ops.relu(ops.dense(x, w, b))), [x, w, b])
    assert error < 1e-4


def test_grad_check_conv_batch_norm_relu_stack(rng):
    x, kernel = _param(rng, (2, 4, 4, 1)), _param(rng, (3, 3, 1, 2))
    gamma, beta = _param(rng, (2,), 0.5, 1.5), _param(rng, (2,))
    running_mean, running_var = rng.standard_normal(2) * 0.1, rng.uniform(0.5, 1.5, size=2)

    def fn(x, kernel, gamma, beta):
        h = ops.conv2d(x, kernel, stride=1)
        h = ops.batch_norm(h, gamma, beta, running_mean, running_var, training=False)
        return ops.sum(ops.relu(h))

    assert grad_check(fn, [x, kernel, gamma, beta], eps=1e-5) < 1e-5


@pytest.mark.parametrize("name, build", [
    ("exp", lambda t: ops.exp(t)),
    ("sigmoid", lambda t: ops.sigmoid(t)),
    ("leaky_relu", lambda t: ops.leaky_relu(t)),
    ("square", lambda t: ops.square(t)),
    ("mean_axis", lambda t: ops.mean(t, axis=0)),
    ("upsample2x", lambda t: ops.upsample2x(t)),
    ("center_crop", lambda t: ops.center_crop(t, 2, 3)),
    ("global_avg_pool", lambda t: ops.global_avg_pool(t)),
    ("slice_channels", lambda t: ops.slice_channels(t, 1, 3)),
    ("reshape", lambda t: ops.reshape(t, (2, -1))),
    ("conv_stride2", lambda t: ops.conv2d(t, Tensor(np.linspace(-1, 1, 27).reshape(3, 3, 3, 1)), stride=2)),
    ("bn_train", lambda t: ops.batch_norm(t, Tensor(np.array([1.0, 2.0, 0.5])), Tensor(np.zeros(3)),
                                          np.zeros(3), np.ones(3), training=True)),
])
def test_registered_ops_pass_grad_check(name, build):
    for trial in range(10):
        rng = np.random.default_rng(trial)
        x = Tensor(rng.uniform(-1.0, 1.0, size=(2, 4, 4, 3)), requires_grad=True)
        # keep leaky_relu inputs away from the kink
        x.data[np.abs(x.data) < 1e-3] = 0.5
        weights = Tensor(rng.standard_normal(build(x).shape))
        error = grad_check(lambda t: ops.sum(ops.mul(build(t), weights)), [x])
        assert error < 1e-4, f"{name}: relative error {error:.2e} on trial {trial}"


def test_grad_check_detects_wrong_backward_rule(rng):
    def bad_square(t):
        data = t.data * t.data
        return _result(data, (t,), lambda g: (3.0 * t.data * g,), "bad_square")

    x = _param(rng, (4,), 0.5, 1.5)
    assert grad_check(lambda t: ops.sum(bad_square(t)), [x]) > 1e-2


def test_grad_check_rejects_non_deterministic_function(rng):
    x = _param(rng, (3,))
    noise = np.random.default_rng(0)
    with pytest.raises(NonDeterministicError):
        grad_check(lambda t: ops.sum(ops.mul(t, Tensor(noise.standard_normal(3)))), [x])


def test_grad_check_needs_double_precision(rng):
    with precision("float32"):
        x = Tensor(rng.random(3), requires_grad=True)
    with pytest.raises(ValueError, match="float64"):
        grad_check(lambda t: ops.sum(t), [x])


def test_precision_switch_controls_new_tensors():
    set_precision("float32")
    assert Tensor([1.0]).dtype == np.float32
    set_precision("float64")
    assert Tensor([1.0]).dtype == np.float64
    with pytest.raises(ValueError):
        set_precision("float16")


def test_precision_is_per_thread():
    entered, release = threading.Event(), threading.Event()
    seen = {}

    def worker():
        seen["initial"] = get_precision()
        with precision("float32"):
            seen["inside"] = Tensor([1.0]).dtype
            entered.set()
            release.wait(timeout=10)

    thread = threading.Thread(target=worker)
    thread.start()
    assert entered.wait(timeout=10)
    try:
        assert get_precision() == "float64"
        assert Tensor([1.0]).dtype == np.float64
    finally:
        release.set()
        thread.join(timeout=10)
    assert seen == {"initial": "float64", "inside": np.float32}


def test_set_precision_in_one_thread_leaves_others_alone():
    set_precision("float32")
    seen = []
    thread = threading.Thread(target=lambda: seen.append(get_precision()))
    thread.start()
    thread.join(timeout=10)
    assert seen == ["float64"]
    assert get_precision() == "float32"
