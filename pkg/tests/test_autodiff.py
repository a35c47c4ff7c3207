"""Unit tests for the reverse-mode tape and Adam."""

import numpy as np
import pytest

from catebal.autodiff import Adam, ShapeError, Tape, TapeError, Tensor


def central_diff(f, x, h=1e-6):
    """Elementwise central finite differences of a scalar function."""
    g = np.zeros_like(x, dtype=np.float64)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return g


UNARY_OPS = ["elu", "relu", "tanh", "logistic", "square", "absval"]


@pytest.mark.parametrize("op", UNARY_OPS)
def test_unary_op_gradients(op):
    rng = np.random.default_rng(3)
    # keep points away from the relu/absval kinks
    x = rng.normal(size=(4, 3))
    x[np.abs(x) < 0.05] = 0.2

    def value():
        tape = Tape()
        return float(tape.mean(getattr(tape, op)(tape.param(x))).data)

    tape = Tape()
    out = tape.mean(getattr(tape, op)(tape.param(x)))
    tape.backward(out)
    analytic = tape.grad_for(x)
    fd = central_diff(value, x)
    np.testing.assert_allclose(analytic, fd, rtol=1e-6, atol=1e-9)


@pytest.mark.parametrize("op", ["add", "sub", "mul"])
def test_binary_op_gradients(op):
    rng = np.random.default_rng(4)
    a = rng.normal(size=(3, 2))
    b = rng.normal(size=(3, 2))

    def value():
        tape = Tape()
        return float(tape.mean(getattr(tape, op)(tape.param(a), tape.param(b))).data)

    tape = Tape()
    out = tape.mean(getattr(tape, op)(tape.param(a), tape.param(b)))
    tape.backward(out)
    for arr in (a, b):
        np.testing.assert_allclose(
            tape.grad_for(arr),
            central_diff(lambda arr=arr: value(), arr),
            rtol=1e-6,
            atol=1e-9,
        )


def test_affine_gradients():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(4, 3))
    w = rng.normal(size=(3, 2))
    b = rng.normal(size=2)

    def value():
        tape = Tape()
        return float(
            tape.mean(tape.affine(tape.param(x), tape.param(w), tape.param(b))).data
        )

    tape = Tape()
    out = tape.mean(tape.affine(tape.param(x), tape.param(w), tape.param(b)))
    tape.backward(out)
    for arr in (x, w, b):
        np.testing.assert_allclose(
            tape.grad_for(arr), central_diff(lambda: value(), arr), rtol=1e-6, atol=1e-9
        )


def test_concat_scale_gradients():
    rng = np.random.default_rng(6)
    a = rng.normal(size=(3, 2))
    b = rng.normal(size=(3, 1))

    def value():
        tape = Tape()
        return float(
            tape.mean(tape.scale(tape.concat([tape.param(a), tape.param(b)]), 2.5)).data
        )

    tape = Tape()
    out = tape.mean(tape.scale(tape.concat([tape.param(a), tape.param(b)]), 2.5))
    tape.backward(out)
    for arr in (a, b):
        np.testing.assert_allclose(
            tape.grad_for(arr), central_diff(lambda: value(), arr), rtol=1e-6, atol=1e-9
        )


def test_mean_value_and_gradient():
    x = np.arange(6, dtype=np.float64).reshape(2, 3)
    tape = Tape()
    out = tape.mean(tape.param(x))
    assert float(out.data) == pytest.approx(2.5)
    tape.backward(out)
    np.testing.assert_array_equal(tape.grad_for(x), np.full((2, 3), 1.0 / 6.0))


def test_logistic_is_stable_at_extremes():
    tape = Tape()
    out = tape.logistic(tape.const(np.array([[-1e4], [1e4]])))
    np.testing.assert_allclose(out.data, [[0.0], [1.0]], atol=1e-12)
    assert np.all(np.isfinite(out.data))


def test_param_memoization_accumulates():
    # the same array used twice must produce one node with summed gradient
    x = np.array([[1.0, 2.0]])
    tape = Tape()
    p1 = tape.param(x)
    p2 = tape.param(x)
    assert p1 is p2
    out = tape.mean(tape.add(p1, p2))  # d/dx mean(2x) = 2/size
    tape.backward(out)
    np.testing.assert_array_equal(tape.grad_for(x), np.full((1, 2), 1.0))


def test_const_receives_no_gradient():
    x = np.array([[1.0]])
    tape = Tape()
    c = tape.const(x)
    out = tape.mean(tape.square(c))
    tape.backward(out)
    assert c.grad is None
    assert tape.grad_for(x) is None


def test_shape_errors():
    tape = Tape()
    with pytest.raises(ShapeError):
        tape.affine(tape.const(np.ones((2, 3))), tape.const(np.ones((2, 3))),
                    tape.const(np.ones(3)))
    with pytest.raises(ShapeError):
        tape.affine(tape.const(np.ones((2, 3))), tape.const(np.ones((3, 2))),
                    tape.const(np.ones(3)))
    with pytest.raises(ShapeError):
        tape.add(tape.const(np.ones((2, 1))), tape.const(np.ones((1, 2))))
    with pytest.raises(ShapeError):
        tape.concat([tape.const(np.ones((2, 1))), tape.const(np.ones((3, 1)))])
    with pytest.raises(ShapeError):
        tape.concat([])
    with pytest.raises(ShapeError):
        tape.mean(tape.const(np.empty((0, 1))))


def test_backward_requires_scalar_root_and_prior_forward():
    tape = Tape()
    with pytest.raises(TapeError):
        tape.backward(Tensor(np.zeros(1)))
    vec = tape.const(np.ones((2, 1)))
    with pytest.raises(ShapeError):
        tape.backward(vec)


def test_adam_first_step_hand_value():
    p = np.array([1.0])
    opt = Adam([p], learning_rate=0.001)
    opt.step([np.array([1.0])])
    # bias-corrected first step is lr * g / (|g| + eps)
    assert p[0] == pytest.approx(1.0 - 0.001 / (1.0 + 1e-8), abs=1e-15)


def test_adam_updates_in_place_and_deterministic():
    rng = np.random.default_rng(9)
    p1 = rng.normal(size=(3, 2))
    p2 = p1.copy()
    grads = [rng.normal(size=(3, 2)) for _ in range(5)]
    opt1, opt2 = Adam([p1], 0.01), Adam([p2], 0.01)
    buf = p1  # identity must survive the steps
    for g in grads:
        opt1.step([g.copy()])
        opt2.step([g.copy()])
    assert buf is p1
    np.testing.assert_array_equal(p1, p2)


def test_adam_none_gradient_is_zero():
    p = np.array([2.0])
    opt = Adam([p])
    opt.step([None])
    assert p[0] == 2.0


def test_adam_error_paths():
    p = np.array([1.0])
    opt = Adam([p])
    with pytest.raises(ShapeError):
        opt.step([])
    with pytest.raises(ShapeError):
        opt.step([np.zeros((2, 2))])
    with pytest.raises(FloatingPointError):
        opt.step([np.array([np.nan])])
