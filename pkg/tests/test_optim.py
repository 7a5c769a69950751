import numpy as np
import numpy.testing as npt
import pytest

from absa_gcn.optim import AdamState, adam_step
from absa_gcn.tensor import Tensor


def test_zero_gradients_leave_parameters_unchanged():
    w = Tensor([1.0, -2.0, 3.0], trainable=True)
    state = AdamState(learning_rate=0.001)
    before = w.data.copy()
    adam_step([("w", w)], state)
    npt.assert_array_equal(w.data, before)
    assert state.step_count == 1


def test_first_step_moves_by_learning_rate():
    # m_hat = v_hat = 1 after one unit-gradient step, so the update is
    # lr / (1 + eps), within 1e-10 of -0.001.
    w = Tensor(np.zeros(()), trainable=True)
    w.grad[...] = 1.0
    state = AdamState(learning_rate=0.001)
    adam_step([("w", w)], state)
    assert abs(w.item() + 0.001) < 1e-10


def test_identical_parameters_stay_identical():
    a = Tensor([0.5, -0.5], trainable=True)
    b = Tensor([0.5, -0.5], trainable=True)
    state = AdamState(learning_rate=0.01)
    rng = np.random.default_rng(0)
    for _ in range(25):
        g = rng.normal(size=2)
        a.grad[...] = g
        b.grad[...] = g
        adam_step([("a", a), ("b", b)], state)
        npt.assert_array_equal(a.data, b.data)


def test_zero_learning_rate_is_bitwise_noop_on_parameters():
    w = Tensor([0.1, -0.2, 0.0], trainable=True)
    before = w.data.copy()
    state = AdamState(learning_rate=0.0)
    for step in range(5):
        w.grad[...] = [1.0, -3.0, 0.5]
        adam_step([("w", w)], state)
    npt.assert_array_equal(w.data, before)
    assert state.step_count == 5
    assert np.any(state.first_moment["w"] != 0.0)


def test_step_counter_strictly_increments_and_moments_keep_shape():
    w = Tensor(np.ones((2, 3)), trainable=True)
    state = AdamState()
    for expected in range(1, 4):
        w.grad[...] = 1.0
        adam_step([("w", w)], state)
        assert state.step_count == expected
        assert state.first_moment["w"].shape == (2, 3)
        assert state.second_moment["w"].shape == (2, 3)


def test_missing_gradient_is_an_error():
    w = Tensor([1.0])  # not trainable: no grad buffer
    with pytest.raises(RuntimeError):
        adam_step([("w", w)], AdamState())


def test_matches_reference_recurrence():
    # Independent scalar reimplementation of the update rule.
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    w = Tensor(np.asarray(0.7), trainable=True)
    state = AdamState(learning_rate=lr)
    ref_w, m, v = 0.7, 0.0, 0.0
    rng = np.random.default_rng(5)
    for t in range(1, 20):
        g = float(rng.normal())
        w.grad[...] = g
        adam_step([("w", w)], state)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        ref_w -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        npt.assert_allclose(w.item(), ref_w, rtol=0, atol=1e-14)
