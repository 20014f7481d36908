from __future__ import annotations

import math

import numpy as np
import pytest

from stgcn_sl import autograd as ag
from stgcn_sl.optim import AdamState, StepDecay, adam_step


def test_zero_gradient_leaves_params():
    p = ag.Tensor(np.array([1.5, -2.0]))
    state = AdamState(lr=0.01)
    adam_step({"p": p}, {"p": np.zeros(2)}, state)
    np.testing.assert_array_equal(p.data, [1.5, -2.0])


def test_single_step_hand_oracle():
    p = ag.Tensor(np.array([0.0]))
    state = AdamState(lr=0.01)
    adam_step({"p": p}, {"p": np.array([1.0])}, state)
    b1, b2, eps, g = 0.9, 0.999, 1e-8, 1.0
    m = (1 - b1) * g
    v = (1 - b2) * g * g
    m_hat, v_hat = m / (1 - b1), v / (1 - b2)
    expected = 0.0 - 0.01 * m_hat / (math.sqrt(v_hat) + eps)
    assert p.data[0] == pytest.approx(expected, abs=1e-15)
    assert p.data[0] == pytest.approx(-0.01 / (1 + 1e-8), abs=1e-15)


def test_two_steps_hand_oracle():
    p = ag.Tensor(np.array([0.5]))
    state = AdamState(lr=0.1)
    m = v = 0.0
    x = 0.5
    for t, g in enumerate([0.3, -0.7], start=1):
        adam_step({"p": p}, {"p": np.array([g])}, state)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        x -= 0.1 * (m / (1 - 0.9**t)) / (math.sqrt(v / (1 - 0.999**t)) + 1e-8)
    assert p.data[0] == pytest.approx(x, abs=1e-15)


def test_minimizes_square():
    x = ag.Tensor(np.array([1.0]), requires_grad=True)
    state = AdamState(lr=0.01)
    for step in range(1, 1001):
        loss = (x * x).sum()
        ag.backward(loss)
        adam_step({"x": x}, {"x": x.grad}, state)
        x.zero_grad()
        if abs(x.data[0]) < 1e-3:
            break
    assert abs(x.data[0]) < 1e-3
    assert step <= 1000


def test_shape_mismatch():
    with pytest.raises(ag.ShapeError):
        adam_step({"p": ag.Tensor(np.zeros(2))}, {"p": np.zeros(3)}, AdamState())


class TestStepDecay:
    def test_milestones(self):
        sched = StepDecay(0.01, 0.1, [2, 4])
        lrs = [sched.lr_at(e) for e in range(1, 7)]
        np.testing.assert_allclose(lrs, [0.01, 0.01, 0.001, 0.001, 1e-4, 1e-4])

    def test_no_milestones(self):
        assert StepDecay(0.05).lr_at(500) == 0.05

    def test_non_increasing(self):
        sched = StepDecay(1.0, 0.5, [3, 10, 11])
        lrs = [sched.lr_at(e) for e in range(1, 30)]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))
