"""Adam behavior against a handwritten scalar simulation."""

import numpy as np
import pytest

from atnm.errors import TrainingError
from atnm.nn import Adam
from atnm.nn.tensor import Parameter

from oracles import adam_scalar


def test_zero_gradient_no_decay_is_identity():
    p = Parameter(np.array([1.0, -2.0, 3.0]), "p")
    opt = Adam([p], lr=5e-4, weight_decay=0.0)
    before = p.data.copy()
    for _ in range(5):
        opt.step()
    np.testing.assert_array_equal(p.data, before)


def test_constant_gradient_unit_step_property():
    # With a constant gradient the per-step move approaches lr.
    p = Parameter(np.array([0.0]), "p")
    opt = Adam([p], lr=5e-4)
    prev = p.data.copy()
    step_size = None
    for _ in range(100):
        p.grad[:] = 2.7
        opt.step()
        step_size = abs(p.data[0] - prev[0])
        prev = p.data.copy()
    assert abs(step_size - 5e-4) / 5e-4 < 0.01


def test_single_step_matches_scalar_oracle():
    p = Parameter(np.array([0.0]), "p")
    opt = Adam([p], lr=5e-4)
    p.grad[:] = 1.0
    opt.step()
    expected = adam_scalar([1.0], lr=5e-4)[0]
    assert abs(p.data[0] - expected) < 1e-12


def test_many_steps_match_scalar_oracle():
    rng = np.random.default_rng(0)
    grads = rng.standard_normal(50)
    p = Parameter(np.array([0.3]), "p")
    opt = Adam([p], lr=1e-2)
    for g in grads:
        p.grad[:] = g
        opt.step()
    expected = adam_scalar(grads, lr=1e-2, x0=0.3)[-1]
    assert abs(p.data[0] - expected) < 1e-12


def test_decoupled_weight_decay_applied_before_update():
    p = Parameter(np.array([2.0]), "p")
    opt = Adam([p], lr=1e-3, weight_decay=0.1)
    p.grad[:] = 0.0
    opt.step()
    # zero gradient: only the decay term moves the value
    np.testing.assert_allclose(p.data, [2.0 * (1.0 - 1e-3 * 0.1)])


def test_gradients_zeroed_after_step():
    p = Parameter(np.ones(3), "p")
    opt = Adam([p])
    p.grad[:] = 5.0
    opt.step()
    np.testing.assert_array_equal(p.grad, np.zeros(3))


def test_non_finite_gradient_names_parameter():
    p = Parameter(np.ones(2), "layer.weight")
    opt = Adam([p])
    p.grad[:] = np.nan
    with pytest.raises(TrainingError, match="layer.weight"):
        opt.step()
