import numpy as np
import pytest

from socpsqp.merit import accept_step, model_decrease, penalty_value, rho_new
from socpsqp.model import ConeProblem, ConeSpec, LinearRow


def _two_cone_problem(c):
    return ConeProblem(4, c, [], cones=[(0, 1), (2, 3)])


def test_penalty_value():
    prob = _two_cone_problem(np.array([1.0, 0.0, 1.0, 0.0]))
    x = np.array([1.0, 0.5, 2.0, 1.0])  # both cones satisfied
    assert penalty_value(prob, x, 10.0) == pytest.approx(3.0)
    x = np.array([1.0, 1.5, 2.0, 1.0])  # first cone violated by 0.5
    assert penalty_value(prob, x, 10.0) == pytest.approx(3.0 + 5.0)
    assert penalty_value(prob, x, 0.0) == pytest.approx(3.0)


def test_model_decrease():
    prob = _two_cone_problem(np.array([1.0, 0.0, 0.0, 0.0]))
    x = np.array([1.0, 1.5, 2.0, 1.0])
    d = np.array([-1.0, 0.0, 0.0, 0.0])
    assert model_decrease(prob, x, d, 10.0, {0}) == pytest.approx(-1.0 - 5.0)
    # feasible point: only the linear part remains
    xf = np.array([1.0, 0.5, 2.0, 1.0])
    assert model_decrease(prob, xf, d, 10.0, {0, 1}) == pytest.approx(-1.0)
    assert model_decrease(prob, xf, np.zeros(4), 10.0, {0, 1}) == 0.0


def test_accept_step():
    prob = _two_cone_problem(np.array([1.0, 0.0, 0.0, 0.0]))
    x = np.array([1.0, 1.5, 2.0, 1.0])
    d = np.array([-0.5, -1.0, 0.0, 0.0])  # moves inside, objective drops
    assert accept_step(prob, x, d, 10.0)
    # a step that increases the penalty while the model predicts decrease
    d_bad = np.array([2.0, 3.0, 0.0, 0.0])
    assert not accept_step(prob, x, d_bad, 10.0)
    # tiny change within the cancellation slack passes
    xf = np.array([1.0, 0.5, 2.0, 1.0])
    assert accept_step(prob, xf, np.zeros(4), 10.0)


def test_rho_new():
    cones = [ConeSpec((0, 1)), ConeSpec((2, 3))]
    z = np.array([7.0, 0.0, 3.0, 0.0])
    assert rho_new(50.0, z, cones) == 50.0
    assert rho_new(5.0, z, cones) == 14.0
    # boundary: the update triggers on equality
    assert rho_new(7.0, z, cones) == 14.0
    assert rho_new(1.0, z, []) == 1.0
