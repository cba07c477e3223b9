import numpy as np
import pytest

from socpsqp.model import EQ, LE, ConeProblem, LinearRow


@pytest.fixture
def simple_cone_problem():
    """min x0 s.t. (x0,x1,x2) in Q3, x1 = 3, x2 = 4; optimum (5,3,4)."""
    return ConeProblem(
        num_vars=3,
        objective=[1.0, 0.0, 0.0],
        rows=[LinearRow([1], [1.0], 3.0, EQ), LinearRow([2], [1.0], 4.0, EQ)],
        cones=[(0, 1, 2)],
    )


@pytest.fixture
def extremal_cone_problem():
    """min x0 + 0.1 x1 s.t. (x0,x1) in Q2, x0 <= 5; optimum at the apex."""
    return ConeProblem(
        num_vars=2,
        objective=[1.0, 0.1],
        rows=[LinearRow([0], [1.0], 5.0, LE)],
        cones=[(0, 1)],
    )


def random_cone_point(rng, dim, scale=5.0):
    v = rng.uniform(-scale, scale, size=dim)
    v[0] = abs(v[0])
    return v


def random_inside_cone(rng, dim, scale=5.0):
    """A point strictly inside the second-order cone."""
    v = rng.uniform(-scale, scale, size=dim)
    nb = np.linalg.norm(v[1:])
    v[0] = nb * (1.0 + rng.uniform(0.0, 1.0)) + rng.uniform(0.0, 1.0)
    return v
