import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socpsqp.cuts import init_Y0
from socpsqp.soc import (
    NondifferentiableError,
    certificate_decomposition,
    cut_value,
    dual_cone_decompose,
    grad_residual,
    hess_residual,
    in_outer_cone,
    phi_certificate,
    residual,
)
from conftest import random_inside_cone


def test_residual_examples():
    assert residual([1.0, 0.0, 0.0]) == -1.0
    assert residual([5.0, 3.0, 4.0]) == 0.0
    assert residual([0.0, 1.0]) == 1.0


def test_grad_examples():
    assert np.allclose(grad_residual([5.0, 3.0, 4.0]), [-1.0, 0.6, 0.8])
    assert np.allclose(grad_residual([0.0, 1.0]), [-1.0, 1.0])
    with pytest.raises(NondifferentiableError):
        grad_residual([2.0, 0.0, 0.0])


def test_grad_norm_and_identity():
    rng = np.random.default_rng(0)
    for _ in range(100):
        p = rng.normal(size=rng.integers(2, 7))
        if np.linalg.norm(p[1:]) == 0.0:
            continue
        g = grad_residual(p)
        assert np.linalg.norm(g) ** 2 == pytest.approx(2.0, abs=1e-12)
        assert np.linalg.norm(g[1:]) == pytest.approx(1.0, abs=1e-12)
        assert g @ p == pytest.approx(residual(p), abs=1e-10)


def test_hess_examples():
    # dimension-2 cones have identically zero curvature
    assert np.allclose(hess_residual([3.0, 0.7]), np.zeros((2, 2)))
    H = hess_residual([2.0, 1.0, 0.0])
    assert np.allclose(H[1:, 1:], [[0.0, 0.0], [0.0, 1.0]])
    assert np.allclose(H[0], 0.0) and np.allclose(H[:, 0], 0.0)
    with pytest.raises(NondifferentiableError):
        hess_residual([2.0, 0.0])


def test_hess_matches_finite_differences():
    rng = np.random.default_rng(7)
    h = 1e-6
    for _ in range(30):
        p = rng.uniform(-3, 3, size=rng.integers(3, 6))
        if np.linalg.norm(p[1:]) < 0.5:
            continue
        H = hess_residual(p)
        fd = np.zeros_like(H)
        for i in range(p.size):
            e = np.zeros_like(p)
            e[i] = h
            fd[:, i] = (grad_residual(p + e) - grad_residual(p - e)) / (2 * h)
        assert np.max(np.abs(H - fd)) <= 1e-5 * max(1.0, np.max(np.abs(H)))


def test_hess_psd_with_barred_nullspace():
    rng = np.random.default_rng(11)
    for _ in range(50):
        p = rng.uniform(-4, 4, size=rng.integers(2, 8))
        if np.linalg.norm(p[1:]) < 1e-3:
            continue
        H = hess_residual(p)
        w = np.linalg.eigvalsh(H)
        assert w.min() >= -1e-10
        pad = np.concatenate([[0.0], p[1:]])
        assert np.max(np.abs(H @ pad)) <= 1e-10 * max(1.0, np.linalg.norm(p))


def test_cut_value_examples():
    # axis generator gives the sparse cut x1 - x0
    y = np.array([0.0, 1.0, 0.0])
    x = np.array([2.0, 0.7, -0.3])
    assert cut_value(y, x) == pytest.approx(x[1] - x[0])
    # tangency at (1, ybar/|ybar|)
    y = np.array([3.0, 1.0, -2.0])
    xt = np.concatenate([[1.0], y[1:] / np.linalg.norm(y[1:])])
    assert cut_value(y, xt) == pytest.approx(0.0, abs=1e-15)
    assert cut_value(np.array([0.0, 1.0]), np.array([1.0, 2.0])) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        cut_value(np.array([1.0, 0.0]), np.array([1.0, 1.0]))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_cuts_valid_on_cone_points(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(2, 6))
    y = rng.uniform(-5, 5, size=dim)
    if np.linalg.norm(y[1:]) == 0.0:
        y[1] = 1.0
    x = random_inside_cone(rng, dim)
    assert cut_value(y, x) <= 1e-12


def test_in_outer_cone():
    Y = init_Y0(3)
    # a point outside the cone but inside the initial outer approximation
    x = np.array([1.0, 0.5, -0.9])
    assert residual(x) > 0
    assert in_outer_cone(x, Y)
    assert not in_outer_cone(np.array([-0.5, 0.1, 0.0]), Y)
    rng = np.random.default_rng(1)
    for _ in range(100):
        p = random_inside_cone(rng, 3)
        assert in_outer_cone(p, Y)


def test_phi_certificate_examples():
    assert phi_certificate([5.0, 0.0, 0.0], [0.0, 1.0, 0.0]) == pytest.approx(3.0)
    assert phi_certificate([1.0, 2.0, 0.0], [0.0, 1.0, 0.0]) == pytest.approx(-3.0)
    assert phi_certificate([2.0, -1.0], [0.0, 1.0]) == pytest.approx(1.0)


def test_certificate_decomposition_reconstructs():
    rng = np.random.default_rng(5)
    hits = 0
    while hits < 40:
        dim = int(rng.integers(2, 6))
        y = rng.uniform(-3, 3, size=dim)
        if np.linalg.norm(y[1:]) == 0.0:
            continue
        y[0] = abs(y[0])
        z = rng.uniform(-2, 2, size=dim)
        z[0] = rng.uniform(0, 12)
        if phi_certificate(z, y) < 0:
            continue
        hits += 1
        sp, sm, sy, eta = certificate_decomposition(z, y)
        assert sp.min() >= 0 and sm.min() >= 0 and sy >= 0 and eta >= 0
        rebuilt = np.zeros(dim)
        for i in range(1, dim):
            em = np.zeros(dim)
            em[i] = -1.0
            ep = np.zeros(dim)
            ep[i] = 1.0
            rebuilt -= sp[i - 1] * grad_residual(em) + sm[i - 1] * grad_residual(ep)
        rebuilt -= sy * grad_residual(y)
        rebuilt[0] += eta
        assert np.max(np.abs(rebuilt - z)) <= 1e-12 * max(1.0, np.max(np.abs(z)))


def test_dual_cone_decompose_trivial_cases():
    Y = init_Y0(3)
    y0 = Y.generators[0]
    z = -grad_residual(y0)
    sigma, eta = dual_cone_decompose(z, Y)
    assert eta == pytest.approx(0.0, abs=1e-9)
    rebuilt = -sum(s * grad_residual(g) for s, g in zip(sigma, Y.generators))
    rebuilt[0] += eta
    assert np.max(np.abs(rebuilt - z)) <= 1e-9

    e0 = np.array([1.0, 0.0, 0.0])
    sigma, eta = dual_cone_decompose(e0, Y)
    assert eta == pytest.approx(1.0, abs=1e-9)
    assert np.max(np.abs(sigma)) <= 1e-9


def test_phi_implies_decomposition():
    # whenever the certificate holds, the dual-cone feasibility problem on
    # Y0 + {y} must find a decomposition
    from socpsqp.cuts import HyperplaneSet

    rng = np.random.default_rng(9)
    hits = 0
    while hits < 25:
        dim = int(rng.integers(2, 5))
        y = rng.uniform(-3, 3, size=dim)
        if np.linalg.norm(y[1:]) == 0.0:
            continue
        y[0] = abs(y[0])
        z = rng.uniform(-2, 2, size=dim)
        z[0] = rng.uniform(0, 12)
        if phi_certificate(z, y) < 0:
            continue
        hits += 1
        Y = init_Y0(dim)
        Yy = HyperplaneSet(list(Y.generators) + [y])
        out = dual_cone_decompose(z, Yy)
        assert out is not None
        sigma, eta = out
        assert sigma.min() >= -1e-12 and eta >= -1e-12
