import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from gtsne.affinity import (
    GRADIENT_FACTOR,
    check_affinity,
    embedding_affinities,
    gradient,
    joint_affinities,
    kl_loss,
    loss_and_gradient,
    pair_gradient_term,
)
from gtsne.calibrate import calibrate_all
from gtsne.errors import DivergenceError, InputError
from gtsne.kernels import cauchy_kernel, exp_kernel, gauss_kernel, power_kernel

GAUSS_IN = power_kernel()
CAUCHY = cauchy_kernel()
# brute-force joint matrix for {0, 1, 3}, rho = 1/2 (bandwidths solved with brentq on the closed form)
P013 = [
    [0.0, 0.28657449766751175, 0.046758835665821584],
    [0.28657449766751175, 0.0, 0.16666666666666666],
    [0.046758835665821584, 0.16666666666666666, 0.0],
]


def random_P(rng, n):
    A = rng.uniform(0.01, 1.0, size=(n, n))
    A = A + A.T
    np.fill_diagonal(A, 0.0)
    return A / A.sum()


def test_joint_two_points():
    P = joint_affinities([[0.0], [1.0]], [1.0, 2.0], GAUSS_IN)
    assert P.tolist() == [[0.0, 0.5], [0.5, 0.0]]


def test_joint_equilateral():
    X = [[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]]
    P = joint_affinities(X, [0.7, 0.7, 0.7], GAUSS_IN)
    off = P[~np.eye(3, dtype=bool)]
    np.testing.assert_allclose(off, 1 / 6, rtol=1e-14)


def test_joint_three_points_oracle():
    X = [[0.0], [1.0], [3.0]]
    cal = calibrate_all(X, GAUSS_IN, 0.5)
    P = joint_affinities(X, cal.sigmas, GAUSS_IN)
    np.testing.assert_allclose(P, P013, rtol=1e-7, atol=1e-12)
    check_affinity(P)
    np.testing.assert_allclose(P, oracles.joint(X, cal.sigmas, lambda t: t, 2.0), rtol=1e-13)


def test_joint_shape_mismatch():
    with pytest.raises(InputError):
        joint_affinities([[0.0], [1.0], [2.0]], [1.0, 1.0], GAUSS_IN)


def test_q_examples():
    assert embedding_affinities([[3.0], [-1.0]], CAUCHY).tolist() == [[0.0, 0.5], [0.5, 0.0]]
    Q = embedding_affinities([[0.0], [1.0], [3.0]], CAUCHY)
    assert Q[0, 1] == pytest.approx(0.3125, rel=1e-14)
    assert Q[0, 2] == pytest.approx(0.0625, rel=1e-14)
    assert Q[1, 2] == pytest.approx(0.125, rel=1e-14)
    T = embedding_affinities([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]], CAUCHY)
    np.testing.assert_allclose(T[~np.eye(3, dtype=bool)], 1 / 6, rtol=1e-14)


def test_kl_examples():
    Q = embedding_affinities([[0.0], [1.0], [3.0]], CAUCHY)
    assert kl_loss(Q, Q) == 0.0
    U = np.full((3, 3), 1 / 6)
    np.fill_diagonal(U, 0.0)
    # (1/3) * [log((1/6)/0.3125) + log((1/6)/0.0625) + log((1/6)/0.125)]
    assert kl_loss(U, Q) == pytest.approx(0.2133008886803776, rel=1e-14)


def test_kl_divergence_error():
    P = np.array([[0.0, 0.5], [0.5, 0.0]])
    with pytest.raises(DivergenceError):
        kl_loss(P, np.zeros((2, 2)))


def test_gradient_zero_cases():
    rng = np.random.default_rng(0)
    Y = rng.normal(size=(5, 2))
    Q = embedding_affinities(Y, CAUCHY)
    assert np.max(np.abs(gradient(Q, Y, CAUCHY))) < 1e-15
    P2 = np.array([[0.0, 0.5], [0.5, 0.0]])
    assert np.all(gradient(P2, rng.normal(size=(2, 3)), CAUCHY) == 0.0)


def fd_gradient(P, Y, kernel, h=1e-5):
    G = np.zeros_like(Y)
    for i in range(Y.shape[0]):
        for a in range(Y.shape[1]):
            Yp, Ym = Y.copy(), Y.copy()
            Yp[i, a] += h
            Ym[i, a] -= h
            G[i, a] = (oracles.loss(P.tolist(), Yp.tolist(), lambda r: float(kernel.k(np.asarray(r)))) -
                       oracles.loss(P.tolist(), Ym.tolist(), lambda r: float(kernel.k(np.asarray(r))))) / (2 * h)
    return G


def test_gradient_factor_audit():
    """c = 2 matches finite differences of the loss; c = 1 is off by exactly half."""
    rng = np.random.default_rng(1)
    P = random_P(rng, 4)
    Y = rng.normal(size=(4, 2))
    g = gradient(P, Y, CAUCHY)
    fd = fd_gradient(P, Y, CAUCHY)
    assert np.linalg.norm(g - fd) <= 1e-5 * np.linalg.norm(fd)
    assert np.linalg.norm(g / GRADIENT_FACTOR - fd) > 0.4 * np.linalg.norm(fd)
    assert GRADIENT_FACTOR == 2.0


def test_loss_matches_oracle():
    rng = np.random.default_rng(2)
    for kernel in (CAUCHY, gauss_kernel(), cauchy_kernel(2.5)):
        P = random_P(rng, 7)
        Y = rng.normal(size=(7, 3))
        loss, _ = loss_and_gradient(P, Y, kernel)
        ref = oracles.loss(P.tolist(), Y.tolist(), lambda r: float(kernel.k(np.asarray(r))))
        assert loss == pytest.approx(ref, rel=1e-12)
        assert loss == pytest.approx(kl_loss(P, embedding_affinities(Y, kernel)), rel=1e-12)


def test_coincident_points_gradient_finite():
    P = random_P(np.random.default_rng(3), 4)
    Y = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    for kernel in (CAUCHY, exp_kernel()):
        g = gradient(P, Y, kernel)
        assert np.all(np.isfinite(g))


def test_pair_term_classical_form():
    rng = np.random.default_rng(4)
    for _ in range(20):
        yi, yj = rng.normal(size=2), rng.normal(size=2)
        p, q = rng.uniform(size=2) * 0.1
        t = pair_gradient_term(p, q, yi, yj, CAUCHY)
        ref = 4 * (p - q) * (yi - yj) / (1 + np.sum((yi - yj) ** 2))
        np.testing.assert_allclose(t, ref, rtol=1e-13)
    assert np.all(pair_gradient_term(0.1, 0.2, [1.0], [1.0], CAUCHY) == 0.0)


coords = st.integers(2, 9).flatmap(
    lambda n: st.tuples(
        st.just(n),
        st.integers(1, 3).flatmap(lambda s: arrays(np.float64, (n, s), elements=st.floats(-5, 5))),
        st.integers(0, 2**32 - 1),
    )
)


@given(coords, st.sampled_from([CAUCHY, gauss_kernel()]))
def test_translation_and_rotation_invariance(data, kernel):
    n, Y, seed = data
    rng = np.random.default_rng(seed)
    P = random_P(rng, n)
    l0, g0 = loss_and_gradient(P, Y, kernel)
    shift = rng.normal(size=Y.shape[1])
    l1, g1 = loss_and_gradient(P, Y + shift, kernel)
    assert l1 == pytest.approx(l0, rel=1e-9, abs=1e-12)
    np.testing.assert_allclose(g1, g0, atol=1e-9)
    R, _ = np.linalg.qr(rng.normal(size=(Y.shape[1], Y.shape[1])))
    l2, _ = loss_and_gradient(P, Y @ R, kernel)
    assert l2 == pytest.approx(l0, rel=1e-9, abs=1e-12)
    assert l0 >= -1e-12


@given(coords)
def test_gradient_rows_sum_to_zero(data):
    n, Y, seed = data
    P = random_P(np.random.default_rng(seed), n)
    g = gradient(P, Y, CAUCHY)
    assert np.all(np.abs(g.sum(axis=0)) <= 1e-12 * max(1.0, np.abs(g).max()) * n)


def test_check_affinity_rejects():
    with pytest.raises(InputError):
        check_affinity(np.array([[0.0, 0.6], [0.4, 0.0]]))
    with pytest.raises(InputError):
        check_affinity(np.array([[0.1, 0.4], [0.4, 0.1]]))
