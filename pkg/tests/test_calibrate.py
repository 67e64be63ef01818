import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from gtsne.calibrate import calibrate_all, conditional_distribution, entropy, solve_sigma
from gtsne.errors import (
    CalibrationError,
    DegenerateGeometryError,
    InfeasiblePerplexityError,
    InputError,
    NoConvergenceError,
)
from gtsne.kernels import log_poly_kernel, power_kernel

GAUSS = power_kernel()
# brute-force bisection on log(1 + e^{-3s}) + 3s e^{-3s}/(1 + e^{-3s}) = log 1.5
SIGMA_012_ROW0 = 0.6043317643467366


def test_conditional_examples():
    p = conditional_distribution([[0], [1], [2]], 1, 3.7, GAUSS)
    assert p.tolist() == [0.5, 0.0, 0.5]
    assert conditional_distribution([[0.0], [4.0]], 0, 1.0, GAUSS).tolist() == [0.0, 1.0]
    p = conditional_distribution([[0], [1], [3]], 0, 1.0, GAUSS)
    np.testing.assert_allclose(p, [0.0, 0.9996646498695334, 0.0003353501304664781], rtol=1e-13)


def test_conditional_is_distribution():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 3))
    for i in range(20):
        p = conditional_distribution(X, i, 0.8, log_poly_kernel(2.0, 2.0))
        assert p[i] == 0 and np.all(p >= 0) and p.sum() == pytest.approx(1.0, abs=1e-14)


def test_conditional_errors():
    with pytest.raises(InputError):
        conditional_distribution([[0.0]], 0, 1.0, GAUSS)
    with pytest.raises(InputError):
        conditional_distribution([[0.0], [1.0]], 0, -1.0, GAUSS)


def test_entropy_examples():
    assert entropy([0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-15)
    assert entropy([1.0, 0.0]) == 0.0
    assert entropy([0.999665, 0.000335]) == pytest.approx(0.003016, abs=1e-6)
    with pytest.raises(InputError):
        entropy([1.2, -0.2])


def test_solve_sigma_three_points():
    s = solve_sigma([[0], [1], [2]], 0, GAUSS, 0.5)
    assert s == pytest.approx(SIGMA_012_ROW0, rel=1e-6)
    H = entropy(conditional_distribution([[0], [1], [2]], 0, s, GAUSS))
    assert abs(H - math.log(1.5)) <= 1e-8


def test_equidistant_is_degenerate():
    with pytest.raises(DegenerateGeometryError):
        solve_sigma([[0], [1], [2]], 1, GAUSS, 2 / 3)


def test_infeasible_perplexity():
    X = np.arange(5.0)[:, None]
    with pytest.raises(InfeasiblePerplexityError):
        solve_sigma(X, 0, GAUSS, 0.99)
    with pytest.raises(InfeasiblePerplexityError):
        calibrate_all(X, GAUSS, 0.1)


def test_coincident_cluster_is_degenerate():
    X = np.array([[0.0, 0.0]] * 6 + [[1.0, 1.0]])
    with pytest.raises(DegenerateGeometryError) as e:
        calibrate_all(X, GAUSS, 0.5)
    # the lone point sees six equidistant neighbours, so it is degenerate as well
    assert sorted(i for i, _ in e.value.failures) == list(range(7))


def test_square_symmetry():
    X = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    cal = calibrate_all(X, GAUSS, 0.6)
    np.testing.assert_allclose(cal.sigmas, cal.sigmas[0], rtol=1e-12)


def test_uniform_square_residuals():
    X = np.random.default_rng(0).uniform(size=(200, 2))
    cal = calibrate_all(X, GAUSS, 0.15)
    target = math.log(200 * 0.15)
    for i, s in enumerate(cal.sigmas):
        assert abs(entropy(conditional_distribution(X, i, s, GAUSS)) - target) <= 1e-8
    assert np.all(np.abs(cal.residuals) <= 1e-8)
    assert np.all(cal.sigmas > 0) and np.all(np.isfinite(cal.sigmas))


def test_matches_brute_force_oracle():
    X = [[0.0], [1.0], [3.0]]
    cal = calibrate_all(X, GAUSS, 0.5)
    for i, s in enumerate(cal.sigmas):
        p = oracles.conditional(X, i, s, lambda t: t, 2.0)
        H = -sum(v * math.log(v) for v in p if v > 0)
        assert abs(H - math.log(1.5)) <= 1e-8


def test_permutation_equivariance():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(30, 2))
    perm = rng.permutation(30)
    a = calibrate_all(X, GAUSS, 0.2).sigmas
    b = calibrate_all(X[perm], GAUSS, 0.2).sigmas
    np.testing.assert_allclose(b, a[perm], rtol=1e-6)


def test_scale_covariance():
    X = np.random.default_rng(3).normal(size=(25, 3))
    a = calibrate_all(X, GAUSS, 0.3).sigmas
    b = calibrate_all(3.0 * X, GAUSS, 0.3).sigmas
    np.testing.assert_allclose(b, a / 9.0, rtol=1e-6)


def test_tiny_scale_data_calibrates():
    X = np.random.default_rng(4).uniform(size=(40, 1)) * 1e-6
    cal = calibrate_all(X, GAUSS, 0.3)
    assert np.all(np.abs(cal.residuals) <= 1e-8)


def test_iteration_cap():
    X = np.random.default_rng(5).uniform(size=(30, 1))
    with pytest.raises(NoConvergenceError):
        calibrate_all(X, GAUSS, 0.3, max_iter=3)


def test_aggregate_error_lists_indices():
    X = np.array([[0.0]] * 4 + [[1.0], [2.0], [5.0], [9.0]])
    with pytest.raises(CalibrationError) as e:
        calibrate_all(X, GAUSS, 0.3)
    assert e.value.failures


@given(st.integers(4, 50), st.integers(0, 10_000))
def test_entropy_strictly_decreasing_in_sigma(n, seed):
    X = np.random.default_rng(seed).normal(size=(n, 2))
    sig = np.sort(np.random.default_rng(seed + 1).uniform(0.01, 5.0, 20))
    H = [entropy(conditional_distribution(X, 0, s, GAUSS)) for s in sig]
    assert all(b < a for a, b in zip(H, H[1:]) if a > 1e-12)


def test_heavy_tail_entropy_floor_is_infeasible():
    # log-poly weights decay like a power of distance, so entropy stays above a floor as sigma grows
    X = np.array([[0.0], [0.1], [0.33], [0.6], [1.0]])
    with pytest.raises(InfeasiblePerplexityError, match="entropy floor"):
        calibrate_all(X, log_poly_kernel(2.0, 2.0), 0.3)
    assert np.all(np.isfinite(calibrate_all(X, power_kernel(), 0.3).sigmas))


def test_rounding_level_tie_is_a_floor_not_a_jump():
    # 0.35 - 0.1 and 0.6 - 0.35 differ by one ulp; the tie must not be broken by huge sigma
    X = np.array([[0.0], [0.1], [0.35], [0.6], [1.0]])
    with pytest.raises(InfeasiblePerplexityError) as info:
        calibrate_all(X, power_kernel(), 0.3)
    assert [i for i, _ in info.value.failures] == [2]
    assert calibrate_all(X, power_kernel(), 0.5).sigmas[2] > 0
