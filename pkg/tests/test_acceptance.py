"""The ten acceptance criteria, one test each, at their stated tolerances.

Each test records a ``[PASS]``/``[FAIL]`` line that is printed at the end of
the pytest run. Run this file directly for the acceptance suite alone.
"""
import math
import tempfile
import time

import numpy as np
import pytest
import sympy as sp

import conftest
import oracles
from gtsne import hot
from gtsne.affinity import (
    GRADIENT_FACTOR,
    conditional_matrix,
    joint_affinities,
    kl_loss,
    embedding_affinities,
    loss_and_gradient,
    pair_gradient_term,
)
from gtsne.calibrate import calibrate_all, conditional_distribution, entropy, pairwise_dtheta
from gtsne.continuum import big_F_rows, chebyshev_gap, measure_from_spec, normalization_Zd
from gtsne.kernels import (
    cauchy_kernel,
    exp_kernel,
    gauss_kernel,
    log_poly_kernel,
    power_kernel,
    validate_input_kernel,
    validate_output_kernel,
)
from gtsne.study import StudyConfig, convergence_study, medians, non_increasing
from test_kernels import arctan_kernel

UNIFORM_1D = {"family": "uniform-box", "lower": [0.0], "upper": [1.0]}
STUDY_GRID = [100, 400, 1600]


def report(num, ok, text):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {text}"
    conftest.ACCEPTANCE_LINES.append((num, line))
    print(line)
    assert ok, line


def central_differences(P, Y, kernel, h=1e-5):
    fd = np.zeros_like(Y)
    for idx in np.ndindex(*Y.shape):
        up, dn = Y.copy(), Y.copy()
        up[idx] += h
        dn[idx] -= h
        fd[idx] = (
            kl_loss(P, embedding_affinities(up, kernel)) - kl_loss(P, embedding_affinities(dn, kernel))
        ) / (2 * h)
    return fd


def test_c1_gradient_matches_finite_differences():
    rng = np.random.default_rng(101)
    kin = power_kernel()
    worst, t0 = 0.0, time.perf_counter()
    for inst in range(50):
        n, s = int(rng.integers(3, 13)), int(rng.integers(1, 4))
        kout = cauchy_kernel() if inst % 2 == 0 else gauss_kernel()
        X = rng.normal(size=(n, int(rng.integers(1, 5))))
        P = joint_affinities(X, rng.uniform(0.2, 3.0, n), kin)
        Y = rng.normal(scale=1.0 if kout.family == "cauchy" else 0.7, size=(n, s))
        g = loss_and_gradient(P, Y, kout)[1]
        fd = central_differences(P, Y, kout)
        worst = max(worst, float(np.linalg.norm(g - fd) / np.linalg.norm(fd)))
    elapsed = time.perf_counter() - t0
    report(1, worst <= 1e-5 and elapsed < 10.0, f"gradient vs central differences, 50 instances, max rel err {worst:.2e} (<= 1e-5), {elapsed:.2f} s (< 10 s)")


def test_c2_calibration_hits_target_entropy():
    kin = power_kernel()
    calibrate_all(np.random.default_rng(0).uniform(size=(10, 2)), kin, 0.3)  # compile before timing
    X = np.random.default_rng(202).uniform(size=(200, 2))
    rho = 0.15
    t0 = time.perf_counter()
    cal = calibrate_all(X, kin, rho)
    elapsed = time.perf_counter() - t0
    target = math.log(200 * rho)
    # re-evaluated from scratch, not the solver's own residual
    dev = max(abs(entropy(conditional_distribution(X, i, cal.sigmas[i], kin)) - target) for i in range(200))
    report(2, dev <= 1e-8 and elapsed < 5.0, f"200 points in [0,1]^2, rho 0.15, max |H_i - log(n rho)| {dev:.2e} (<= 1e-8), {elapsed:.2f} s (< 5 s)")


def _discrete_F(X, kernel, rho, sigma_row):
    n = X.shape[0]
    wts = np.full((n, n), 1.0 / n)
    np.fill_diagonal(wts, 0.0)
    return hot.f_rows(pairwise_dtheta(X, kernel.theta), wts, sigma_row, math.log(rho), kernel)


def test_c3_row_functional_strictly_increasing():
    rng = np.random.default_rng(303)
    kernels = [power_kernel(), power_kernel(1.5, 1.0), power_kernel(2.0, 2.0), log_poly_kernel(2.0, 2.0)]
    violations, checked = 0, 0
    for k in range(20):
        n, d = int(rng.integers(5, 31)), int(rng.integers(1, 4))
        kin = kernels[k % len(kernels)]
        X = rng.uniform(size=(n, d))
        if kin.family == "log-poly":
            # small perplexities can sit below this kernel's entropy floor, so anchor on the median neighbour
            dth = pairwise_dtheta(X, kin.theta)
            sig = 1.0 / np.array([np.median(np.delete(row, i)) for i, row in enumerate(dth)])
            scales = np.geomspace(1e-2, 1e2, 16)
        else:
            # above a few sigma_i the light-tailed F is flat to double precision
            sig = calibrate_all(X, kin, 0.3).sigmas
            scales = np.geomspace(10**-3.5, 10**0.5, 16)
        F = np.stack([_discrete_F(X, kin, 0.3, sig * c) for c in scales])
        violations += int(np.sum(np.diff(F, axis=0) <= 0))
        checked += F.shape[1]
    measure = measure_from_spec(UNIFORM_1D)
    xs = np.linspace(0.0, 1.0, 11)[:, None]
    kin = power_kernel()
    F = np.stack([big_F_rows(measure, kin, 0.3, xs, np.full(len(xs), s)) for s in np.geomspace(0.1, 1000.0, 16)])
    violations += int(np.sum(np.diff(F, axis=0) <= 0))
    report(3, violations == 0, f"F strictly increasing on 16-point, 4-decade grids: {checked} sample rows + 11 continuum points, {violations} violations")


def _compatible_triple(rng):
    m = int(rng.integers(2, 41))
    g = np.sort(rng.normal(size=m))
    ratio = np.sort(rng.uniform(0.1, 5.0, m))[::-1]
    if rng.random() < 0.5:
        g, ratio = g[::-1].copy(), ratio[::-1].copy()
    h = rng.uniform(0.1, 3.0, m)
    w = rng.dirichlet(np.ones(m))
    return ratio * h, g, h, w


def test_c4_chebyshev_gap_oracle():
    rng = np.random.default_rng(404)
    min_gap, worst = math.inf, 0.0
    for _ in range(1000):
        f, g, h, w = _compatible_triple(rng)
        gap = chebyshev_gap(f, g, h, w)
        ref = oracles.double_sum_gap(f, g, h, w)
        min_gap = min(min_gap, gap)
        worst = max(worst, abs(gap - ref) / abs(ref))
    report(4, min_gap >= -1e-12 and worst <= 1e-10, f"1000 compatible triples, min gap {min_gap:.2e} (>= -1e-12), max rel err vs double sum {worst:.2e} (<= 1e-10)")


def test_c5_validator_discrimination():
    good_in = all(validate_input_kernel(power_kernel(), d).overall for d in (1, 2, 3))
    good_out = validate_output_kernel(cauchy_kernel()).overall
    arctan = validate_input_kernel(arctan_kernel(), 1)
    expo = validate_output_kernel(exp_kernel())
    arctan_ids = set(arctan.failed()) == {"w_unbounded", "w_prime_plus_t_w_second", "tail_integral"}
    exp_ids = expo.failed() == ["k_prime_at_zero"]
    ok = good_in and good_out and arctan_ids and exp_ids and not arctan.overall and not expo.overall
    report(5, ok, f"gaussian-form input and cauchy pass; arctan fails {sorted(arctan.failed())}; exp fails {expo.failed()}")


@pytest.fixture(scope="module")
def study():
    with tempfile.TemporaryDirectory() as out:
        cfg = StudyConfig(measure=UNIFORM_1D, n_grid=STUDY_GRID, seeds=[0, 1, 2], rho=0.3, dim=1, output_dir=out)
        t0 = time.perf_counter()
        rows = convergence_study(cfg)
        yield rows, time.perf_counter() - t0


def _series(rows, metric):
    m = medians(rows, metric)
    return [m.get(n, math.nan) for n in STUDY_GRID]


def _fmt(vals):
    return ", ".join(f"{v:.3g}" for v in vals)


@pytest.mark.slow
def test_c6_bandwidth_field_converges(study):
    rows, elapsed = study
    failed = [r.error for r in rows if r.error]
    dev = _series(rows, "sup_sigma_dev")
    ok = not failed and non_increasing(dev, slack=0.2) and elapsed < 600
    report(6, ok, f"median sup|sigma_n - sigma*| over n={STUDY_GRID}: [{_fmt(dev)}] non-increasing (20% slack), study {elapsed:.0f} s (< 600 s), failed cells {len(failed)}")


@pytest.mark.slow
def test_c7_loss_approaches_functional(study):
    rows, _ = study
    gap = _series(rows, "loss_I_gap")
    resid = _series(rows, "entropy_expansion_residual")
    ok = non_increasing(gap, slack=0.2) and non_increasing(resid, slack=0.0)
    report(7, ok, f"median |d - I_emp| [{_fmt(gap)}] (20% slack), entropy-expansion residual [{_fmt(resid)}] non-increasing")


@pytest.mark.slow
def test_c8_embedding_stays_bounded(study):
    rows, _ = study
    diam = medians(rows, "diameter")
    stat = max(r.max_stationarity_residual for r in rows)
    ok = diam[1600] <= 2 * diam[400] and stat <= 1e-5
    report(8, ok, f"median diameter n=400 {diam[400]:.3g}, n=1600 {diam[1600]:.3g} (<= 2x); max stationarity residual {stat:.2e} (<= 1e-5)")


def test_c9_reduces_to_classical_tsne():
    # symbolic: generic pair term -c (p - q) k'(r) / (r k(r)) (y_i - y_j) with k = 1/(1+r^2)
    r, p, q, c, dy = sp.symbols("r p q c dy", real=True)
    k = 1 / (1 + r**2)
    generic = -c * (p - q) * sp.diff(k, r) / (r * k) * dy
    classical = (p - q) * dy / (1 + r**2)
    ratio = sp.simplify(generic / classical)
    symbolic_ok = sp.simplify(ratio - 2 * c) == 0 and float(ratio.subs(c, GRADIENT_FACTOR)) == 4.0

    rng = np.random.default_rng(909)
    kout = cauchy_kernel()
    worst = 0.0
    for _ in range(100):
        s = int(rng.integers(1, 4))
        yi, yj = rng.normal(size=s), rng.normal(size=s)
        pv, qv = rng.uniform(0, 0.1, 2)
        term = pair_gradient_term(pv, qv, yi, yj, kout)
        want = 2 * GRADIENT_FACTOR * (pv - qv) * (yi - yj) / (1 + np.sum((yi - yj) ** 2))
        worst = max(worst, float(np.max(np.abs(term - want)) / max(np.max(np.abs(want)), 1e-300)))

    # input side: w(t) = t, theta = 2 gives the Gaussian conditional exp(-sigma d^2)
    X = rng.normal(size=(12, 3))
    sig = rng.uniform(0.3, 2.0, 12)
    C = conditional_matrix(X, sig, power_kernel())
    D2 = ((X[:, None] - X[None]) ** 2).sum(-1)
    E = np.exp(-sig[:, None] * D2)
    np.fill_diagonal(E, 0.0)
    input_err = float(np.max(np.abs(C - E / E.sum(1, keepdims=True))))
    ok = symbolic_ok and worst <= 1e-12 and input_err <= 1e-12
    report(9, ok, f"pair term = {ratio} (p-q)(y_i-y_j)/(1+r^2) with c={GRADIENT_FACTOR:g}; 100 pairs max rel err {worst:.1e}; gaussian conditional err {input_err:.1e} (<= 1e-12)")


def test_c10_normalization_constants():
    got = {
        "gauss d=1": (normalization_Zd(power_kernel(1.0, 2.0), 1), math.sqrt(math.pi)),
        "gauss d=2": (normalization_Zd(power_kernel(1.0, 2.0), 2), math.pi),
        "exp d=1": (normalization_Zd(power_kernel(1.0, 1.0), 1), 2.0),
    }
    errs = {k: abs(v - ref) for k, (v, ref) in got.items()}
    report(10, max(errs.values()) <= 1e-8, "Z_d errors " + ", ".join(f"{k} {e:.1e}" for k, e in errs.items()) + " (<= 1e-8)")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
