"""Per-point bandwidth calibration.

For each point ``i`` we look for the ``sigma_i`` at which the conditional
distribution ``p_{.|i}`` has entropy ``log(n * rho)``. Entropy is strictly
decreasing in ``sigma`` for admissible kernels, so plain bisection (in
``log sigma``) over an expanding bracket is both safe and sufficient.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import hot
from .errors import (
    CalibrationError,
    CalibrationUnderflowError,
    DegenerateGeometryError,
    InfeasiblePerplexityError,
    InputError,
    NoConvergenceError,
)
from .kernels import InputKernel

TOL = 1e-8
MAX_ITER = 100
DELTA = 1e-4
EXPAND_FACTOR = 10.0
MAX_EXPANSIONS = 40
TIE_RESOLUTION = 1e3


@dataclass
class CalibrationResult:
    sigmas: np.ndarray
    residuals: np.ndarray  # entropy minus log(n rho), nats
    iterations: np.ndarray
    bracket: tuple

    @property
    def n(self):
        return len(self.sigmas)

    def rows(self):
        for i, (s, r, it) in enumerate(zip(self.sigmas, self.residuals, self.iterations)):
            yield i, float(s), float(r), int(it)


def as_points(points) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise InputError(f"points must be an n x d array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError("points contain non-finite coordinates")
    return x


def pairwise_dtheta(points, theta, rows=None):
    """``|x_i - x_j|**theta`` for the requested rows (all rows by default)."""
    x = as_points(points)
    src = x if rows is None else x[np.asarray(rows)]
    diff = src[:, None, :] - x[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return np.power(dist, theta)


def conditional_distribution(points, i, sigma, kernel: InputKernel) -> np.ndarray:
    x = as_points(points)
    n = x.shape[0]
    if n < 2:
        raise InputError("need at least two points")
    if not (sigma > 0 and math.isfinite(sigma)):
        raise InputError(f"sigma must be positive and finite, got {sigma!r}")
    dist = np.linalg.norm(x - x[i], axis=1)
    with np.errstate(over="ignore", invalid="ignore"):
        W = kernel.w(sigma * np.power(dist, kernel.theta))
    others = np.arange(n) != i
    finite = others & np.isfinite(W)
    if not finite.any():
        raise CalibrationUnderflowError(f"all kernel weights of point {i} underflow at sigma={sigma:g}", index=i)
    wmin = W[finite].min()
    p = np.zeros(n)
    p[finite] = np.exp(-(W[finite] - wmin))
    return p / p.sum()


def entropy(p) -> float:
    """Shannon entropy in nats, with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise InputError("probability vector has negative entries")
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def _check_target(n, rho):
    if not 0.0 < rho < 1.0:
        raise InfeasiblePerplexityError(f"rho must lie in (0, 1), got {rho}")
    perp = n * rho
    # perp == n - 1 is kept: it is attained only by rows whose neighbours are
    # all equidistant, and those are then reported as degenerate
    if not 1.0 < perp <= (n - 1) * (1 + 1e-12):
        raise InfeasiblePerplexityError(
            f"perplexity n*rho = {perp:g} outside the attainable range (1, {n - 1}) for n = {n}"
        )


def _calibrate_rows(x, rows, kernel, rho, tol, delta, max_iter):
    """Returns ``(sigma, resid, iters, bracket, errors)``; ``errors`` maps row position to exception."""
    n = x.shape[0]
    _check_target(n, rho)
    rows = np.asarray(rows)
    m = rows.size
    theta = kernel.theta
    log_rho = math.log(rho)
    target = math.log(n * rho)

    dth = pairwise_dtheta(x, theta, rows)
    wts = np.full((m, n), 1.0 / n)
    wts[np.arange(m), rows] = 0.0

    lo0, hi0 = n ** (-theta / 2.0), delta ** (-theta)
    # beyond sigma_cap, distances equal up to rounding would get visibly different weights
    nn = np.where(dth > 0, dth, np.inf).min(axis=1)
    sigma_cap = np.where(np.isfinite(nn), 1.0 / (TIE_RESOLUTION * np.finfo(float).eps * nn), np.inf)
    lo = np.full(m, min(lo0, hi0))
    hi = np.minimum(np.full(m, max(lo0, hi0)), sigma_cap)
    errors = {}

    # coincident neighbours keep weight 1 at every sigma, so entropy never drops below log(count)
    coincident = (dth == 0.0).sum(axis=1) - 1
    for r in np.flatnonzero((coincident > 0) & (target <= np.log(np.maximum(coincident, 1)) + tol)):
        errors[r] = DegenerateGeometryError(
            f"point {rows[r]} has {coincident[r]} coincident neighbours; entropy cannot fall to log(n rho)",
            index=int(rows[r]),
        )

    F_lo = hot.f_rows(dth, wts, lo, log_rho, kernel)
    F_hi = hot.f_rows(dth, wts, hi, log_rho, kernel)
    for r in np.flatnonzero(~(np.isfinite(F_lo) & np.isfinite(F_hi))):
        errors.setdefault(r, CalibrationUnderflowError(f"kernel weights of point {rows[r]} underflow inside the bracket", index=int(rows[r])))

    for _ in range(MAX_EXPANSIONS):
        grow_lo = np.flatnonzero(F_lo > 0)
        grow_hi = np.flatnonzero((F_hi < 0) & (hi < sigma_cap))
        grow_lo = np.array([r for r in grow_lo if r not in errors], dtype=int)
        grow_hi = np.array([r for r in grow_hi if r not in errors], dtype=int)
        if grow_lo.size == 0 and grow_hi.size == 0:
            break
        if grow_lo.size:
            lo[grow_lo] /= EXPAND_FACTOR
            F_lo[grow_lo] = hot.f_rows(dth[grow_lo], wts[grow_lo], lo[grow_lo], log_rho, kernel)
        if grow_hi.size:
            hi[grow_hi] = np.minimum(hi[grow_hi] * EXPAND_FACTOR, sigma_cap[grow_hi])
            F_hi[grow_hi] = hot.f_rows(dth[grow_hi], wts[grow_hi], hi[grow_hi], log_rho, kernel)
    for r in np.flatnonzero(np.abs(F_hi - F_lo) <= tol):
        errors.setdefault(
            r,
            DegenerateGeometryError(f"entropy of point {rows[r]} is constant in sigma (equidistant neighbours)", index=int(rows[r])),
        )
    # entropy has a positive floor when the kernel is heavy-tailed (log-poly) or
    # several nearest neighbours tie; targets below it cannot be met
    for r in np.flatnonzero(np.isfinite(F_hi) & (F_hi < 0)):
        errors.setdefault(
            r,
            InfeasiblePerplexityError(
                f"perplexity n*rho = {n * rho:g} is below the large-sigma entropy floor of point {rows[r]} "
                f"for the {kernel.family} kernel (F = {F_hi[r]:.3e} at sigma = {hi[r]:.1e})",
                index=int(rows[r]),
            ),
        )
    for r in np.flatnonzero((F_lo > 0) | (F_hi < 0) | ~np.isfinite(F_lo) | ~np.isfinite(F_hi)):
        errors.setdefault(
            r,
            NoConvergenceError(f"could not bracket sigma for point {rows[r]} within {MAX_EXPANSIONS} expansions", index=int(rows[r])),
        )

    ok = np.array([r for r in range(m) if r not in errors], dtype=int)
    sigma = np.full(m, np.nan)
    resid = np.full(m, np.nan)
    iters = np.zeros(m, dtype=np.int64)
    if ok.size:
        s, F, it = hot.bisect_rows(dth[ok], wts[ok], log_rho, lo[ok], hi[ok], tol, max_iter, kernel)
        sigma[ok], resid[ok], iters[ok] = s, -F, it
        for r in ok[np.abs(F) > tol]:
            errors[r] = NoConvergenceError(
                f"bisection for point {rows[r]} stopped with residual {resid[r]:.3e} after {iters[r]} iterations",
                index=int(rows[r]),
            )
    return sigma, resid, iters, (float(min(lo0, hi0)), float(max(lo0, hi0))), errors


def solve_sigma(points, i, kernel: InputKernel, rho, tol=TOL, delta=DELTA, max_iter=MAX_ITER) -> float:
    x = as_points(points)
    if not 0 <= i < x.shape[0]:
        raise InputError(f"index {i} out of range")
    sigma, _, _, _, errors = _calibrate_rows(x, [i], kernel, rho, tol, delta, max_iter)
    if errors:
        raise errors[0]
    return float(sigma[0])


def calibrate_all(points, kernel: InputKernel, rho, tol=TOL, delta=DELTA, max_iter=MAX_ITER) -> CalibrationResult:
    """Calibrate every point. Per-point failures are collected into one :class:`CalibrationError`."""
    x = as_points(points)
    n = x.shape[0]
    sigma, resid, iters, bracket, errors = _calibrate_rows(x, np.arange(n), kernel, rho, tol, delta, max_iter)
    if errors:
        failures = sorted(errors.items())
        kinds = {type(e) for _, e in failures}
        cls = kinds.pop() if len(kinds) == 1 else CalibrationError
        shown = ", ".join(str(i) for i, _ in failures[:10])
        more = "" if len(failures) <= 10 else f" (+{len(failures) - 10} more)"
        raise cls(f"calibration failed for {len(failures)} point(s): {shown}{more}; first: {failures[0][1]}", failures=failures)
    return CalibrationResult(sigmas=sigma, residuals=resid, iterations=iters, bracket=bracket)
