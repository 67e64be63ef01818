"""Continuum counterparts of the discrete objects, evaluated by quadrature.

A measure is anything with ``nodes`` (``N x d``) and nonnegative ``weights``
summing to one: either a :class:`ContinuumMeasure` (density times composite
trapezoid weights on a box) or an :class:`EmpiricalMeasure` (atoms of mass
``1/n``). All integrals against a measure are then weighted sums over nodes,
and the row functional from :mod:`gtsne._numpy_kernels` gives ``F``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from . import hot
from .affinity import GRADIENT_FACTOR, gradient, joint_affinities
from .calibrate import as_points, calibrate_all
from .errors import (
    ConfigError,
    EvaluationError,
    InfeasiblePerplexityError,
    InputError,
    KernelInvalidError,
    PreconditionError,
    ResolutionError,
)
from .kernels import InputKernel, OutputKernel, decade_integral

DEFAULT_NODES = {1: 2048, 2: 256}
MASS_TOL = 1e-6
# the grid cannot resolve a kernel that puts more than this share of Z on one node
MAX_NODE_SHARE = 0.5
# exp(-w) underflows past this
UNDERFLOW_W = -math.log(np.finfo(float).tiny)
SIGMA_TOL = 1e-10
EXPAND_FACTOR = 10.0
MAX_EXPANSIONS = 40
ROW_CHUNK = 256


def _trapezoid_1d(lo, hi, num):
    x = np.linspace(lo, hi, num)
    w = np.full(num, (hi - lo) / (num - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return x, w


def _vec(v, d, what):
    a = np.atleast_1d(np.asarray(v, dtype=float))
    if a.size == 1 and d > 1:
        a = np.full(d, float(a[0]))
    if a.shape != (d,) or not np.all(np.isfinite(a)):
        raise ConfigError(f"{what} must be {d} finite numbers, got {v!r}")
    return a


def _uniform_density(lower, upper):
    vol = float(np.prod(upper - lower))

    def f(x):
        inside = np.all((x >= lower) & (x <= upper), axis=1)
        return np.where(inside, 1.0 / vol, 0.0)

    return f


def _trunc_gauss_density(mean, std, lower, upper):
    a, b = (lower - mean) / std, (upper - mean) / std
    mass = special.ndtr(b) - special.ndtr(a)
    norm = float(np.prod(std * mass * math.sqrt(2 * math.pi)))

    def f(x):
        inside = np.all((x >= lower) & (x <= upper), axis=1)
        z = (x - mean) / std
        return np.where(inside, np.exp(-0.5 * np.sum(z * z, axis=1)) / norm, 0.0)

    return f


@dataclass(frozen=True, eq=False)
class ContinuumMeasure:
    """Compactly supported density on a box with a tensor trapezoid rule."""

    dim: int
    lower: np.ndarray
    upper: np.ndarray
    density: Callable
    nodes_per_axis: int
    spec: dict = field(default_factory=dict)
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)
    raw_mass: float = field(init=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError(f"quadrature supports d = 1 or 2, got {self.dim}")
        if self.nodes_per_axis < 2:
            raise ConfigError("need at least 2 nodes per axis")
        if not np.all(self.upper > self.lower):
            raise ConfigError("box upper corner must exceed lower corner on every axis")
        axes = [_trapezoid_1d(lo, hi, self.nodes_per_axis) for lo, hi in zip(self.lower, self.upper)]
        grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=1)
        qw = np.ones(1)
        for _, w in axes:
            qw = np.outer(qw, w).ravel()
        dens = np.asarray(self.density(nodes), dtype=float)
        if dens.shape != (nodes.shape[0],) or np.any(~np.isfinite(dens)) or np.any(dens < 0):
            raise ConfigError("density must be finite and nonnegative on every node")
        wts = qw * dens
        mass = float(wts.sum())
        if not mass > 0:
            raise ConfigError("density integrates to zero on the quadrature grid")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", wts / mass)
        object.__setattr__(self, "raw_mass", mass)

    def contains(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def refined(self, factor):
        """Same density on a grid with ``factor`` times as many intervals per axis."""
        num = (self.nodes_per_axis - 1) * int(factor) + 1
        return ContinuumMeasure(self.dim, self.lower, self.upper, self.density, num, dict(self.spec, nodes=num))

    def mean(self):
        return self.weights @ self.nodes

    @classmethod
    def from_spec(cls, spec, nodes=None):
        """Build from a JSON-style dict; see :func:`measure_from_spec`."""
        return measure_from_spec(spec, nodes)


def _component(spec):
    if not isinstance(spec, dict) or "family" not in spec:
        raise ConfigError(f"measure spec must be an object with a 'family' key, got {spec!r}")
    fam = spec["family"]
    allowed = {
        "uniform-box": {"family", "lower", "upper", "nodes"},
        "trunc-gauss": {"family", "lower", "upper", "mean", "std", "nodes"},
        "mixture": {"family", "components", "weights", "nodes"},
    }
    if fam not in allowed:
        raise ConfigError(f"unknown measure family {fam!r}; expected one of {sorted(allowed)}")
    extra = set(spec) - allowed[fam]
    if extra:
        raise ConfigError(f"unknown keys for {fam}: {sorted(extra)}")
    if fam == "mixture":
        comps = spec.get("components")
        if not comps:
            raise ConfigError("mixture needs a non-empty 'components' list")
        parts = [_component(c) for c in comps]
        dims = {p[0] for p in parts}
        if len(dims) != 1:
            raise ConfigError("mixture components must share one dimension")
        wts = np.asarray(spec.get("weights", [1.0] * len(parts)), dtype=float)
        if wts.shape != (len(parts),) or np.any(wts < 0) or not wts.sum() > 0:
            raise ConfigError("mixture weights must be nonnegative, one per component, not all zero")
        wts = wts / wts.sum()
        d = dims.pop()
        lower = np.min([p[1] for p in parts], axis=0)
        upper = np.max([p[2] for p in parts], axis=0)

        def f(x, parts=parts, wts=wts):
            return sum(wk * p[3](x) for wk, p in zip(wts, parts) if wk > 0)

        return d, lower, upper, f
    if "lower" not in spec or "upper" not in spec:
        raise ConfigError(f"{fam} needs 'lower' and 'upper' corners")
    d = len(np.atleast_1d(spec["lower"]))
    lower = _vec(spec["lower"], d, "lower")
    upper = _vec(spec["upper"], d, "upper")
    if not np.all(upper > lower):
        raise ConfigError("box upper corner must exceed lower corner on every axis")
    if fam == "uniform-box":
        return d, lower, upper, _uniform_density(lower, upper)
    mean = _vec(spec.get("mean", (lower + upper) / 2), d, "mean")
    std = _vec(spec.get("std", 1.0), d, "std")
    if np.any(std <= 0):
        raise ConfigError("std must be positive")
    return d, lower, upper, _trunc_gauss_density(mean, std, lower, upper)


def measure_from_spec(spec, nodes=None) -> ContinuumMeasure:
    """``{"family": "uniform-box" | "trunc-gauss" | "mixture", ...}``.

    ``uniform-box``: ``lower``, ``upper``. ``trunc-gauss``: box plus ``mean``,
    ``std`` (independent axes). ``mixture``: ``components`` (list of specs) and
    ``weights``. An optional ``nodes`` key (or argument) sets nodes per axis.
    """
    if isinstance(spec, str):
        spec = json.loads(spec)
    d, lower, upper, f = _component(spec)
    num = int(nodes or spec.get("nodes") or DEFAULT_NODES.get(d, 0))
    return ContinuumMeasure(d, lower, upper, f, num, dict(spec))


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """``(1/n) sum_i delta_{x_i}``."""

    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", as_points(self.points))

    @property
    def nodes(self):
        return self.points

    @property
    def weights(self):
        n = self.points.shape[0]
        return np.full(n, 1.0 / n)

    @property
    def dim(self):
        return self.points.shape[1]

    def contains(self, x):
        return True


@dataclass(frozen=True, eq=False)
class JointSample:
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X, Y = as_points(self.X), as_points(self.Y)
        if X.shape[0] != Y.shape[0]:
            raise InputError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self):
        return self.X.shape[0]


def _points_in(measure, xs):
    xs = as_points(xs)
    if xs.shape[1] != measure.dim:
        raise InputError(f"points have dimension {xs.shape[1]}, measure has {measure.dim}")
    for x in xs:
        if not measure.contains(x):
            raise InputError(f"point {x.tolist()} lies outside the support box")
    return xs


def _dtheta(xs, nodes, theta):
    diff = xs[:, None, :] - nodes[None, :, :]
    return np.power(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)), theta)


def _check_rho(rho):
    if not 0.0 < rho < 1.0:
        raise InfeasiblePerplexityError(f"rho must lie in (0, 1), got {rho}")


def _resolution_check(measure, kernel, xs, sigmas):
    """Raise if ``Z`` underflows or a single node dominates it."""
    for start in range(0, xs.shape[0], ROW_CHUNK):
        sl = slice(start, start + ROW_CHUNK)
        with np.errstate(over="ignore", invalid="ignore"):
            W = kernel.w(sigmas[sl, None] * _dtheta(xs[sl], measure.nodes, kernel.theta))
        W = np.where(measure.weights[None, :] > 0, W, np.inf)
        wmin = W.min(axis=1)
        bad = ~(wmin < UNDERFLOW_W)
        with np.errstate(under="ignore", invalid="ignore"):
            E = measure.weights[None, :] * np.exp(-(W - wmin[:, None]))
        share = E.max(axis=1) / E.sum(axis=1)
        bad |= ~(share <= MAX_NODE_SHARE)
        if bad.any():
            r = int(np.flatnonzero(bad)[0]) + start
            raise EvaluationError(
                f"sigma={sigmas[r]:g} at x={xs[r].tolist()} is beyond what the quadrature grid resolves"
            )


def big_F_rows(measure, kernel: InputKernel, rho, xs, sigmas) -> np.ndarray:
    """``F(x_r, sigma_r)`` for every row; no resolution check."""
    xs = _points_in(measure, xs)
    sigmas = np.broadcast_to(np.asarray(sigmas, dtype=float), (xs.shape[0],))
    out = np.empty(xs.shape[0])
    for start in range(0, xs.shape[0], ROW_CHUNK):
        sl = slice(start, start + ROW_CHUNK)
        dth = _dtheta(xs[sl], measure.nodes, kernel.theta)
        out[sl] = hot.f_rows(dth, measure.weights, sigmas[sl], math.log(rho), kernel)
    return out


def big_F(measure, kernel: InputKernel, rho, x, sigma) -> float:
    """``-int w e^{-w}/Z dmu - log Z + log rho`` with ``w = w(sigma |x - .|**theta)``."""
    if not (sigma > 0 and math.isfinite(sigma)):
        raise InputError(f"sigma must be positive and finite, got {sigma!r}")
    if not rho > 0:
        raise InputError(f"rho must be positive, got {rho!r}")
    xs = _points_in(measure, [np.atleast_1d(x)])
    sig = np.array([float(sigma)])
    _resolution_check(measure, kernel, xs, sig)
    return float(big_F_rows(measure, kernel, rho, xs, sig)[0])


def sigma_star_field(measure, kernel: InputKernel, rho, xs, tol=SIGMA_TOL) -> np.ndarray:
    """Root of ``F(x, .)`` at every row of ``xs``."""
    _check_rho(rho)
    xs = _points_in(measure, xs)
    m = xs.shape[0]
    log_rho = math.log(rho)
    out = np.empty(m)
    for start in range(0, m, ROW_CHUNK):
        sl = slice(start, start + ROW_CHUNK)
        dth = _dtheta(xs[sl], measure.nodes, kernel.theta)
        k = dth.shape[0]
        lo, hi = np.ones(k), np.ones(k)
        F_lo = hot.f_rows(dth, measure.weights, lo, log_rho, kernel)
        F_hi = F_lo.copy()
        for _ in range(MAX_EXPANSIONS):
            gl, gh = F_lo > 0, F_hi < 0
            if not (gl.any() or gh.any()):
                break
            lo[gl] /= EXPAND_FACTOR
            hi[gh] *= EXPAND_FACTOR
            if gl.any():
                F_lo[gl] = hot.f_rows(dth[gl], measure.weights, lo[gl], log_rho, kernel)
            if gh.any():
                F_hi[gh] = hot.f_rows(dth[gh], measure.weights, hi[gh], log_rho, kernel)
        bad = ~((F_lo <= 0) & (F_hi >= 0))
        if bad.any():
            r = int(np.flatnonzero(bad)[0])
            raise ResolutionError(
                f"no sign change of F at x={xs[start + r].tolist()} within sigma in [{lo[r]:g}, {hi[r]:g}]"
            )
        s, F, _ = hot.bisect_rows(dth, measure.weights, log_rho, lo, hi, tol, 200, kernel)
        if np.any(np.abs(F) > tol):
            r = int(np.argmax(np.abs(F)))
            raise ResolutionError(f"bisection stalled at x={xs[start + r].tolist()} with |F| = {abs(F[r]):.3e}")
        out[sl] = s
    _resolution_check(measure, kernel, xs, out)
    return out


def sigma_star(measure, kernel: InputKernel, rho, x, tol=SIGMA_TOL) -> float:
    return float(sigma_star_field(measure, kernel, rho, [np.atleast_1d(x)], tol)[0])


def normalizers(measure, kernel: InputKernel, xs, sigmas) -> np.ndarray:
    """``Z(x) = int exp(-w(sigma(x) |x - .|**theta)) dmu`` per row, unshifted."""
    xs = as_points(xs)
    sigmas = np.broadcast_to(np.asarray(sigmas, dtype=float), (xs.shape[0],))
    Z = np.empty(xs.shape[0])
    for start in range(0, xs.shape[0], ROW_CHUNK):
        sl = slice(start, start + ROW_CHUNK)
        with np.errstate(over="ignore", under="ignore"):
            Z[sl] = np.exp(-kernel.w(sigmas[sl, None] * _dtheta(xs[sl], measure.nodes, kernel.theta))) @ measure.weights
    if not np.all(Z > 0):
        r = int(np.flatnonzero(~(Z > 0))[0])
        raise EvaluationError(f"normalizer underflows at x={xs[r].tolist()}, sigma={sigmas[r]:g}")
    return Z


def _psi_values(psi, xs):
    if callable(psi):
        return np.array([float(psi(x)) for x in xs])
    return np.broadcast_to(np.asarray(psi, dtype=float), (xs.shape[0],)).copy()


def p_psi(measure, kernel: InputKernel, psi, x, x_prime) -> float:
    """Symmetrized continuum affinity with bandwidth field ``psi`` (callable or constant)."""
    xs = _points_in(measure, [np.atleast_1d(x), np.atleast_1d(x_prime)])
    sig = _psi_values(psi, xs)
    if not np.all((sig > 0) & np.isfinite(sig)):
        raise InputError("psi must be positive and finite")
    Z = normalizers(measure, kernel, xs, sig)
    d = float(np.linalg.norm(xs[0] - xs[1])) ** kernel.theta
    K = np.exp(-kernel.w(sig * d))
    return float(0.5 * (K[0] / Z[0] + K[1] / Z[1]))


def p_matrix(measure, kernel: InputKernel, xs, sigmas) -> np.ndarray:
    """``p_psi(x_i, x_j)`` for all pairs, with ``psi(x_i) = sigmas[i]``."""
    xs = as_points(xs)
    sigmas = np.asarray(sigmas, dtype=float)
    Z = normalizers(measure, kernel, xs, sigmas)
    dth = _dtheta(xs, xs, kernel.theta)
    with np.errstate(under="ignore"):
        C = np.exp(-kernel.w(sigmas[:, None] * dth)) / Z[:, None]
    return 0.5 * (C + C.T)


def q_matrix(Y, kernel: OutputKernel) -> np.ndarray:
    """``q_n(y_i, y_j) = g(y_i, y_j) / (mean_{k,l} g(y_k, y_l) - k(0)/n)``; equals ``n**2 Q`` off the diagonal."""
    Y = as_points(Y)
    n = Y.shape[0]
    if n < 2:
        raise InputError("need at least two points")
    diff = Y[:, None, :] - Y[None, :, :]
    G = kernel.k(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)))
    k0 = float(kernel.k(np.zeros(1))[0])
    return G / (G.sum() / n**2 - k0 / n)


def q_continuous(sample, kernel: OutputKernel, y, y_prime) -> float:
    Y = sample.Y if isinstance(sample, JointSample) else as_points(sample)
    n = Y.shape[0]
    if n < 2:
        raise InputError("need at least two points")
    diff = Y[:, None, :] - Y[None, :, :]
    G = kernel.k(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)))
    k0 = float(kernel.k(np.zeros(1))[0])
    g = float(kernel.k(np.asarray(np.linalg.norm(np.atleast_1d(y) - np.atleast_1d(y_prime)))))
    return g / (G.sum() / n**2 - k0 / n)


def empirical_p_matrix(X, kernel: InputKernel, sigmas) -> np.ndarray:
    """``p_psi`` against the empirical measure of ``X`` (self term included in each normalizer)."""
    X = as_points(X)
    return p_matrix(EmpiricalMeasure(X), kernel, X, sigmas)


def pair_relative_entropy(p, q) -> float:
    """``(1/n**2) sum_{i != j} p log(p / q)`` with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n = p.shape[0]
    mask = ~np.eye(n, dtype=bool) & (p > 0)
    if np.any(q[mask] <= 0):
        raise EvaluationError("q vanishes where p is positive")
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])) / n**2)


def functional_I(sample: JointSample, kernel_in: InputKernel, kernel_out: OutputKernel, rho, sigmas=None) -> float:
    """Equilibrium functional on the empirical joint measure of ``sample``.

    Bandwidths come from discrete calibration on ``sample.X`` unless given.
    """
    if sigmas is None:
        sigmas = calibrate_all(sample.X, kernel_in, rho).sigmas
    p = empirical_p_matrix(sample.X, kernel_in, sigmas)
    q = q_matrix(sample.Y, kernel_out)
    return pair_relative_entropy(p, q)


def stationarity_residual(sample: JointSample, kernel_in: InputKernel, kernel_out: OutputKernel, rho, sigmas=None) -> np.ndarray:
    """Per-point first-order residual ``|(1/n) sum_j (p_n - q_n) grad g / g|``.

    With ``p_n = n**2 P`` and ``q_n = n**2 Q`` this is ``n |grad_i L| / c``.
    """
    n = sample.n
    if n == 2:
        # P is forced to 1/2 off the diagonal whatever the bandwidth
        P = np.array([[0.0, 0.5], [0.5, 0.0]])
    else:
        if sigmas is None:
            sigmas = calibrate_all(sample.X, kernel_in, rho).sigmas
        P = joint_affinities(sample.X, sigmas, kernel_in)
    G = gradient(P, sample.Y, kernel_out)
    return n * np.sqrt((G * G).sum(axis=1)) / GRADIENT_FACTOR


def chebyshev_gap(fvals, gvals, hvals, weights, tol=0.0) -> float:
    """``(sum w f)(sum w h g) - (sum w h)(sum w f g)``, nonnegative when ``g`` and ``f/h`` are oppositely ordered.

    Raises :class:`PreconditionError` naming a pair with
    ``(g_x - g_y)(f_y/h_y - f_x/h_x) < -tol``.
    """
    f, g, h, w = (np.asarray(v, dtype=float).ravel() for v in (fvals, gvals, hvals, weights))
    m = f.size
    if not (g.size == h.size == w.size == m) or m == 0:
        raise InputError("f, g, h and weights must be non-empty and of equal length")
    if not all(np.all(np.isfinite(v)) for v in (f, g, h, w)):
        raise InputError("inputs must be finite")
    if np.any(f <= 0) or np.any(h <= 0):
        raise InputError("f and h must be positive")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise InputError("weights must form a probability vector")
    r = f / h
    for start in range(0, m, 1024):
        blk = (g[start:start + 1024, None] - g[None, :]) * (r[None, :] - r[start:start + 1024, None])
        if np.any(blk < -tol):
            a, b = np.unravel_index(int(np.argmin(blk)), blk.shape)
            raise PreconditionError(
                f"compatibility violated at pair ({start + a}, {b}): "
                f"(g_x - g_y)(f_y/h_y - f_x/h_x) = {blk[a, b]:.3e}"
            )
    s = math.fsum
    return s(w * f) * s(w * h * g) - s(w * h) * s(w * f * g)


def sphere_area(d) -> float:
    """Surface measure of the unit sphere in ``R^d`` (2 for ``d = 1``)."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def normalization_Zd(kernel: InputKernel, d) -> float:
    """``int_{R^d} exp(-w(|tau|**theta)) dtau`` by radial quadrature."""
    if int(d) != d or d < 1:
        raise InputError(f"d must be a positive integer, got {d!r}")
    d = int(d)

    def f(t):
        return t ** (d - 1) * math.exp(-float(kernel.w(np.asarray(t**kernel.theta))))

    est, status, detail = decade_integral(f)
    if status != "finite":
        raise KernelInvalidError(f"radial integral diverges for d={d}: {detail}")
    return sphere_area(d) * est
