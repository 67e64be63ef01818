"""Input and output kernel families, pointwise evaluation and numerical validity checks.

An input kernel is ``exp(-w(sigma * |x - x'|**theta))`` for a strictly
increasing ``w`` with ``w(0) = 0``; an output kernel is a radial profile
``k(|y - y'|)``. Both carry closed-form derivatives because the validators and
the gradient need them; builtin families additionally carry an integer code so
the compiled loops in :mod:`gtsne._numba_kernels` can evaluate them.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import ConfigError, InputError, KernelDefinitionError

CUSTOM = -1
IN_POWER, IN_LOGPOLY = 0, 1
OUT_CAUCHY, OUT_GAUSS, OUT_EXP = 0, 1, 2

SIGN_TOL = 1e-9
TAIL_THRESHOLD = 1e-12
# w must exceed this for exp(-w) to drop below TAIL_THRESHOLD
DIVERGENCE_LEVEL = -math.log(TAIL_THRESHOLD)


@dataclass(frozen=True)
class InputKernel:
    family: str
    params: tuple
    theta: float
    w: Callable
    dw: Callable
    d2w: Callable
    code: int = CUSTOM

    def __post_init__(self):
        if not (self.theta > 0 and math.isfinite(self.theta)):
            raise ConfigError(f"theta must be positive and finite, got {self.theta!r}")
        w0 = float(np.asarray(self.w(np.zeros(1)))[0])
        if not math.isfinite(w0):
            raise KernelDefinitionError(f"w(0) is not finite for family {self.family!r}")
        if w0 != 0.0:
            # normalize so that coincident points get weight exactly 1
            raw = self.w
            object.__setattr__(self, "w", lambda t: raw(t) - w0)
            object.__setattr__(self, "code", CUSTOM)

    def weight(self, dist, sigma):
        """Vectorized ``exp(-w(sigma * dist**theta))``."""
        return np.exp(-self.w(sigma * np.power(dist, self.theta)))

    def to_config(self):
        cfg = {"family": self.family, "theta": self.theta}
        if self.family == "power":
            cfg["a"] = self.params[0]
        elif self.family == "log-poly":
            cfg["alpha"] = self.params[0]
        else:
            cfg["params"] = list(self.params)
        return cfg


@dataclass(frozen=True)
class OutputKernel:
    family: str
    params: tuple
    k: Callable
    dk: Callable
    k_max: float
    code: int = CUSTOM

    def to_config(self):
        cfg = {"family": self.family}
        if self.family == "cauchy":
            cfg["b"] = self.params[0]
        elif self.params:
            cfg["params"] = list(self.params)
        return cfg


def power_kernel(a=1.0, theta=2.0):
    """``w(t) = t**a``; ``a=1, theta=2`` is the Gaussian input kernel of classical t-SNE."""
    a = float(a)
    if not a >= 1.0:
        raise ConfigError(f"power family needs a >= 1, got {a}")
    return InputKernel(
        family="power",
        params=(a,),
        theta=float(theta),
        w=lambda t: np.power(t, a),
        dw=lambda t: a * np.power(t, a - 1.0),
        d2w=lambda t: a * (a - 1.0) * np.power(t, a - 2.0),
        code=IN_POWER,
    )


def log_poly_kernel(alpha=1.0, theta=1.0):
    """``w(t) = alpha * log(1 + t)``, i.e. the polynomially decaying weight ``(1 + sigma r**theta)**-alpha``."""
    alpha = float(alpha)
    if not alpha > 0:
        raise ConfigError(f"log-poly family needs alpha > 0, got {alpha}")
    return InputKernel(
        family="log-poly",
        params=(alpha,),
        theta=float(theta),
        w=lambda t: alpha * np.log1p(t),
        dw=lambda t: alpha / (1.0 + np.asarray(t, dtype=float)),
        d2w=lambda t: -alpha / (1.0 + np.asarray(t, dtype=float)) ** 2,
        code=IN_LOGPOLY,
    )


def cauchy_kernel(b=1.0):
    """``k(r) = (1 + r**2)**-b``; ``b=1`` is the Student-t output kernel of classical t-SNE."""
    b = float(b)
    if not b > 0:
        raise ConfigError(f"cauchy family needs b > 0, got {b}")
    return OutputKernel(
        family="cauchy",
        params=(b,),
        k=lambda r: np.power(1.0 + np.square(r), -b),
        dk=lambda r: -2.0 * b * np.asarray(r, dtype=float) * np.power(1.0 + np.square(r), -b - 1.0),
        k_max=1.0,
        code=OUT_CAUCHY,
    )


def gauss_kernel():
    return OutputKernel(
        family="gauss",
        params=(),
        k=lambda r: np.exp(-np.square(r)),
        dk=lambda r: -2.0 * np.asarray(r, dtype=float) * np.exp(-np.square(r)),
        k_max=1.0,
        code=OUT_GAUSS,
    )


def exp_kernel():
    """``k(r) = exp(-r)``. Violates ``k'(0) = 0``; kept for negative tests."""
    return OutputKernel(
        family="exp",
        params=(),
        k=lambda r: np.exp(-np.asarray(r, dtype=float)),
        dk=lambda r: -np.exp(-np.asarray(r, dtype=float)),
        k_max=1.0,
        code=OUT_EXP,
    )


def custom_input_kernel(w, dw, d2w, theta, family="custom", params=()):
    """Wrap user callables; ``w`` is shifted so that ``w(0) = 0``. Always runs on the numpy path."""
    return InputKernel(family=family, params=tuple(params), theta=float(theta), w=w, dw=dw, d2w=d2w)


def custom_output_kernel(k, dk, k_max, family="custom", params=()):
    return OutputKernel(family=family, params=tuple(params), k=k, dk=dk, k_max=float(k_max))


INPUT_FAMILIES = {"power": power_kernel, "log-poly": log_poly_kernel}
OUTPUT_FAMILIES = {"cauchy": cauchy_kernel, "gauss": gauss_kernel, "exp": exp_kernel}

_INPUT_KEYS = {"power": ("a", "theta"), "log-poly": ("alpha", "theta")}
_OUTPUT_KEYS = {"cauchy": ("b",), "gauss": (), "exp": ()}


def input_kernel_from_config(cfg):
    cfg = dict(cfg)
    family = cfg.pop("family", None)
    if family not in INPUT_FAMILIES:
        raise ConfigError(f"unknown input kernel family {family!r}; choose from {sorted(INPUT_FAMILIES)}")
    unknown = set(cfg) - set(_INPUT_KEYS[family])
    if unknown:
        raise ConfigError(f"unexpected keys for input family {family!r}: {sorted(unknown)}")
    try:
        return INPUT_FAMILIES[family](**{k: float(v) for k, v in cfg.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad input kernel parameters: {exc}") from exc


def output_kernel_from_config(cfg):
    cfg = dict(cfg)
    family = cfg.pop("family", None)
    if family not in OUTPUT_FAMILIES:
        raise ConfigError(f"unknown output kernel family {family!r}; choose from {sorted(OUTPUT_FAMILIES)}")
    unknown = set(cfg) - set(_OUTPUT_KEYS[family])
    if unknown:
        raise ConfigError(f"unexpected keys for output family {family!r}: {sorted(unknown)}")
    try:
        return OUTPUT_FAMILIES[family](**{k: float(v) for k, v in cfg.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad output kernel parameters: {exc}") from exc


def kernels_from_config(cfg):
    """Parse ``{"input": {...}, "output": {...}}``; either side may be absent (returned as None)."""
    if not isinstance(cfg, dict):
        raise ConfigError("kernel config must be a JSON object")
    unknown = set(cfg) - {"input", "output"}
    if unknown:
        raise ConfigError(f"unexpected top-level kernel config keys: {sorted(unknown)}")
    kin = input_kernel_from_config(cfg["input"]) if "input" in cfg else None
    kout = output_kernel_from_config(cfg["output"]) if "output" in cfg else None
    return kin, kout


def _as_point(x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise InputError("non-finite coordinates")
    return x


def eval_input(kernel: InputKernel, x, x_prime, sigma) -> float:
    x, x_prime = _as_point(x), _as_point(x_prime)
    if x.shape != x_prime.shape:
        raise InputError(f"dimension mismatch: {x.shape} vs {x_prime.shape}")
    if not (sigma > 0 and math.isfinite(sigma)):
        raise InputError(f"sigma must be positive and finite, got {sigma!r}")
    r = float(np.linalg.norm(x - x_prime))
    return float(np.exp(-kernel.w(np.asarray(sigma * r**kernel.theta))))


def eval_output(kernel: OutputKernel, y, y_prime) -> float:
    y, y_prime = _as_point(y), _as_point(y_prime)
    if y.shape != y_prime.shape:
        raise InputError(f"dimension mismatch: {y.shape} vs {y_prime.shape}")
    return float(kernel.k(np.asarray(np.linalg.norm(y - y_prime))))


# -- validation ---------------------------------------------------------------


@dataclass
class CheckResult:
    check_id: str
    passed: bool
    detail: dict = field(default_factory=dict)
    informational: bool = False
    status: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.detail = {k: (v.item() if isinstance(v, np.generic) else v) for k, v in self.detail.items()}
        if not self.status:
            self.status = "pass" if self.passed else "fail"

    def to_dict(self):
        return {
            "check": self.check_id,
            "status": self.status,
            "pass": self.passed,
            "informational": self.informational,
            **self.detail,
        }


@dataclass
class ValidationReport:
    kernel: str
    checks: list

    @property
    def overall(self) -> bool:
        return all(c.passed for c in self.checks if not c.informational)

    def __getitem__(self, check_id) -> CheckResult:
        for c in self.checks:
            if c.check_id == check_id:
                return c
        raise KeyError(check_id)

    def failed(self):
        return [c.check_id for c in self.checks if not c.passed and not c.informational]

    def to_dict(self):
        return {"kernel": self.kernel, "overall": self.overall, "checks": [c.to_dict() for c in self.checks]}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


@dataclass(frozen=True)
class TestGrid:
    """Sample points on ``[0, upper]``: ``num`` linear points up to ``min(upper, 10)``
    then ``num`` geometric points to ``upper``. ``upper=None`` lets the validator pick."""

    upper: float | None = None
    num: int = 2001

    __test__ = False

    def nodes(self, upper):
        lin = np.linspace(0.0, min(upper, 10.0), self.num)
        if upper <= 10.0:
            return lin
        return np.unique(np.concatenate([lin, np.geomspace(10.0, upper, self.num)]))


def _finite(values, what):
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise KernelDefinitionError(f"{what} produced non-finite values on the test grid")
    return values


def _first_violation(grid, mask):
    idx = np.flatnonzero(mask)
    return None if idx.size == 0 else float(grid[idx[0]])


def decade_integral(f, max_decades=40):
    """Estimate ``int_0^inf f(t) dt`` for nonnegative ``f`` decade by decade.

    Returns ``(estimate, status, detail)`` with ``status`` one of ``"finite"`` or
    ``"divergent"``. Per-decade contributions are integrated in ``log t`` and a
    tail is declared convergent when the last contributions shrink geometrically
    (or vanish), divergent when they stop shrinking.
    """
    opts = dict(limit=200, epsabs=0.0, epsrel=1e-10)
    head = integrate.quad(f, 0.0, 1.0, **opts)[0]
    total = head
    contribs = []
    for k in range(max_decades):
        lo, hi = math.log(10.0**k), math.log(10.0 ** (k + 1))
        c = integrate.quad(lambda u: f(math.exp(u)) * math.exp(u), lo, hi, **opts)[0]
        if not math.isfinite(c):
            return math.inf, "divergent", {"decades": k + 1}
        contribs.append(c)
        total += c
        if c <= 1e-16 * max(total, 1e-300):
            return total, "finite", {"decades": k + 1, "tail_estimate": 0.0}
        if len(contribs) >= 4:
            ratios = [contribs[-m] / contribs[-m - 1] for m in (1, 2, 3) if contribs[-m - 1] > 0]
            if ratios and min(ratios) >= 1.0:
                return math.inf, "divergent", {"decades": k + 1, "growth_ratio": ratios[0]}
            if ratios and max(ratios) < 1.0:
                r = max(ratios)
                tail = c * r / (1.0 - r)
                if tail <= 1e-10 * total:
                    return total + tail, "finite", {"decades": k + 1, "tail_estimate": tail}
    ratios = [contribs[-m] / contribs[-m - 1] for m in (1, 2, 3) if contribs[-m - 1] > 0]
    if ratios and max(ratios) < 1.0:
        r = max(ratios)
        tail = contribs[-1] * r / (1.0 - r)
        return total + tail, "finite", {"decades": max_decades, "tail_estimate": tail}
    return math.inf, "divergent", {"decades": max_decades}


def _auto_upper(kernel: InputKernel, cap=1e15):
    t = 10.0
    while t < cap:
        if float(kernel.w(np.asarray(t))) >= DIVERGENCE_LEVEL:
            return t
        t *= 10.0
    return cap


def validate_input_kernel(kernel: InputKernel, d: int, grid: TestGrid | None = None, tol=SIGN_TOL) -> ValidationReport:
    """Check a input kernel's ``w`` numerically on a grid.

    Check ids: ``w_increasing``, ``w_unbounded``, ``w_prime_plus_t_w_second``
    and ``tail_integral`` (finiteness of ``int t^(d-1) w(t^theta) exp(-w(t^theta)) dt``).
    """
    grid = grid or TestGrid()
    upper = grid.upper if grid.upper is not None else _auto_upper(kernel)
    t = grid.nodes(upper)
    w = _finite(kernel.w(t), "w")
    dw = _finite(kernel.dw(t), "w'")
    # w'' may blow up at 0 (power family, 1 < a < 2) while t * w'' -> 0
    d2w = np.zeros_like(t)
    d2w[1:] = _finite(kernel.d2w(t[1:]), "w''")
    checks = []

    # w'(0) may vanish (power family with a > 1); strict positivity away from 0
    bad = np.where(t > 0, dw <= 0.0, dw < -tol)
    checks.append(CheckResult("w_increasing", not bad.any(), {"witness_t": _first_violation(t, bad), "min_dw": float(dw.min())}))

    w_end = float(w[-1])
    resolved = w_end >= DIVERGENCE_LEVEL
    checks.append(CheckResult("w_unbounded", resolved, {"t_max": float(upper), "w_at_t_max": w_end, "threshold": DIVERGENCE_LEVEL}))

    combo = dw + t * d2w
    bad = combo < -tol
    checks.append(
        CheckResult(
            "w_prime_plus_t_w_second",
            not bad.any(),
            {"witness_t": _first_violation(t, bad), "min_value": float(combo.min())},
        )
    )

    theta = kernel.theta

    def integrand(s):
        ws = float(kernel.w(np.asarray(s**theta)))
        return 0.0 if ws > 745.0 else s ** (d - 1) * ws * math.exp(-ws)

    try:
        est, status, detail = decade_integral(integrand)
    except (OverflowError, ValueError):
        est, status, detail = math.inf, "divergent", {}
    passed = status == "finite" and resolved
    check_status = "pass" if passed else ("inconclusive" if status == "finite" else "fail")
    checks.append(
        CheckResult(
            "tail_integral",
            passed,
            {"estimate": est if math.isfinite(est) else None, "quadrature": status, "tail_resolved": resolved, "dim": d, **detail},
            status=check_status,
        )
    )
    return ValidationReport(kernel=f"input:{kernel.family}", checks=checks)


def validate_output_kernel(kernel: OutputKernel, grid: TestGrid | None = None, tol=SIGN_TOL) -> ValidationReport:
    """Check ids: ``k_decreasing``, ``k_bounded``, ``k_prime_bounded``,
    ``k_prime_at_zero``, ``k_integrable`` and the informational
    ``double_integral_literal``."""
    grid = grid or TestGrid(upper=1e6)
    r = grid.nodes(grid.upper if grid.upper is not None else 1e6)
    k = _finite(kernel.k(r), "k")
    dk = _finite(kernel.dk(r), "k'")
    checks = []

    steps = np.diff(k)
    bad = np.concatenate([[False], steps > tol]) | (k < 0)
    checks.append(CheckResult("k_decreasing", not bad.any() and k[0] > k[-1], {"witness_r": _first_violation(r, bad)}))

    kmax = float(k.max())
    checks.append(CheckResult("k_bounded", kmax <= kernel.k_max + tol, {"max_k": kmax, "k_max": kernel.k_max}))

    checks.append(CheckResult("k_prime_bounded", True, {"max_abs_dk": float(np.abs(dk).max())}))

    dk0 = float(np.asarray(kernel.dk(np.zeros(1)))[0])
    checks.append(CheckResult("k_prime_at_zero", abs(dk0) <= tol, {"dk0": dk0}))

    est, status, detail = decade_integral(lambda s: float(kernel.k(np.asarray(s))))
    checks.append(
        CheckResult("k_integrable", status == "finite", {"estimate": est if math.isfinite(est) else None, "quadrature": status, **detail})
    )

    # literal reading over (0, L)^2 = 2 * int_0^L (L - r) k(r) dr; grows without bound for any k > 0
    sizes = (10.0, 100.0, 1000.0)
    vals = [2.0 * integrate.quad(lambda s, L=L: (L - s) * float(kernel.k(np.asarray(s))), 0.0, L, limit=400)[0] for L in sizes]
    checks.append(
        CheckResult(
            "double_integral_literal",
            vals[-1] <= 1.01 * vals[-2],
            {"box_sizes": list(sizes), "values": vals},
            informational=True,
        )
    )
    return ValidationReport(kernel=f"output:{kernel.family}", checks=checks)
