"""Gradient descent with momentum on the relative-entropy loss."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .affinity import GRADIENT_FACTOR, joint_affinities, loss_and_gradient
from .calibrate import CalibrationResult, as_points, calibrate_all
from .hot import plogp
from .errors import ConfigError, DivergenceError, InputError
from .kernels import InputKernel, OutputKernel


@dataclass
class OptimizerConfig:
    """Descent settings.

    ``learning_rate=None`` picks ``lr_scale * n``: rows of ``P`` carry mass
    ``1/n`` on average, so per-point gradients scale like ``1/n``.
    ``exaggeration`` multiplies ``P`` for the first ``exaggeration_iters``
    iterations; it is a common t-SNE heuristic, off by default.
    """

    iterations: int = 1000
    learning_rate: float | None = None
    lr_scale: float = 1.0
    momentum: float = 0.5
    seed: int = 0
    init_scale: float = 1e-2
    stop_tol: float = 1e-7
    exaggeration: float = 1.0
    exaggeration_iters: int = 0

    def __post_init__(self):
        if int(self.iterations) < 1:
            raise ConfigError("iterations must be >= 1")
        if self.learning_rate is not None and not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ConfigError("learning_rate must be positive and finite")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.init_scale < 0:
            raise ConfigError("init_scale must be nonnegative")

    def lr_for(self, n):
        return float(self.learning_rate) if self.learning_rate is not None else self.lr_scale * n

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown optimizer keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


@dataclass
class Embedding:
    coords: np.ndarray
    trace: list = field(default_factory=list)  # loss per iteration, nats
    grad_norms: list = field(default_factory=list)  # max row norm per iteration
    converged: bool = False
    learning_rate: float = float("nan")
    P: np.ndarray | None = None
    calibration: CalibrationResult | None = None

    @property
    def n(self):
        return self.coords.shape[0]

    @property
    def s(self):
        return self.coords.shape[1]

    @property
    def final_loss(self):
        return self.trace[-1]

    @property
    def final_grad_norm(self):
        return self.grad_norms[-1]

    def diameter(self):
        diff = self.coords[:, None, :] - self.coords[None, :, :]
        return float(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff).max()))


def init_embedding(n, s, seed, init_scale) -> np.ndarray:
    if n < 2 or s < 1:
        raise InputError(f"need n >= 2 and s >= 1, got n={n}, s={s}")
    Y = np.random.default_rng(seed).standard_normal((n, s)) * init_scale
    return Y - Y.mean(axis=0)


def optimize_embedding(P, kernel_out: OutputKernel, s, config: OptimizerConfig, Y0=None) -> Embedding:
    """Run descent from ``Y0`` (or a seeded random start) on a fixed ``P``."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    Y = init_embedding(n, s, config.seed, config.init_scale) if Y0 is None else np.array(Y0, dtype=float)
    lr = config.lr_for(n)
    velocity = np.zeros_like(Y)
    emb = Embedding(coords=Y, learning_rate=lr, P=P)
    p_log_p = plogp(P)
    for it in range(int(config.iterations)):
        exaggerated = it < config.exaggeration_iters and config.exaggeration != 1.0
        if exaggerated:
            _, grad = loss_and_gradient(P * config.exaggeration, Y, kernel_out)
            # the trace always records the loss on the true P
            loss, _ = loss_and_gradient(P, Y, kernel_out, p_log_p)
        else:
            loss, grad = loss_and_gradient(P, Y, kernel_out, p_log_p)
        gnorm = float(np.sqrt((grad * grad).sum(axis=1)).max())
        if not (math.isfinite(loss) and math.isfinite(gnorm)):
            raise DivergenceError(f"non-finite loss or gradient at iteration {it}", iteration=it)
        emb.trace.append(loss)
        emb.grad_norms.append(gnorm)
        if gnorm < config.stop_tol and not exaggerated:
            emb.converged = True
            break
        velocity = config.momentum * velocity - lr * grad
        Y = Y + velocity
        if not np.all(np.isfinite(Y)):
            raise DivergenceError(f"non-finite coordinates after iteration {it}", iteration=it)
    if not emb.converged:
        loss, grad = loss_and_gradient(P, Y, kernel_out, p_log_p)
        emb.trace.append(loss)
        emb.grad_norms.append(float(np.sqrt((grad * grad).sum(axis=1)).max()))
    emb.coords = Y
    return emb


def run_tsne(points, kernel_in: InputKernel, kernel_out: OutputKernel, rho, config: OptimizerConfig, s=2) -> Embedding:
    """Calibrate, build ``P`` and descend. The returned embedding's last trace
    entry is the loss at the returned coordinates."""
    x = as_points(points)
    if x.shape[0] == 2:
        # no perplexity is attainable with one neighbour, but P is forced anyway
        emb = optimize_embedding(np.array([[0.0, 0.5], [0.5, 0.0]]), kernel_out, s, config)
        return emb
    cal = calibrate_all(x, kernel_in, rho)
    P = joint_affinities(x, cal.sigmas, kernel_in)
    emb = optimize_embedding(P, kernel_out, s, config)
    emb.calibration = cal
    return emb


def run_metadata(emb: Embedding, kernel_in, kernel_out, rho, config: OptimizerConfig):
    return {
        "n": emb.n,
        "s": emb.s,
        "rho": rho,
        "perplexity": emb.n * rho,
        "seed": config.seed,
        "optimizer": config.to_dict(),
        "learning_rate": emb.learning_rate,
        "kernels": {"input": kernel_in.to_config(), "output": kernel_out.to_config()},
        "gradient_factor": GRADIENT_FACTOR,
        "iterations_run": len(emb.trace),
        "converged": emb.converged,
        "final_loss": emb.final_loss,
        "final_grad_norm": emb.final_grad_norm,
    }
