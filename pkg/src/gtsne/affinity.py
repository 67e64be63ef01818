"""Input/embedding affinity matrices, the relative-entropy loss and its gradient.

Affinity matrices are plain ``n x n`` float arrays: symmetric, zero diagonal,
entries summing to one over ordered pairs.

Gradient constant
-----------------
The loss sums over ordered pairs, so ``y_i`` appears in both the ``(i, j)`` and
the ``(j, i)`` term. Differentiating gives::

    dL/dy_i = -2 * sum_{j != i} (P_ij - Q_ij) * grad_i g(y_i, y_j) / g(y_i, y_j)

i.e. ``GRADIENT_FACTOR = 2`` relative to the single-sum form. The constant is
pinned by the finite-difference audit in ``tests/test_affinity.py``. With the
Cauchy kernel the pair term becomes ``4 (P_ij - Q_ij)(y_i - y_j)/(1 + r^2)``,
the classical t-SNE gradient.
"""
import numpy as np

from . import hot
from .calibrate import as_points
from .errors import DivergenceError, InputError
from .kernels import InputKernel, OutputKernel

GRADIENT_FACTOR = 2.0
SUM_TOL = 1e-12


def conditional_matrix(points, sigmas, kernel: InputKernel) -> np.ndarray:
    """Row ``i`` is ``p_{.|i}`` at bandwidth ``sigmas[i]``."""
    x = as_points(points)
    sigmas = np.asarray(sigmas, dtype=float)
    n = x.shape[0]
    if sigmas.shape != (n,):
        raise InputError(f"expected {n} sigmas, got shape {sigmas.shape}")
    if not np.all((sigmas > 0) & np.isfinite(sigmas)):
        raise InputError("sigmas must be positive and finite")
    diff = x[:, None, :] - x[None, :, :]
    dth = np.power(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)), kernel.theta)
    with np.errstate(over="ignore", invalid="ignore"):
        W = kernel.w(sigmas[:, None] * dth)
    np.fill_diagonal(W, np.inf)
    W = W - W.min(axis=1, keepdims=True)
    E = np.exp(-W)
    return E / E.sum(axis=1, keepdims=True)


def joint_affinities(points, sigmas, kernel: InputKernel) -> np.ndarray:
    """``P_ij = (p_{j|i} + p_{i|j}) / (2n)``."""
    C = conditional_matrix(points, sigmas, kernel)
    n = C.shape[0]
    P = (C + C.T) / (2.0 * n)
    np.fill_diagonal(P, 0.0)
    return P


def embedding_affinities(Y, kernel: OutputKernel) -> np.ndarray:
    """``Q_ij = k(|y_i - y_j|) / sum_{k != l} k(|y_k - y_l|)``."""
    Y = as_points(Y)
    if Y.shape[0] < 2:
        raise InputError("need at least two embedding points")
    diff = Y[:, None, :] - Y[None, :, :]
    K = kernel.k(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)))
    np.fill_diagonal(K, 0.0)
    return K / K.sum()


def check_affinity(A, tol=SUM_TOL):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputError(f"affinity matrix must be square, got shape {A.shape}")
    if np.any(A < 0) or np.any(np.diag(A) != 0):
        raise InputError("affinity matrix must be nonnegative with zero diagonal")
    if not np.allclose(A, A.T, rtol=0, atol=tol):
        raise InputError("affinity matrix is not symmetric")
    if abs(A.sum() - 1.0) > tol * max(1, A.shape[0]):
        raise InputError(f"affinity entries sum to {A.sum()!r}, expected 1")
    return A


def kl_loss(P, Q) -> float:
    """``sum_{i != j} P_ij log(P_ij / Q_ij)`` with ``0 log 0 = 0``."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape != Q.shape:
        raise InputError(f"shape mismatch: {P.shape} vs {Q.shape}")
    off = ~np.eye(P.shape[0], dtype=bool)
    pos = off & (P > 0)
    if np.any(Q[pos] <= 0):
        raise DivergenceError("Q vanishes where P is positive; relative entropy is infinite")
    return float(np.sum(P[pos] * np.log(P[pos] / Q[pos])))


def loss_and_gradient(P, Y, kernel: OutputKernel, p_log_p=None):
    """Returns ``(loss, gradient)``. ``p_log_p`` may carry a cached ``sum P log P``."""
    P = np.asarray(P, dtype=float)
    Y = as_points(Y)
    if P.shape != (Y.shape[0], Y.shape[0]):
        raise InputError(f"P has shape {P.shape} but Y has {Y.shape[0]} rows")
    loss, grad = hot.loss_and_grad(P, Y, kernel, GRADIENT_FACTOR, p_log_p)
    return loss, grad


def gradient(P, Y, kernel: OutputKernel) -> np.ndarray:
    return loss_and_gradient(P, Y, kernel)[1]


def pair_gradient_term(p, q, y_i, y_j, kernel: OutputKernel) -> np.ndarray:
    """Contribution of the pair ``(i, j)`` to ``dL/dy_i``."""
    y_i = np.atleast_1d(np.asarray(y_i, dtype=float))
    y_j = np.atleast_1d(np.asarray(y_j, dtype=float))
    diff = y_i - y_j
    r = float(np.linalg.norm(diff))
    if r == 0.0:
        return np.zeros_like(diff)
    fac = float(kernel.dk(np.asarray(r))) / (r * float(kernel.k(np.asarray(r))))
    return -GRADIENT_FACTOR * (p - q) * fac * diff
