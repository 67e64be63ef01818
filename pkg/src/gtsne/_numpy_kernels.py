"""Pure-numpy hot loops. Reference path, and the only path for custom kernels.

Both the discrete calibration and the continuum quadrature reduce to the same
row functional over a weighted point cloud. For a row with nonnegative weights
``om_j`` and ``w_j = w(sigma * dth_j)``::

    Z = sum_j om_j exp(-w_j)
    F = log_rho - log Z - sum_j om_j w_j exp(-w_j) / Z

With ``om_j = 1/n`` off the diagonal and ``log_rho = log(rho)`` this is
``log(n rho) - entropy(p_{.|i})``; with quadrature weights it is the continuum
functional. ``w`` is shifted by its row minimum before exponentiation; the
shift cancels exactly.
"""
import numpy as np

ROW_CHUNK = 128


def f_rows(dth, wts, sigma, log_rho, w):
    """Row functional for every row of ``dth``; ``wts`` broadcasts against ``dth``."""
    sigma = np.asarray(sigma, dtype=float)
    out = np.empty(dth.shape[0])
    wts = np.broadcast_to(wts, dth.shape)
    log_rho = np.broadcast_to(np.asarray(log_rho, dtype=float), (dth.shape[0],))
    for start in range(0, dth.shape[0], ROW_CHUNK):
        sl = slice(start, start + ROW_CHUNK)
        out[sl] = _f_block(dth[sl], wts[sl], sigma[sl], log_rho[sl], w)
    return out


def _f_block(dth, wts, sigma, log_rho, w):
    with np.errstate(over="ignore", invalid="ignore"):
        W = w(sigma[:, None] * dth)
    live = wts > 0
    wmin = np.where(live, W, np.inf).min(axis=1)
    shifted = W - wmin[:, None]
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        E = np.where(live, wts * np.exp(-shifted), 0.0)
    Z = E.sum(axis=1)
    with np.errstate(invalid="ignore"):
        mean_shift = np.where(E > 0, E * shifted, 0.0).sum(axis=1) / Z
    return log_rho - np.log(Z) - mean_shift


def bisect_rows(dth, wts, log_rho, lo, hi, tol, max_iter, w):
    """Bisect ``F(sigma) = 0`` in ``log sigma`` for each row, given ``F(lo) <= 0 <= F(hi)``.

    Returns ``(sigma, residual, iterations)``.
    """
    m = dth.shape[0]
    wts = np.broadcast_to(wts, dth.shape)
    log_rho = np.broadcast_to(np.asarray(log_rho, dtype=float), (m,))
    llo = np.log(np.asarray(lo, dtype=float)).copy()
    lhi = np.log(np.asarray(hi, dtype=float)).copy()
    sigma = np.exp(0.5 * (llo + lhi))
    resid = np.full(m, np.inf)
    iters = np.zeros(m, dtype=np.int64)
    active = np.arange(m)
    for it in range(1, max_iter + 1):
        if active.size == 0:
            break
        mid = 0.5 * (llo[active] + lhi[active])
        s = np.exp(mid)
        F = f_rows(dth[active], wts[active], s, log_rho[active], w)
        sigma[active] = s
        resid[active] = F
        iters[active] = it
        below = F < 0
        llo[active[below]] = mid[below]
        lhi[active[~below]] = mid[~below]
        width = lhi[active] - llo[active]
        done = (np.abs(F) <= tol) | (width <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(mid)))
        active = active[~done]
    return sigma, resid, iters


def pairwise_dist(Y):
    diff = Y[:, None, :] - Y[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def loss_and_grad(P, Y, k, dk, c):
    """KL loss of ``P`` from the output affinities of ``Y`` and its gradient.

    Row ``i`` of the gradient is
    ``-c * sum_j (P_ij - Q_ij) * k'(r_ij) / (r_ij k(r_ij)) * (y_i - y_j)``.
    """
    n = Y.shape[0]
    R = pairwise_dist(Y)
    K = k(R)
    np.fill_diagonal(K, 0.0)
    Z = K.sum()
    off = ~np.eye(n, dtype=bool)
    pos = off & (P > 0)
    # Z == 0 yields nan here; the caller reports it as divergence
    with np.errstate(divide="ignore", invalid="ignore"):
        Q = K / Z
        loss = float(np.sum(P[pos] * np.log(P[pos] / Q[pos])))
        fac = np.where(R > 0, dk(R) / (R * k(R)), 0.0)
    np.fill_diagonal(fac, 0.0)
    coef = -c * (P - Q) * fac
    grad = coef.sum(axis=1)[:, None] * Y - coef @ Y
    return loss, grad
