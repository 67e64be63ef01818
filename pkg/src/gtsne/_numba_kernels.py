"""Compiled counterparts of :mod:`gtsne._numpy_kernels` for the builtin kernel families.

Kernels are passed as ``(code, param)``; see the family codes in
:mod:`gtsne.kernels`.
"""
import math

import numpy as np
from numba import njit, prange


@njit(cache=True, inline="always")
def _w(code, p, t):
    if code == 0:
        if p == 1.0:
            return t
        if p == 2.0:
            return t * t
        return t**p
    return p * math.log1p(t)


@njit(cache=True)
def _f_row(dth, wts, sigma, log_rho, code, p, buf):
    n = dth.shape[0]
    wmin = np.inf
    for j in range(n):
        if wts[j] > 0.0:
            v = _w(code, p, sigma * dth[j])
            buf[j] = v
            if v < wmin:
                wmin = v
    Z = 0.0
    acc = 0.0
    for j in range(n):
        if wts[j] > 0.0:
            t = buf[j] - wmin
            e = wts[j] * math.exp(-t)
            if e > 0.0:
                Z += e
                acc += e * t
    return log_rho - math.log(Z) - acc / Z


@njit(cache=True, parallel=True)
def f_rows(dth, wts, sigma, log_rho, code, p):
    m, n = dth.shape
    out = np.empty(m)
    shared = wts.shape[0] == 1
    for i in prange(m):
        buf = np.empty(n)
        wi = wts[0] if shared else wts[i]
        out[i] = _f_row(dth[i], wi, sigma[i], log_rho[i], code, p, buf)
    return out


@njit(cache=True, parallel=True)
def bisect_rows(dth, wts, log_rho, lo, hi, tol, max_iter, code, p):
    m, n = dth.shape
    sigma = np.empty(m)
    resid = np.empty(m)
    iters = np.zeros(m, dtype=np.int64)
    shared = wts.shape[0] == 1
    eps = np.finfo(np.float64).eps
    for i in prange(m):
        buf = np.empty(n)
        wi = wts[0] if shared else wts[i]
        llo = math.log(lo[i])
        lhi = math.log(hi[i])
        s = math.exp(0.5 * (llo + lhi))
        F = np.inf
        for it in range(1, max_iter + 1):
            mid = 0.5 * (llo + lhi)
            s = math.exp(mid)
            F = _f_row(dth[i], wi, s, log_rho[i], code, p, buf)
            iters[i] = it
            if F < 0.0:
                llo = mid
            else:
                lhi = mid
            if abs(F) <= tol or lhi - llo <= 4.0 * eps * max(1.0, abs(mid)):
                break
        sigma[i] = s
        resid[i] = F
    return sigma, resid, iters


@njit(cache=True, inline="always")
def _k2(code, p, r2):
    if code == 0:
        if p == 1.0:
            return 1.0 / (1.0 + r2)
        return (1.0 + r2) ** (-p)
    if code == 1:
        return math.exp(-r2)
    return math.exp(-math.sqrt(r2))


@njit(cache=True, inline="always")
def _fac2(code, p, r2):
    # k'(r) / (r k(r)) from r^2; callers multiply by (y_i - y_j), so r = 0 contributes 0
    if code == 0:
        return -2.0 * p / (1.0 + r2)
    if code == 1:
        return -2.0
    if r2 > 0.0:
        return -1.0 / math.sqrt(r2)
    return 0.0


@njit(cache=True, inline="always")
def _logk2(code, p, r2):
    if code == 0:
        return -p * math.log1p(r2)
    if code == 1:
        return -r2
    return -math.sqrt(r2)


@njit(cache=True, fastmath={"reassoc", "contract"}, error_model="numpy")
def loss_and_grad(P, Y, code, p, c, plogp):
    """Loss and gradient for a symmetric ``P``; only its upper triangle is read.

    ``plogp`` is ``sum P log P`` over the positive entries, constant during descent.
    """
    n, s = Y.shape
    K = np.empty((n, n))
    Z = 0.0
    cross = 0.0
    psum = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            r2 = 0.0
            for a in range(s):
                d = Y[i, a] - Y[j, a]
                r2 += d * d
            K[i, j] = _k2(code, p, r2)
            Z += K[i, j]
            pij = P[i, j]
            if pij > 0.0:
                cross += pij * _logk2(code, p, r2)
                psum += pij
    Z *= 2.0
    loss = plogp - 2.0 * cross + 2.0 * psum * math.log(Z)
    grad = np.zeros((n, s))
    for i in range(n):
        for j in range(i + 1, n):
            r2 = 0.0
            for a in range(s):
                d = Y[i, a] - Y[j, a]
                r2 += d * d
            coef = -c * (P[i, j] - K[i, j] / Z) * _fac2(code, p, r2)
            for a in range(s):
                d = coef * (Y[i, a] - Y[j, a])
                grad[i, a] += d
                grad[j, a] -= d
    return loss, grad
