"""Dispatch between the compiled and the numpy implementations of the hot loops.

The compiled path is used when numba is enabled (see :mod:`gtsne._accel`) and
the kernel is a builtin family; anything else runs on numpy.
"""
import numpy as np

from . import _accel
from . import _numpy_kernels as _np_impl
from .kernels import CUSTOM

if _accel.USE_NUMBA:
    from . import _numba_kernels as _nb_impl
else:
    _nb_impl = None


def _compiled(kernel):
    return _nb_impl is not None and kernel.code != CUSTOM


def _param(kernel):
    return float(kernel.params[0]) if kernel.params else 0.0


def _prep(dth, wts, log_rho):
    dth = np.ascontiguousarray(dth, dtype=float)
    wts = np.asarray(wts, dtype=float)
    if wts.ndim == 1:
        wts = wts[None, :]
    wts = np.ascontiguousarray(wts)
    log_rho = np.ascontiguousarray(np.broadcast_to(np.asarray(log_rho, dtype=float), (dth.shape[0],)))
    return dth, wts, log_rho


def f_rows(dth, wts, sigma, log_rho, kernel):
    """Row functional ``F`` (see :mod:`gtsne._numpy_kernels`) at one ``sigma`` per row."""
    dth, wts, log_rho = _prep(dth, wts, log_rho)
    sigma = np.ascontiguousarray(np.broadcast_to(np.asarray(sigma, dtype=float), (dth.shape[0],)))
    if _compiled(kernel):
        return _nb_impl.f_rows(dth, wts, sigma, log_rho, kernel.code, _param(kernel))
    return _np_impl.f_rows(dth, wts, sigma, log_rho, kernel.w)


def bisect_rows(dth, wts, log_rho, lo, hi, tol, max_iter, kernel):
    dth, wts, log_rho = _prep(dth, wts, log_rho)
    m = dth.shape[0]
    lo = np.ascontiguousarray(np.broadcast_to(np.asarray(lo, dtype=float), (m,)))
    hi = np.ascontiguousarray(np.broadcast_to(np.asarray(hi, dtype=float), (m,)))
    if _compiled(kernel):
        return _nb_impl.bisect_rows(dth, wts, log_rho, lo, hi, float(tol), int(max_iter), kernel.code, _param(kernel))
    return _np_impl.bisect_rows(dth, wts, log_rho, lo, hi, tol, max_iter, kernel.w)


def plogp(P):
    pos = P[P > 0]
    return float(np.sum(pos * np.log(pos)))


def loss_and_grad(P, Y, kernel, c, p_log_p=None):
    """Returns ``(loss, gradient)``. Pass ``p_log_p = plogp(P)`` when calling repeatedly with one ``P``."""
    P = np.ascontiguousarray(P, dtype=float)
    Y = np.ascontiguousarray(Y, dtype=float)
    if _compiled(kernel):
        if p_log_p is None:
            p_log_p = plogp(P)
        loss, grad = _nb_impl.loss_and_grad(P, Y, kernel.code, _param(kernel), float(c), float(p_log_p))
        return float(loss), grad
    return _np_impl.loss_and_grad(P, Y, kernel.k, kernel.dk, c)
