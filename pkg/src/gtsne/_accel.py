"""Backend selection for the hot loops.

Set ``GTSNE_DISABLE_NUMBA=1`` to force the pure-numpy path. ``GTSNE_THREADS``
caps numba's worker count.
"""
import os

_FALSY = {"", "0", "false", "no", "off"}

def _has_omp():
    try:
        from numba.np.ufunc import omppool  # noqa: F401
    except ImportError:
        return False
    return True


try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_AVAILABLE = numba is not None

if NUMBA_AVAILABLE and not os.environ.get("NUMBA_THREADING_LAYER"):
    # the default probe tries TBB first and warns when the installed one is too old
    numba.config.THREADING_LAYER = "omp" if _has_omp() else "workqueue"
USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("GTSNE_DISABLE_NUMBA", "").strip().lower() in _FALSY

if NUMBA_AVAILABLE and os.environ.get("GTSNE_THREADS"):
    try:
        numba.set_num_threads(max(1, min(int(os.environ["GTSNE_THREADS"]), numba.config.NUMBA_NUM_THREADS)))
    except ValueError:
        pass


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
