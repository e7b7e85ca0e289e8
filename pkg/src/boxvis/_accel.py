"""Numba acceleration switch.

Hot kernels are written once, in the subset of Python that numba compiles.
Setting ``BOXVIS_DISABLE_NUMBA=1`` (or running without numba installed)
leaves them as plain Python and routes the sampling kernels to vectorised
numpy equivalents instead.
"""
import os

_FALSY = ("", "0", "false", "no", "off")


def _numba_disabled():
    return os.environ.get("BOXVIS_DISABLE_NUMBA", "").strip().lower() not in _FALSY


try:
    if not _numba_disabled():
        import numba as _numba
    else:
        _numba = None
except ImportError:  # pragma: no cover - numba ships with the default install
    _numba = None

NUMBA_ENABLED = _numba is not None

if NUMBA_ENABLED and "NUMBA_THREADING_LAYER" not in os.environ:
    # tbb is tried first by default and warns on old system installs
    _numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


def jit(**options):
    """``numba.njit`` when enabled, identity otherwise."""
    def wrap(fn):
        if not NUMBA_ENABLED:
            return fn
        options.setdefault("cache", True)
        options.setdefault("nogil", True)
        return _numba.njit(**options)(fn)

    return wrap


if NUMBA_ENABLED:
    prange = _numba.prange
else:
    prange = range


def set_num_threads(n):
    """Limit numba's worker pool; no-op on the fallback path."""
    if NUMBA_ENABLED:
        _numba.set_num_threads(max(1, min(int(n), _numba.config.NUMBA_NUM_THREADS)))


def accel_name():
    return "numba" if NUMBA_ENABLED else "numpy"
