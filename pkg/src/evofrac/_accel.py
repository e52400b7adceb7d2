"""Hot time-domain kernels with a numba path and a pure-numpy path.

Both oracles (product-integration quadrature and convolution-quadrature
marching) spend their time in O(n^2) history sums.  Each kernel below has a
numpy implementation and, when numba is importable, an ``@njit`` twin.

The backend is chosen per call from the ``EVOFRAC_NUMBA`` environment
variable: ``0``/``false``/``off`` forces numpy, anything else uses numba when
it is installed.
"""

from __future__ import annotations

import logging
import os

import numpy as np

__all__ = [
    "numba_available",
    "numba_enabled",
    "backend_name",
    "causal_convolve",
    "cq_march",
]

_FALSY = {"0", "false", "off", "no"}

_njit_cache: dict[str, object] = {}
_numba_import_failed = False


def numba_available() -> bool:
    global _numba_import_failed
    if _numba_import_failed:
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        _numba_import_failed = True
        return False
    logging.getLogger("numba").setLevel(logging.WARNING)
    return True


def numba_enabled() -> bool:
    flag = os.environ.get("EVOFRAC_NUMBA", "1").strip().lower()
    return flag not in _FALSY and numba_available()


def backend_name() -> str:
    return "numba" if numba_enabled() else "numpy"


# ---------------------------------------------------------------------------
# causal Toeplitz convolution: out[j] = sum_{i<=j} w[j-i] * u[i]
# ---------------------------------------------------------------------------

def _causal_convolve_numpy(w: np.ndarray, u: np.ndarray) -> np.ndarray:
    n, d = u.shape
    out = np.empty((n, d), dtype=np.complex128)
    for c in range(d):
        out[:, c] = np.convolve(w, u[:, c])[:n]
    return out


def _causal_convolve_py(w, u):
    n, d = u.shape
    out = np.zeros((n, d), dtype=np.complex128)
    col = np.empty(n, dtype=np.complex128)
    for c in range(d):
        for i in range(n):
            col[i] = u[i, c]
        for j in range(n):
            s = 0.0j
            for i in range(j + 1):
                s += w[j - i] * col[i]
            out[j, c] = s
    return out


# ---------------------------------------------------------------------------
# convolution-quadrature marching
#
#   U[k] = step_inv @ (rhs[k] - prev_mat @ U[k-1]
#                      - sum_m mats[m] @ sum_{j=1..k} w[m, j] U[k-j])
# ---------------------------------------------------------------------------

def _cq_march_numpy(step_inv, prev_mat, w, mats, rhs):
    n, d = rhs.shape
    n_terms = w.shape[0]
    u = np.zeros((n, d), dtype=np.complex128)
    for k in range(n):
        acc = rhs[k].copy()
        if k > 0:
            acc -= prev_mat @ u[k - 1]
            past = u[k - 1::-1]  # U[k-1], U[k-2], ..., U[0]
            for m in range(n_terms):
                acc -= mats[m] @ (w[m, 1:k + 1] @ past)
        u[k] = step_inv @ acc
    return u


def _cq_march_py(step_inv, prev_mat, w, mats, rhs):
    n, d = rhs.shape
    n_terms = w.shape[0]
    ut = np.zeros((d, n), dtype=np.complex128)  # column-major copy of U for the history sums
    hist = np.zeros(d, dtype=np.complex128)
    acc = np.zeros(d, dtype=np.complex128)
    for k in range(n):
        for c in range(d):
            acc[c] = rhs[k, c]
        if k > 0:
            for r in range(d):
                s = 0.0j
                for c in range(d):
                    s += prev_mat[r, c] * ut[c, k - 1]
                acc[r] -= s
        for m in range(n_terms):
            for c in range(d):
                s = 0.0j
                for i in range(k):
                    s += w[m, k - i] * ut[c, i]
                hist[c] = s
            for r in range(d):
                s = 0.0j
                for c in range(d):
                    s += mats[m, r, c] * hist[c]
                acc[r] -= s
        for r in range(d):
            s = 0.0j
            for c in range(d):
                s += step_inv[r, c] * acc[c]
            ut[r, k] = s
    return ut.T.copy()


def _jitted(name: str, pyfunc):
    fn = _njit_cache.get(name)
    if fn is None:
        import numba

        fn = numba.njit(cache=False, fastmath=True)(pyfunc)
        _njit_cache[name] = fn
    return fn


def causal_convolve(w: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Lower-triangular Toeplitz product ``out[j] = sum_{i<=j} w[j-i] u[i]``.

    ``w`` has shape ``(n,)`` (real or complex), ``u`` shape ``(n, d)``.
    """
    w = np.ascontiguousarray(w, dtype=np.complex128)
    u = np.ascontiguousarray(u, dtype=np.complex128)
    if numba_enabled():
        return _jitted("causal_convolve", _causal_convolve_py)(w, u)
    return _causal_convolve_numpy(w, u)


def cq_march(
    step_inv: np.ndarray,
    prev_mat: np.ndarray,
    w: np.ndarray,
    mats: np.ndarray,
    rhs: np.ndarray,
) -> np.ndarray:
    """March a convolution-quadrature scheme forward in time.

    Parameters
    ----------
    step_inv : (d, d) inverse of the instantaneous (j = 0) step matrix.
    prev_mat : (d, d) coefficient of the one-step term ``U[k-1]``.
    w : (m, n) quadrature weights, one row per history term; column 0 unused.
    mats : (m, d, d) coefficient matrix of each history term.
    rhs : (n, d) right-hand side samples.
    """
    step_inv = np.ascontiguousarray(step_inv, dtype=np.complex128)
    prev_mat = np.ascontiguousarray(prev_mat, dtype=np.complex128)
    w = np.ascontiguousarray(w, dtype=np.complex128)
    mats = np.ascontiguousarray(mats, dtype=np.complex128)
    rhs = np.ascontiguousarray(rhs, dtype=np.complex128)
    if numba_enabled():
        return _jitted("cq_march", _cq_march_py)(step_inv, prev_mat, w, mats, rhs)
    return _cq_march_numpy(step_inv, prev_mat, w, mats, rhs)
