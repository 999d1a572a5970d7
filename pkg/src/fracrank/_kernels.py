"""Hot inner loops, each in two flavours: a numba ``@njit`` kernel and a numpy twin.

The active backend is picked once at import time from ``FRACRANK_BACKEND``
(``numba`` or ``numpy``). ``numba`` is the default when the package is
importable; otherwise the numpy path is used silently. Both flavours are
always reachable through ``NUMBA_KERNELS`` / ``NUMPY_KERNELS`` so tests and
the benchmark can compare them side by side.
"""
import math
import os

import numpy as np

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAS_NUMBA = False

# arccos argument may overshoot [-1, 1] by this much from rounding alone
ARCCOS_TOL = 1e-12

_requested = os.environ.get("FRACRANK_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"FRACRANK_BACKEND must be 'numba' or 'numpy', got {_requested!r}")
BACKEND = "numba" if (_requested == "numba" and HAS_NUMBA) else "numpy"


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _g_numpy(absg, lam_mu, a):
    c = 1.0 + a * absg
    arg = 27.0 * lam_mu * a * a / (4.0 * c ** 3) - 1.0
    bad = (arg < -1.0 - ARCCOS_TOL) | (arg > 1.0 + ARCCOS_TOL)
    phi = np.arccos(np.clip(arg, -1.0, 1.0))
    val = ((c / 3.0) * (1.0 + 2.0 * np.cos(phi / 3.0 - np.pi / 3.0)) - 1.0) / a
    return val, bad


def prox_array_numpy(x, lam_mu, a, t_star):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    absx = np.abs(x)
    active = absx > t_star
    if not active.any():
        return out, 0
    val, bad = _g_numpy(absx[active], lam_mu, a)
    val[bad] = np.nan
    out[active] = np.sign(x[active]) * val
    return out, int(bad.sum())


def grid_argmin_numpy(gamma, lam_mu, a, lo, step, count):
    beta = lo + step * np.arange(count, dtype=np.float64)
    ab = np.abs(beta)
    f = (beta - gamma) ** 2 + lam_mu * (a * ab / (a * ab + 1.0))
    i = int(np.argmin(f))
    return beta[i], f[i]


def gradient_step_numpy(x_flat, idx, b, mu):
    out = x_flat.copy()
    out[idx] += mu * (b - x_flat[idx])
    return out


def fisher_yates_numpy(n_cells, s, u):
    perm = np.arange(n_cells, dtype=np.int64)
    for i in range(s):
        j = i + int(u[i] * (n_cells - i))
        if j >= n_cells:
            j = n_cells - 1
        perm[i], perm[j] = perm[j], perm[i]
    return perm[:s].copy()


NUMPY_KERNELS = {
    "prox_array": prox_array_numpy,
    "grid_argmin": grid_argmin_numpy,
    "gradient_step": gradient_step_numpy,
    "fisher_yates": fisher_yates_numpy,
}


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAS_NUMBA:
    njit = numba.njit(cache=True, nogil=True)

    @njit
    def _prox_array_nb(x, lam_mu, a, t_star, tol):
        out = np.zeros(x.shape[0])
        nbad = 0
        for i in range(x.shape[0]):
            g = x[i]
            absg = abs(g)
            if absg <= t_star:
                continue
            c = 1.0 + a * absg
            arg = 27.0 * lam_mu * a * a / (4.0 * c * c * c) - 1.0
            if arg < -1.0 - tol or arg > 1.0 + tol:
                out[i] = np.nan
                nbad += 1
                continue
            if arg > 1.0:
                arg = 1.0
            elif arg < -1.0:
                arg = -1.0
            phi = math.acos(arg)
            val = ((c / 3.0) * (1.0 + 2.0 * math.cos(phi / 3.0 - math.pi / 3.0)) - 1.0) / a
            out[i] = val if g > 0 else -val
        return out, nbad

    @njit
    def _grid_argmin_nb(gamma, lam_mu, a, lo, step, count):
        best_b = lo
        best_f = np.inf
        for i in range(count):
            beta = lo + step * i
            ab = abs(beta)
            f = (beta - gamma) ** 2 + lam_mu * (a * ab / (a * ab + 1.0))
            if f < best_f:
                best_f = f
                best_b = beta
        return best_b, best_f

    @njit
    def _gradient_step_nb(x_flat, idx, b, mu):
        out = x_flat.copy()
        for k in range(idx.shape[0]):
            p = idx[k]
            out[p] += mu * (b[k] - x_flat[p])
        return out

    @njit
    def _fisher_yates_nb(n_cells, s, u):
        perm = np.arange(n_cells)
        for i in range(s):
            j = i + np.int64(u[i] * (n_cells - i))
            if j >= n_cells:
                j = n_cells - 1
            tmp = perm[i]
            perm[i] = perm[j]
            perm[j] = tmp
        return perm[:s].copy()

    def prox_array_numba(x, lam_mu, a, t_star):
        x = np.ascontiguousarray(x, dtype=np.float64)
        out, nbad = _prox_array_nb(x.ravel(), float(lam_mu), float(a), float(t_star), ARCCOS_TOL)
        return out.reshape(x.shape), int(nbad)

    def grid_argmin_numba(gamma, lam_mu, a, lo, step, count):
        return _grid_argmin_nb(float(gamma), float(lam_mu), float(a), float(lo), float(step), int(count))

    def gradient_step_numba(x_flat, idx, b, mu):
        return _gradient_step_nb(x_flat, idx, b, float(mu))

    def fisher_yates_numba(n_cells, s, u):
        return _fisher_yates_nb(np.int64(n_cells), np.int64(s), u)

    NUMBA_KERNELS = {
        "prox_array": prox_array_numba,
        "grid_argmin": grid_argmin_numba,
        "gradient_step": gradient_step_numba,
        "fisher_yates": fisher_yates_numba,
    }
else:  # pragma: no cover
    NUMBA_KERNELS = None


_ACTIVE = NUMBA_KERNELS if BACKEND == "numba" else NUMPY_KERNELS

prox_array = _ACTIVE["prox_array"]
grid_argmin = _ACTIVE["grid_argmin"]
gradient_step = _ACTIVE["gradient_step"]
fisher_yates = _ACTIVE["fisher_yates"]
