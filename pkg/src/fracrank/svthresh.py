"""Matrix thresholding: SVD, proximal map on singular values, reconstruction."""
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError
from .frac import prox_array

__all__ = ["RANK_CUTOFF", "SvdTriple", "svd", "numerical_rank", "reconstruct",
           "threshold_svd", "svt_operator"]

RANK_CUTOFF = 1e-10


@dataclass(frozen=True)
class SvdTriple:
    """Thin SVD ``X = u @ diag(sigma) @ vt``."""

    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray

    @property
    def v(self):
        return self.vt.T


def svd(x):
    """Thin SVD with singular values sorted in nonincreasing order.

    Wide and tall inputs go through one code path: a tall matrix is
    factored as its transpose and the factors swapped back.
    """
    x = np.asarray(x, dtype=np.float64)
    tall = x.shape[0] > x.shape[1]
    try:
        u, s, vt = np.linalg.svd(x.T if tall else x, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"SVD failed to converge: {exc}") from exc
    if tall:
        u, vt = vt.T, u.T
    return SvdTriple(u, s, vt)


def numerical_rank(sigma, cutoff=RANK_CUTOFF):
    return int(np.count_nonzero(np.asarray(sigma) > cutoff))


def reconstruct(u, sigma, vt):
    keep = sigma != 0.0
    if not keep.any():
        return np.zeros((u.shape[0], vt.shape[1]))
    return (u[:, keep] * sigma[keep]) @ vt[keep]


def threshold_svd(triple, spec):
    """Apply the proximal map to ``triple.sigma``; returns ``(matrix, new_sigma)``."""
    new_sigma = prox_array(triple.sigma, spec)
    return reconstruct(triple.u, new_sigma, triple.vt), new_sigma


def svt_operator(x, spec):
    """``U diag(prox(sigma_i)) V^T`` for the SVD of ``x``."""
    out, _ = threshold_svd(svd(x), spec)
    return out
