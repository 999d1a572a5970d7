"""Brute-force reference for the scalar proximal map.

Deliberately shares nothing with the closed form in :mod:`fracrank.frac`
beyond the objective itself: it scans a uniform grid and keeps the best point.
"""
import math

import numpy as np

from . import _kernels


def prox_objective(beta, gamma, lam_mu, a):
    ab = np.abs(beta)
    return (beta - gamma) ** 2 + lam_mu * (a * ab / (a * ab + 1.0))


def grid_prox(gamma, lam_mu, a, step=1e-4):
    """Grid argmin of ``(beta - gamma)**2 + lam_mu * rho_a(beta)``.

    The grid covers ``[-2|gamma| - 1, 2|gamma| + 1]``, which always contains
    the minimiser because the proximal map shrinks toward zero.
    Returns ``(beta, objective)``.
    """
    half = 2.0 * abs(gamma) + 1.0
    k = int(math.ceil(half / step))
    # symmetric grid so that beta = 0 is sampled exactly (index k)
    beta, f = _kernels.grid_argmin(gamma, lam_mu, a, -(step * k), step, 2 * k + 1)
    return float(beta), float(f)
