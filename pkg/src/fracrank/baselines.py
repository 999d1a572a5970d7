"""Comparison solvers for matrix completion.

* SVT: soft singular value shrinkage with a dual ascent on the observed
  entries (Cai, Candes & Shen, 2010).
* SVP: projected gradient onto rank-``r`` matrices (Jain, Meka & Dhillon, 2010).

Both return :class:`fracrank.solver.SolverResult` so the harness can tabulate
them next to the thresholding solver.
"""
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import NonFiniteError, ShapeError
from .linops import SamplingMap
from .solver import STOP_STEP, STOP_TARGET, SolverResult, SolverTrace, stop_check
from .svthresh import RANK_CUTOFF, numerical_rank, reconstruct, svd

__all__ = [
    "SVTParams",
    "SVPParams",
    "BaselineConfig",
    "soft_threshold_singular",
    "rank_projection",
    "default_svt_params",
    "default_svp_params",
    "svt_solve",
    "svp_solve",
]


@dataclass(frozen=True)
class SVTParams:
    tau: float
    delta: float

    def __post_init__(self):
        if not (self.tau > 0 and self.delta > 0):
            raise ValueError("tau and delta must be > 0")


@dataclass(frozen=True)
class SVPParams:
    rank: int
    eta: float

    def __post_init__(self):
        if self.rank < 1 or not self.eta > 0:
            raise ValueError("rank must be >= 1 and eta > 0")


@dataclass
class BaselineConfig:
    kind: Union[SVTParams, SVPParams]
    tol: float = 1e-4
    max_iter: int = 10000
    stop: str = STOP_STEP
    stall_tol: float = 1e-12


def default_svt_params(omega):
    m, n = omega.shape
    return SVTParams(tau=5.0 * math.sqrt(m * n), delta=1.2 / omega.sampling_ratio)


def default_svp_params(omega, rank):
    return SVPParams(rank=rank, eta=1.0 / (1.1 * omega.sampling_ratio))


def soft_threshold_singular(y, tau):
    """``U diag(max(sigma - tau, 0)) V^T``."""
    t = svd(y)
    return reconstruct(t.u, np.maximum(t.sigma - tau, 0.0), t.vt)


def rank_projection(y, r):
    """Best rank-``r`` approximation in Frobenius norm."""
    t = svd(y)
    s = t.sigma.copy()
    s[r:] = 0.0
    return reconstruct(t.u, s, t.vt)


def _loop(omega, config, truth, step):
    m, n = omega.shape
    truth_norm = None
    if truth is not None:
        truth = np.asarray(truth, dtype=np.float64)
        if truth.shape != (m, n):
            raise ShapeError(f"truth has shape {truth.shape}, expected {(m, n)}")
        truth_norm = float(np.linalg.norm(truth))
    if config.stop == STOP_TARGET and not truth_norm:
        raise ValueError("stop='target' needs a nonzero ground-truth matrix")

    A = SamplingMap(omega)
    b = omega.values
    x = np.zeros((m, n))
    objs, diffs, lams, ranks, res = [], [], [], [], []
    converged = False
    for k in range(config.max_iter):
        x_new, param, moving = step(x, A, b, k)
        if not np.all(np.isfinite(x_new)):
            raise NonFiniteError(f"baseline diverged at iteration {k + 1}")
        diff = float(np.linalg.norm(x_new - x))
        nrm = float(np.linalg.norm(x_new))
        x = x_new
        r = A.apply(x) - b
        objs.append(float(r @ r))
        diffs.append(diff)
        lams.append(param)
        ranks.append(numerical_rank(svd(x).sigma, RANK_CUTOFF) if nrm > 0 else 0)
        if truth_norm:
            res.append(float(np.linalg.norm(x - truth)) / truth_norm)
        reason = stop_check(config, diff, nrm, res[-1] if res else None)
        if reason == "stalled" and moving:
            # the primal iterate can sit still while hidden state keeps changing
            reason = None
        if reason is not None:
            converged = reason != "stalled"
            break
    else:
        reason = "max_iter"
    trace = SolverTrace(
        objective=np.asarray(objs), step_diff=np.asarray(diffs), lambdas=np.asarray(lams),
        ranks=np.asarray(ranks, dtype=np.int64), re=np.asarray(res) if truth_norm else None,
        iterations=len(objs), converged=converged, stop_reason=reason,
    )
    return SolverResult(x_opt=x, trace=trace, relative_error=res[-1] if res else None)


def svt_solve(omega, config, truth=None):
    """Singular value thresholding with the usual "kicked" dual start.

    The ``lambda`` column of the trace carries ``tau``.
    """
    p = config.kind
    if not isinstance(p, SVTParams):
        raise TypeError("svt_solve needs SVTParams")
    A = SamplingMap(omega)
    y0 = A.adjoint(omega.values)
    top = svd(y0).sigma[0]
    # kicking: skip the first iterations in which shrinkage would return zero
    k0 = math.ceil(p.tau / (p.delta * top)) if top > 0 else 0
    state = {"y": k0 * p.delta * y0}

    def step(x, A, b, k):
        y = state["y"]
        x_new = soft_threshold_singular(y, p.tau)
        dy = p.delta * A.adjoint(b - A.apply(x_new))
        state["y"] = y + dy
        moving = np.linalg.norm(dy) > config.stall_tol * max(np.linalg.norm(y), 1.0)
        return x_new, p.tau, moving

    return _loop(omega, config, truth, step)


def svp_solve(omega, config, truth=None):
    """Projected gradient onto rank-``r`` matrices; ``lambda`` column is 0."""
    p = config.kind
    if not isinstance(p, SVPParams):
        raise TypeError("svp_solve needs SVPParams")
    if p.rank >= min(omega.shape):
        raise ValueError(f"SVP rank {p.rank} must be < min{omega.shape}")

    def step(x, A, b, k):
        return rank_projection(A.gradient_step(x, b, p.eta), p.rank), 0.0, False

    return _loop(omega, config, truth, step)
