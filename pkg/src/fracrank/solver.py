"""Iterative (singular value) thresholding for the fraction-penalised least squares problem.

Matrix form::

    min_X ||A(X) - b||^2 + lam * sum_i rho_a(sigma_i(X))

solved by ``X <- G(X + mu * A^*(b - A(X)))`` where ``G`` applies the scalar
proximal map to the singular values. The vector form replaces the SVD with
elementwise thresholding.
"""
import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import DegenerateError, NonFiniteError, PreconditionError, ShapeError
from .frac import FractionParams, Regime, ThresholdSpec, penalty, prox_array
from .linops import as_matrix
from .svthresh import RANK_CUTOFF, svd, threshold_svd

__all__ = [
    "SafeStep",
    "ExplicitStep",
    "FixedLambda",
    "AdaptiveLambda",
    "LambdaFormula",
    "SolverConfig",
    "SolverTrace",
    "SolverResult",
    "adaptive_lambda",
    "lambda_bar",
    "sup_singular_bound",
    "objective",
    "fixed_point_residual",
    "isvta_solve",
    "ita_solve_vector",
]

LAMBDA_FLOOR = 1e-12
# The large-lambda choice puts sigma_r exactly on the threshold, where the
# dead zone (|gamma| <= t*) would discard it. Pulling lambda a hair inside
# its admissible bracket keeps sigma_r strictly above t*.
LARGE_BRANCH_SHRINK = 1e-9

STOP_STEP = "step"
STOP_TARGET = "target"


@dataclass(frozen=True)
class SafeStep:
    """``mu = (1 - epsilon) / ||A||_2**2``."""

    epsilon: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")

    def resolve(self, norm_bound):
        return (1.0 - self.epsilon) / norm_bound ** 2


@dataclass(frozen=True)
class ExplicitStep:
    mu: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise ValueError(f"mu must be finite and > 0, got {self.mu}")

    def resolve(self, norm_bound):
        return self.mu


@dataclass(frozen=True)
class FixedLambda:
    value: float

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value > 0):
            raise ValueError(f"lambda must be finite and > 0, got {self.value}")


class LambdaFormula(enum.Enum):
    # SCALED divides both candidate lambdas by mu, so lambda * mu puts the
    # threshold on the singular values; UNSCALED keeps mu only in the bound
    SCALED = "scaled"
    UNSCALED = "unscaled"


@dataclass(frozen=True)
class AdaptiveLambda:
    """Re-derive lambda every iteration from the ``rank``-th and next singular values."""

    rank: int
    formula: LambdaFormula = LambdaFormula.SCALED

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError(f"target rank must be >= 1, got {self.rank}")
        object.__setattr__(self, "formula", LambdaFormula(self.formula))


@dataclass
class SolverConfig:
    """Run parameters.

    ``stop="step"`` ends the run once ``||X_k - X_{k-1}||_F / ||X_k||_F <= tol``.
    ``stop="target"`` needs ground truth and ends once the relative error
    against it is ``<= tol``; it also gives up early when the iterates stop
    moving (relative step ``<= stall_tol``) without reaching the target.
    """

    lambda_policy: Union[FixedLambda, AdaptiveLambda]
    a: float = 1.0
    mu_policy: Union[SafeStep, ExplicitStep] = field(default_factory=SafeStep)
    tol: float = 1e-4
    max_iter: int = 10000
    x0: Optional[np.ndarray] = None
    stop: str = STOP_STEP
    stall_tol: float = 1e-12

    def __post_init__(self):
        FractionParams(self.a)
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.stop not in (STOP_STEP, STOP_TARGET):
            raise ValueError(f"stop must be {STOP_STEP!r} or {STOP_TARGET!r}, got {self.stop!r}")


@dataclass
class SolverTrace:
    objective: np.ndarray
    step_diff: np.ndarray
    lambdas: np.ndarray
    ranks: np.ndarray
    re: Optional[np.ndarray]
    iterations: int
    converged: bool
    stop_reason: str
    initial_objective: float = float("nan")

    def to_csv(self, path):
        header = ["iter", "objective", "step_diff", "lambda", "rank"]
        if self.re is not None:
            header.append("re")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(self.iterations):
                row = [k + 1, repr(float(self.objective[k])), repr(float(self.step_diff[k])),
                       repr(float(self.lambdas[k])), int(self.ranks[k])]
                if self.re is not None:
                    row.append(repr(float(self.re[k])))
                w.writerow(row)


@dataclass
class SolverResult:
    x_opt: np.ndarray
    trace: SolverTrace
    relative_error: Optional[float] = None
    mu: float = float("nan")

    @property
    def converged(self):
        return self.trace.converged

    @property
    def iterations(self):
        return self.trace.iterations


def adaptive_lambda(sigma_r, sigma_r1, a, mu, formula=LambdaFormula.SCALED):
    """Regularisation weight that separates ``sigma_r`` from ``sigma_{r+1}``.

    Returns ``(lam, regime)``. ``lam`` may be exactly 0 when ``sigma_r1`` is 0;
    callers are expected to floor it.
    """
    formula = LambdaFormula(formula)
    if sigma_r < sigma_r1 or sigma_r1 < 0:
        raise ValueError(f"need sigma_r >= sigma_r1 >= 0, got {sigma_r}, {sigma_r1}")
    if sigma_r == 0:
        raise DegenerateError("sigma_r is zero: the candidate has rank below the target")
    limit = 1.0 / (a * a * mu)
    if formula is LambdaFormula.SCALED:
        lam1 = 2.0 * sigma_r1 / (a * mu)
        if lam1 <= limit:
            return lam1, Regime.SMALL_LAMBDA
        return (2.0 * a * sigma_r + 1.0) ** 2 / (4.0 * a * a * mu), Regime.LARGE_LAMBDA
    lam1 = 2.0 * sigma_r1 / a
    if lam1 <= limit:
        return lam1, Regime.SMALL_LAMBDA
    return (2.0 * a * sigma_r + 1.0) ** 2 / (4.0 * a * a), Regime.LARGE_LAMBDA


def lambda_bar(linmap, b, a):
    """Regularisation level at and above which the optimum is the zero matrix."""
    b = np.asarray(b, dtype=np.float64)
    bn2 = float(b @ b)
    atb = float(np.linalg.norm(linmap.adjoint(b)))
    return bn2 + (atb + math.sqrt(atb + 2.0 * a * bn2 * atb)) / a


def sup_singular_bound(b_norm_sq, lam, a):
    """Upper bound on the largest singular value of any optimum, valid for ``lam > ||b||^2``."""
    if not lam > b_norm_sq:
        raise PreconditionError(f"bound requires lambda > ||b||^2 ({lam} <= {b_norm_sq})")
    return b_norm_sq / (a * (lam - b_norm_sq))


def objective(linmap, b, x, lam, a):
    """``||A(x) - b||^2 + lam * P(x)``."""
    r = linmap.apply(x) - b
    return float(r @ r) + lam * penalty(svd(x).sigma, a)


def fixed_point_residual(linmap, b, x, lam, a, mu):
    """``||x - G(x + mu A^*(b - A x))||_F``; zero exactly at fixed points."""
    spec = ThresholdSpec.resolve(a, lam, mu)
    y, _ = threshold_svd(svd(linmap.gradient_step(x, b, mu)), spec)
    return float(np.linalg.norm(x - y))


def stop_check(config, diff, nrm, re):
    """Return the stop reason for this iteration, or ``None`` to keep going.

    ``diff`` is ``||X_k - X_{k-1}||_F`` and ``nrm`` is ``||X_k||_F``. A zero
    iterate reached from a nonzero one skips the relative test for that step.
    """
    if config.stop == STOP_TARGET:
        if re <= config.tol:
            return "target"
        if (nrm == 0.0 and diff == 0.0) or (nrm > 0.0 and diff <= config.stall_tol * nrm):
            return "stalled"
        return None
    if nrm == 0.0:
        return "tolerance" if diff == 0.0 else None
    return "tolerance" if diff / nrm <= config.tol else None


class _MatrixProblem:
    def __init__(self, linmap, b):
        self.linmap = linmap
        self.b = b
        self.shape = linmap.shape

    def gradient(self, x, mu):
        return self.linmap.gradient_step(x, self.b, mu)

    def decompose(self, y):
        return svd(y)

    def spectrum(self, dec):
        return dec.sigma

    def shrink(self, dec, spec):
        return threshold_svd(dec, spec)

    def misfit(self, x):
        r = self.linmap.apply(x) - self.b
        return float(r @ r)

    def values(self, x):
        return svd(x).sigma


class _VectorProblem:
    def __init__(self, A, b):
        self.A = A
        self.b = b
        self.shape = (A.shape[1],)

    def gradient(self, x, mu):
        return x + mu * (self.A.T @ (self.b - self.A @ x))

    def decompose(self, y):
        return y

    def spectrum(self, dec):
        return np.sort(np.abs(dec))[::-1]

    def shrink(self, dec, spec):
        out = prox_array(dec, spec)
        return out, out

    def misfit(self, x):
        r = self.A @ x - self.b
        return float(r @ r)

    def values(self, x):
        return x


def _next_lambda(policy, spectrum, a, mu, lam_prev):
    if isinstance(policy, FixedLambda):
        return policy.value
    r = policy.rank
    try:
        lam, regime = adaptive_lambda(spectrum[r - 1], spectrum[r], a, mu, policy.formula)
    except DegenerateError:
        return lam_prev
    if regime is Regime.LARGE_LAMBDA:
        lam *= 1.0 - LARGE_BRANCH_SHRINK
    return max(lam, LAMBDA_FLOOR)


def _run(problem, config, mu, truth):
    a = config.a
    policy = config.lambda_policy
    if isinstance(policy, AdaptiveLambda) and policy.rank >= min(problem.shape):
        raise ValueError(f"adaptive target rank {policy.rank} must be < min{problem.shape}")

    if config.x0 is None:
        x = np.zeros(problem.shape)
    else:
        x = np.array(config.x0, dtype=np.float64)
        if x.shape != problem.shape:
            raise ShapeError(f"x0 has shape {x.shape}, expected {problem.shape}")

    truth_norm = None
    if truth is not None:
        truth = np.asarray(truth, dtype=np.float64)
        if truth.shape != problem.shape:
            raise ShapeError(f"truth has shape {truth.shape}, expected {problem.shape}")
        truth_norm = float(np.linalg.norm(truth))
    if config.stop == STOP_TARGET and not truth_norm:
        raise ValueError("stop='target' needs a nonzero ground-truth matrix")

    initial = float("nan")
    if isinstance(policy, FixedLambda):
        initial = problem.misfit(x) + policy.value * penalty(problem.values(x), a)

    objs, diffs, lams, ranks, res = [], [], [], [], []
    lam_prev = LAMBDA_FLOOR
    converged = False
    for _ in range(config.max_iter):
        y = problem.gradient(x, mu)
        if not np.all(np.isfinite(y)):
            raise NonFiniteError(f"gradient step produced non-finite values at iteration {len(objs) + 1}")
        dec = problem.decompose(y)
        lam = _next_lambda(policy, problem.spectrum(dec), a, mu, lam_prev)
        lam_prev = lam
        spec = ThresholdSpec.resolve(a, lam, mu)
        x_new, vals = problem.shrink(dec, spec)
        if not np.all(np.isfinite(x_new)):
            raise NonFiniteError(f"iterate became non-finite at iteration {len(objs) + 1}")

        diff = float(np.linalg.norm(x_new - x))
        nrm = float(np.linalg.norm(x_new))
        x = x_new
        objs.append(problem.misfit(x) + lam * penalty(vals, a))
        diffs.append(diff)
        lams.append(lam)
        ranks.append(int(np.count_nonzero(np.abs(vals) > RANK_CUTOFF)))
        if truth_norm:
            res.append(float(np.linalg.norm(x - truth)) / truth_norm)

        reason = stop_check(config, diff, nrm, res[-1] if res else None)
        if reason is not None:
            converged = reason != "stalled"
            break
    else:
        reason = "max_iter"

    trace = SolverTrace(
        objective=np.asarray(objs),
        step_diff=np.asarray(diffs),
        lambdas=np.asarray(lams),
        ranks=np.asarray(ranks, dtype=np.int64),
        re=np.asarray(res) if truth_norm else None,
        iterations=len(objs),
        converged=converged,
        stop_reason=reason,
        initial_objective=initial,
    )
    rel = res[-1] if (truth_norm and res) else None
    return SolverResult(x_opt=x, trace=trace, relative_error=rel, mu=mu)


def isvta_solve(linmap, b, config, truth=None):
    """Iterative singular value thresholding for ``A(X) ~ b``.

    Parameters
    ----------
    linmap : LinearMap
        Measurement operator (see :mod:`fracrank.linops`).
    b : array_like
        Observations, length ``linmap.out_dim``.
    config : SolverConfig
    truth : ndarray, optional
        Ground truth; when given, the relative error is tracked per iteration.

    Returns
    -------
    SolverResult
    """
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (linmap.out_dim,):
        raise ShapeError(f"b has shape {b.shape}, map produces ({linmap.out_dim},)")
    if not np.all(np.isfinite(b)):
        raise ValueError("b contains non-finite entries")
    mu = config.mu_policy.resolve(linmap.norm_bound)
    return _run(_MatrixProblem(linmap, b), config, mu, truth)


def ita_solve_vector(A, b, config, truth=None):
    """Elementwise iterative thresholding for ``A x ~ b`` (no SVD)."""
    A = as_matrix(A, "A")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.shape[0],):
        raise ShapeError(f"b has shape {b.shape}, A has {A.shape[0]} rows")
    mu = config.mu_policy.resolve(float(np.linalg.norm(A, 2)))
    return _run(_VectorProblem(A, b), config, mu, truth)
