"""Random matrix-completion experiments: instances, metrics and result tables.

An instance is ``M = M1 @ M2`` with standard normal factors plus a uniform
sample set of ``round(sr * m * n)`` cells. All randomness comes from one
PCG64 seed split with :class:`numpy.random.SeedSequence` into three
independent substreams (``M1``, ``M2``, ``Omega``), so the instance for a
given ``(seed, trial)`` is identical on every platform numpy supports.
"""
import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .baselines import (BaselineConfig, default_svp_params, default_svt_params, svp_solve,
                        svt_solve)
from .errors import DegenerateError, FracRankError, ShapeError
from .linops import SampleSet, SamplingMap
from .solver import (STOP_TARGET, AdaptiveLambda, LambdaFormula, SafeStep, SolverConfig,
                     isvta_solve)

__all__ = [
    "ExperimentSpec",
    "Metrics",
    "SweepOptions",
    "generate_instance",
    "sample_cells",
    "freedom_ratio",
    "relative_error",
    "run_sweep",
    "solve_completion",
    "average_trials",
    "write_csv",
    "format_table",
    "CSV_HEADER",
]

CSV_HEADER = ["n", "rank", "fr", "sr", "a", "seed", "re", "time", "converged"]
_SEED_MASK = (1 << 64) - 1


def freedom_ratio(s, r, m, n):
    """Samples per degree of freedom of a rank-``r`` ``m x n`` matrix."""
    return s / (r * (m + n - r))


@dataclass(frozen=True)
class ExperimentSpec:
    m: int
    n: int
    rank: int
    sr: float
    a: float = 1.0
    seed: int = 0
    trials: int = 1

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError(f"matrix dimensions must be positive, got {self.m}x{self.n}")
        if not 1 <= self.rank <= min(self.m, self.n):
            raise ValueError(f"rank must lie in [1, {min(self.m, self.n)}], got {self.rank}")
        if not 0.0 < self.sr <= 1.0:
            raise ValueError(f"sampling ratio must lie in (0, 1], got {self.sr}")
        if not (math.isfinite(self.a) and self.a > 0):
            raise ValueError(f"a must be finite and > 0, got {self.a}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.s < 1:
            raise ValueError(f"sr={self.sr} leaves no observed entries for {self.m}x{self.n}")

    @property
    def s(self):
        return int(round(self.sr * self.m * self.n))

    @property
    def fr(self):
        return freedom_ratio(self.s, self.rank, self.m, self.n)


@dataclass
class Metrics:
    sr: float
    fr: float
    re: float
    elapsed_seconds: float
    converged: bool
    iterations: int = 0
    m: int = 0
    n: int = 0
    rank: int = 0
    a: float = float("nan")
    seed: int = 0
    trial: int = 0
    method: str = "isvta"
    error: Optional[str] = None


def _streams(seed, trial):
    ss = np.random.SeedSequence(int(seed) & _SEED_MASK, spawn_key=(int(trial),))
    return [np.random.Generator(np.random.PCG64(child)) for child in ss.spawn(3)]


def sample_cells(m, n, s, rng):
    """``s`` distinct row-major cells of an ``m x n`` grid, uniformly, sorted."""
    if not 1 <= s <= m * n:
        raise ValueError(f"cannot draw {s} cells from {m * n}")
    u = rng.random(s)
    return np.sort(_kernels.fisher_yates(m * n, s, u))


def generate_instance(spec, trial=0):
    """Return ``(M, omega)`` for ``spec``; deterministic in ``(spec.seed, trial)``."""
    g1, g2, g_omega = _streams(spec.seed, trial)
    m1 = g1.standard_normal((spec.m, spec.rank))
    m2 = g2.standard_normal((spec.rank, spec.n))
    M = m1 @ m2
    flat = sample_cells(spec.m, spec.n, spec.s, g_omega)
    return M, SampleSet.from_matrix(M, flat)


def relative_error(x_opt, truth):
    x_opt = np.asarray(x_opt, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if x_opt.shape != truth.shape:
        raise ShapeError(f"shape mismatch: {x_opt.shape} vs {truth.shape}")
    nt = float(np.linalg.norm(truth))
    if nt == 0.0:
        raise DegenerateError("relative error is undefined for a zero ground truth")
    return float(np.linalg.norm(x_opt - truth)) / nt


@dataclass
class SweepOptions:
    """Solver settings shared by every run in a sweep.

    ``method`` is ``"isvta"``, ``"svt"`` or ``"svp"``. For ``isvta`` the
    lambda policy defaults to adaptive with the experiment's rank.
    """

    method: str = "isvta"
    tol: float = 1e-4
    max_iter: int = 10000
    stop: str = STOP_TARGET
    mu_policy: object = field(default_factory=SafeStep)
    lambda_policy: object = None
    lambda_formula: LambdaFormula = LambdaFormula.SCALED


def solve_completion(omega, truth, rank, a, opts):
    """Recover a rank-``rank`` matrix from ``omega`` with ``opts.method``."""
    if opts.method == "isvta":
        policy = opts.lambda_policy or AdaptiveLambda(rank, opts.lambda_formula)
        cfg = SolverConfig(lambda_policy=policy, a=a, mu_policy=opts.mu_policy,
                           tol=opts.tol, max_iter=opts.max_iter, stop=opts.stop)
        return isvta_solve(SamplingMap(omega), omega.values, cfg, truth=truth)
    if opts.method == "svt":
        kind = default_svt_params(omega)
        return svt_solve(omega, BaselineConfig(kind, opts.tol, opts.max_iter, opts.stop), truth=truth)
    if opts.method == "svp":
        kind = default_svp_params(omega, rank)
        return svp_solve(omega, BaselineConfig(kind, opts.tol, opts.max_iter, opts.stop), truth=truth)
    raise ValueError(f"unknown method {opts.method!r}")


def _run_one(job):
    spec, trial, opts = job
    row = Metrics(sr=spec.s / (spec.m * spec.n), fr=spec.fr, re=float("nan"),
                  elapsed_seconds=float("nan"), converged=False, m=spec.m, n=spec.n,
                  rank=spec.rank, a=spec.a, seed=spec.seed, trial=trial,
                  method=opts.method)
    try:
        M, omega = generate_instance(spec, trial)
        t0 = time.perf_counter()
        result = solve_completion(omega, M, spec.rank, spec.a, opts)
        row.elapsed_seconds = time.perf_counter() - t0
        row.re = relative_error(result.x_opt, M)
        row.iterations = result.iterations
        row.converged = bool(result.converged)
    except (FracRankError, ValueError, ArithmeticError) as exc:
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def run_sweep(specs, options=None, sink=None, jobs=1):
    """Run every ``(spec, trial)`` and return the ``Metrics`` rows in spec order.

    A failing run yields a row with ``error`` set instead of stopping the
    sweep. ``sink`` may be a path or a text file object; the CSV is written
    there when given. ``jobs > 1`` spreads runs over a process pool.
    """
    specs = list(specs)
    if not specs:
        raise ValueError("run_sweep needs at least one spec")
    opts = options or SweepOptions()
    work = [(spec, t, opts) for spec in specs for t in range(spec.trials)]
    jobs = max(1, min(int(jobs), len(work)))
    if jobs == 1:
        rows = [_run_one(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_one, work))
    if sink is not None:
        write_csv(rows, sink)
    return rows


def average_trials(rows):
    """Collapse trials of the same spec into one row (mean RE and time).

    A collapsed row counts as converged only when every trial converged.
    """
    groups = {}
    for r in rows:
        groups.setdefault((r.m, r.n, r.rank, r.sr, r.a, r.seed), []).append(r)
    out = []
    for group in groups.values():
        ok = [r for r in group if r.error is None]
        first = group[0]
        out.append(Metrics(
            sr=first.sr, fr=first.fr,
            re=float(np.mean([r.re for r in ok])) if ok else float("nan"),
            elapsed_seconds=float(np.mean([r.elapsed_seconds for r in ok])) if ok else float("nan"),
            converged=bool(ok) and len(ok) == len(group) and all(r.converged for r in ok),
            iterations=int(round(np.mean([r.iterations for r in ok]))) if ok else 0,
            m=first.m, n=first.n, rank=first.rank, a=first.a, seed=first.seed,
            error=None if ok else first.error,
        ))
    return out


def _num(x):
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def write_csv(rows, sink):
    own = isinstance(sink, (str, os.PathLike))
    fh = open(sink, "w", newline="") if own else sink
    try:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([r.n, r.rank, _num(r.fr), _num(r.sr), _num(r.a), r.seed,
                        _num(r.re), _num(r.elapsed_seconds), str(r.converged).lower()])
    finally:
        if own:
            fh.close()


def _sci(x):
    return f"{x:.2e}"


def format_table(rows):
    """Aligned text table; RE and time show ``---`` for runs that did not converge."""
    head = ["(n, rank, FR)", "a", "RE", "time"]
    body = []
    for r in rows:
        label = f"({r.n}, {r.rank}, {r.fr:.4f})"
        if r.converged and r.error is None:
            re, t = _sci(r.re), f"{r.elapsed_seconds:.3f}"
        else:
            re, t = "---", "---"
        body.append([label, f"{r.a:g}", re, t])
    widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]
    buf = io.StringIO()
    for row in [head] + body:
        buf.write("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() + "\n")
    return buf.getvalue()
