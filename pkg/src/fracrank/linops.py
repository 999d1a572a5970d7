"""Linear measurement maps ``A : R^{m x n} -> R^d`` and their adjoints.

Matrices are plain float64 ``ndarray`` objects. ``vec`` is the row-major
flattening ``X.ravel()`` throughout.
"""
import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateError, FormatError, ShapeError

__all__ = [
    "SampleSet",
    "LinearMap",
    "SamplingMap",
    "DenseMap",
    "as_matrix",
    "sampling_map",
    "dense_map",
    "power_iteration",
    "read_samples_csv",
    "write_samples_csv",
]

SAFETY_FACTOR = 1.01


def as_matrix(x, name="matrix"):
    """Coerce to a finite 2-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Observed entries of an ``m x n`` matrix.

    ``flat`` holds row-major cell indices, sorted ascending; ``values`` is
    aligned with it. Build with :meth:`from_indices`, :meth:`from_mask` or
    :meth:`from_matrix` so ordering and validation are enforced.
    """

    shape: tuple
    flat: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        m, n = self.shape
        if m < 1 or n < 1:
            raise ShapeError(f"shape must be positive, got {self.shape}")
        flat, values = self.flat, self.values
        if flat.ndim != 1 or values.shape != flat.shape:
            raise ShapeError("indices and values must be aligned 1-D arrays")
        if flat.size == 0:
            raise ValueError("a sample set needs at least one observation")
        if flat.min() < 0 or flat.max() >= m * n:
            raise ValueError("sample index out of range")
        if np.any(np.diff(flat) <= 0):
            raise ValueError("sample indices must be distinct (and sorted)")
        if not np.all(np.isfinite(values)):
            raise ValueError("observed values must be finite")

    @classmethod
    def from_indices(cls, shape, rows, cols, values):
        m, n = (int(shape[0]), int(shape[1]))
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        values = np.asarray(values, dtype=np.float64).ravel()
        if not (rows.shape == cols.shape == values.shape):
            raise ShapeError("rows, cols and values must have equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= m or cols.min() < 0 or cols.max() >= n):
            raise ValueError("sample index out of range")
        flat = rows * n + cols
        order = np.argsort(flat, kind="stable")
        return cls((m, n), flat[order], values[order])

    @classmethod
    def from_flat(cls, shape, flat, values):
        m, n = (int(shape[0]), int(shape[1]))
        flat = np.asarray(flat, dtype=np.int64).ravel()
        values = np.asarray(values, dtype=np.float64).ravel()
        order = np.argsort(flat, kind="stable")
        return cls((m, n), flat[order], values[order])

    @classmethod
    def from_matrix(cls, matrix, flat):
        """Observe ``matrix`` at the given row-major cells."""
        matrix = np.asarray(matrix, dtype=np.float64)
        flat = np.sort(np.asarray(flat, dtype=np.int64).ravel())
        return cls(matrix.shape, flat, matrix.ravel()[flat])

    @classmethod
    def from_mask(cls, matrix, mask):
        mask = np.asarray(mask, dtype=bool)
        return cls.from_matrix(matrix, np.flatnonzero(mask.ravel()))

    @property
    def size(self):
        return int(self.flat.size)

    @property
    def rows(self):
        return self.flat // self.shape[1]

    @property
    def cols(self):
        return self.flat % self.shape[1]

    @property
    def indices(self):
        return list(zip(self.rows.tolist(), self.cols.tolist()))

    @property
    def sampling_ratio(self):
        return self.size / (self.shape[0] * self.shape[1])

    def mask(self):
        out = np.zeros(self.shape[0] * self.shape[1], dtype=bool)
        out[self.flat] = True
        return out.reshape(self.shape)


class LinearMap:
    """Abstract measurement operator.

    Subclasses provide ``apply``, ``adjoint``, ``shape`` (matrix shape),
    ``out_dim`` and ``norm_bound`` (an upper bound on the spectral norm).
    """

    shape = None
    out_dim = None
    norm_bound = None

    def apply(self, x):
        raise NotImplementedError

    def adjoint(self, y):
        raise NotImplementedError

    def gradient_step(self, x, b, mu):
        """``x + mu * A^*(b - A(x))``."""
        return x + mu * self.adjoint(b - self.apply(x))


class SamplingMap(LinearMap):
    """Coordinate selection ``P_Omega``; spectral norm exactly 1."""

    def __init__(self, omega):
        self.omega = omega
        self.shape = omega.shape
        self.out_dim = omega.size
        self.norm_bound = 1.0
        self._flat = omega.flat

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.shape:
            raise ShapeError(f"expected shape {self.shape}, got {x.shape}")
        return x.ravel()[self._flat]

    def adjoint(self, y):
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.out_dim,):
            raise ShapeError(f"expected vector of length {self.out_dim}, got {y.shape}")
        out = np.zeros(self.shape[0] * self.shape[1])
        out[self._flat] = y
        return out.reshape(self.shape)

    def gradient_step(self, x, b, mu):
        x = np.ascontiguousarray(x, dtype=np.float64)
        b = np.ascontiguousarray(b, dtype=np.float64)
        return _kernels.gradient_step(x.ravel(), self._flat, b, mu).reshape(self.shape)


class DenseMap(LinearMap):
    """``A(X) = A @ vec(X)`` for an explicit ``d x (m n)`` matrix."""

    def __init__(self, A, shape):
        A = np.asarray(A, dtype=np.float64)
        m, n = (int(shape[0]), int(shape[1]))
        if A.ndim != 2 or A.shape[1] != m * n:
            raise ShapeError(f"A must have {m * n} columns for shape {(m, n)}, got {A.shape}")
        self.A = A
        self.shape = (m, n)
        self.out_dim = A.shape[0]
        # exact spectral norm; the matrix is explicit and small enough for a dense SVD
        self.norm_bound = float(np.linalg.norm(A, 2))

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.shape:
            raise ShapeError(f"expected shape {self.shape}, got {x.shape}")
        return self.A @ x.ravel()

    def adjoint(self, y):
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.out_dim,):
            raise ShapeError(f"expected vector of length {self.out_dim}, got {y.shape}")
        return (self.A.T @ y).reshape(self.shape)


def sampling_map(omega):
    return SamplingMap(omega)


def dense_map(A, shape):
    return DenseMap(A, shape)


def power_iteration(linmap, iters=100, seed=0):
    """Estimate ``||A||_2`` by power iteration on ``A^* A``.

    The estimate is inflated by 1% so that it errs toward an upper bound.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(linmap.shape)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = linmap.adjoint(linmap.apply(x))
        ny = np.linalg.norm(y)
        if ny == 0.0:
            raise DegenerateError("power iteration collapsed to zero; the map is the zero operator")
        est = ny
        x = y / ny
    return SAFETY_FACTOR * float(np.sqrt(est))


def read_samples_csv(path, shape=None):
    """Read a ``i,j,value`` CSV. ``shape`` defaults to the bounding box of the indices."""
    rows, cols, vals = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["i", "j", "value"]:
            raise FormatError(f"{path}: expected header 'i,j,value', got {header!r}", offset=0)
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 fields, got {len(rec)}")
            try:
                rows.append(int(rec[0]))
                cols.append(int(rec[1]))
                vals.append(float(rec[2]))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise FormatError(f"{path}: no observations")
    if shape is None:
        shape = (max(rows) + 1, max(cols) + 1)
    return SampleSet.from_indices(shape, rows, cols, vals)


def write_samples_csv(omega, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "value"])
        for i, j, v in zip(omega.rows.tolist(), omega.cols.tolist(), omega.values.tolist()):
            w.writerow([i, j, repr(v)])
