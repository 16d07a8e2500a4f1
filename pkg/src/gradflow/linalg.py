"""Dense and sparse linear algebra with deterministic numerics.

All reductions in this module either go through the selected kernel
backend (see ``backend``) or use numpy operations whose summation order
is fixed for a given build, so every function here is run-to-run
deterministic.  Iterative estimators use fixed, documented starting
vectors instead of random ones.

The sparse type is a minimal CSR matrix tailored to symmetric graph
propagation operators; it validates its structural invariants on
construction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import ConvergenceWarning, CsrFormatError, ShapeError

__all__ = [
    "CsrMatrix",
    "matmul",
    "spmm",
    "transpose",
    "frobenius_norm",
    "spectral_norm",
    "mean_center",
    "centered_propagation_norm",
]


def _as_dense(x, name: str = "matrix") -> np.ndarray:
    """Validate and return ``x`` as a C-contiguous float64 2-D array."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    return np.ascontiguousarray(a)


@dataclass(frozen=True)
class CsrMatrix:
    """Compressed-sparse-row matrix (float64 values, int64 indexing).

    Invariants, checked on construction:

    * ``indptr`` has length ``rows + 1``, starts at 0, is nondecreasing,
      and ends at ``len(indices) == len(data)``;
    * within each row, column indices are strictly increasing (sorted,
      no duplicates) and lie in ``[0, cols)``.
    """

    rows: int
    cols: int
    indptr: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "indptr",
                           np.ascontiguousarray(self.indptr, dtype=np.int64))
        object.__setattr__(self, "indices",
                           np.ascontiguousarray(self.indices, dtype=np.int64))
        object.__setattr__(self, "data",
                           np.ascontiguousarray(self.data, dtype=np.float64))
        if self.rows < 0 or self.cols < 0:
            raise CsrFormatError("matrix dimensions must be nonnegative")
        if self.indptr.shape != (self.rows + 1,):
            raise CsrFormatError(
                f"indptr must have length rows+1={self.rows + 1}, "
                f"got {self.indptr.shape[0]}")
        if self.indptr[0] != 0:
            raise CsrFormatError("indptr must start at 0")
        if np.any(np.diff(self.indptr) < 0):
            raise CsrFormatError("indptr must be nondecreasing")
        nnz = int(self.indptr[-1])
        if self.indices.shape[0] != nnz or self.data.shape[0] != nnz:
            raise CsrFormatError(
                "indices/data length must equal indptr[-1] "
                f"({self.indices.shape[0]}/{self.data.shape[0]} vs {nnz})")
        if nnz:
            if self.indices.min() < 0 or self.indices.max() >= self.cols:
                raise CsrFormatError("column index out of range")
            # Strictly increasing within each row: any non-increase must
            # coincide with a row boundary.
            flat_breaks = np.flatnonzero(np.diff(self.indices) <= 0) + 1
            if not np.isin(flat_breaks, self.indptr[1:-1]).all():
                raise CsrFormatError(
                    "column indices must be strictly increasing per row")

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @classmethod
    def from_dense(cls, a) -> "CsrMatrix":
        """Build from a dense array, storing exact nonzeros."""
        d = _as_dense(a)
        rows, cols = d.shape
        mask = d != 0.0
        counts = mask.sum(axis=1)
        indptr = np.zeros(rows + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        r, c = np.nonzero(mask)
        return cls(rows, cols, indptr, c.astype(np.int64), d[r, c])

    @classmethod
    def from_coo(cls, rows: int, cols: int, row_ids, col_ids,
                 values) -> "CsrMatrix":
        """Build from coordinate triplets (must be free of duplicates)."""
        r = np.asarray(row_ids, dtype=np.int64)
        c = np.asarray(col_ids, dtype=np.int64)
        v = np.asarray(values, dtype=np.float64)
        if not (r.shape == c.shape == v.shape) or r.ndim != 1:
            raise ShapeError("coordinate arrays must be equal-length 1-D")
        order = np.lexsort((c, r))
        r, c, v = r[order], c[order], v[order]
        indptr = np.zeros(rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(r, minlength=rows), out=indptr[1:])
        return cls(rows, cols, indptr, c, v)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols), dtype=np.float64)
        row_ids = np.repeat(np.arange(self.rows), np.diff(self.indptr))
        out[row_ids, self.indices] = self.data
        return out

    def transpose(self) -> "CsrMatrix":
        """Exact transpose (counting sort on column indices)."""
        row_ids = np.repeat(np.arange(self.rows, dtype=np.int64),
                            np.diff(self.indptr))
        order = np.argsort(self.indices, kind="stable")
        indptr = np.zeros(self.cols + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.indices, minlength=self.cols),
                  out=indptr[1:])
        return CsrMatrix(self.cols, self.rows, indptr,
                         row_ids[order], self.data[order])


def matmul(a, b) -> np.ndarray:
    """Matrix product; dense @ dense through the kernel backend.

    A CsrMatrix left operand is routed to ``spmm``.
    """
    if isinstance(a, CsrMatrix):
        return spmm(a, b)
    da = _as_dense(a, "left operand")
    db = _as_dense(b, "right operand")
    if da.shape[1] != db.shape[0]:
        raise ShapeError(
            f"cannot multiply {da.shape} by {db.shape}")
    return backend.matmul(da, db)


def spmm(a: CsrMatrix, b) -> np.ndarray:
    """Sparse-dense product ``a @ b`` through the kernel backend."""
    if not isinstance(a, CsrMatrix):
        raise ShapeError("spmm left operand must be a CsrMatrix")
    db = _as_dense(b, "right operand")
    if a.cols != db.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {db.shape}")
    return backend.spmm(a.indptr, a.indices, a.data, db, a.rows)


def transpose(a):
    """Transpose, preserving the operand kind (dense or CSR)."""
    if isinstance(a, CsrMatrix):
        return a.transpose()
    return np.ascontiguousarray(_as_dense(a).T)


def frobenius_norm(a) -> float:
    """Square root of the sum of squared entries."""
    if isinstance(a, CsrMatrix):
        return float(np.sqrt(np.sum(a.data * a.data)))
    d = _as_dense(a)
    return float(np.sqrt(np.sum(d * d)))


def mean_center(x) -> np.ndarray:
    """Subtract the mean row from every row of ``x``.

    Equivalent to applying the orthogonal projector that removes the
    all-ones direction from the column space: the result's columns each
    sum to zero, and applying it twice is a no-op.
    """
    d = _as_dense(x)
    if d.shape[0] == 0:
        return d.copy()
    return d - d.mean(axis=0)


def _power_starts(n: int) -> list[np.ndarray]:
    """Two deterministic unit starting vectors for power iteration.

    The normalized all-ones vector, and the first coordinate vector
    orthogonalized against it.  The second start covers operators that
    annihilate (or nearly annihilate) constants, e.g. mean-centering:
    starting there, rounding can trap the iteration on a tiny constant
    fixpoint, so both starts are always run and the larger converged
    estimate wins.
    """
    ones = np.full((n, 1), 1.0 / np.sqrt(n))
    starts = [ones]
    if n > 1:
        e0 = np.zeros((n, 1))
        e0[0, 0] = 1.0
        v = e0 - (ones.T @ e0).item() * ones
        starts.append(v / np.sqrt(np.sum(v * v)))
    return starts


def _operator_norm(fwd, bwd, dim_in: int, tol: float, max_iter: int,
                   what: str) -> float:
    """Largest singular value of a linear operator by power iteration.

    ``fwd``/``bwd`` apply the operator and its adjoint to column
    vectors.  From each deterministic start, iterates
    ``v <- normalize(bwd(fwd(v)))`` until successive singular-value
    estimates differ by at most ``tol * max(1, sigma)``; the largest
    estimate over the starts is returned.  Running every start guards
    against an unlucky start sitting in (or rounding into) an invariant
    subspace well below the top singular value.  Emits
    ConvergenceWarning for any start that exhausts ``max_iter``.
    """
    if dim_in == 0:
        return 0.0
    best = 0.0
    for v in _power_starts(dim_in):
        sigma_prev = -np.inf
        sigma = 0.0
        converged = False
        for _ in range(max_iter):
            u = fwd(v)
            sigma = float(np.sqrt(np.sum(u * u)))
            if sigma == 0.0:
                # This start is annihilated exactly; nothing to refine.
                converged = True
                break
            w = bwd(u / sigma)
            nw = float(np.sqrt(np.sum(w * w)))
            if nw == 0.0:
                # Gram fixpoint (possible only through underflow): the
                # estimate cannot improve further from this start.
                converged = True
                break
            v = w / nw
            if abs(sigma - sigma_prev) <= tol * max(1.0, sigma):
                converged = True
                break
            sigma_prev = sigma
        if not converged:
            warnings.warn(
                f"power iteration for {what} did not converge to tol={tol} "
                f"within {max_iter} iterations; using last estimate",
                ConvergenceWarning, stacklevel=3)
        best = max(best, sigma)
    return best


def spectral_norm(a, tol: float = 1e-8, max_iter: int = 10000) -> float:
    """Largest singular value of a dense or CSR matrix.

    Power iteration on the Gram operator with deterministic starts (see
    ``_operator_norm``).  Accurate to roughly ``tol`` for matrices whose
    top two singular values are separated; warns on non-convergence.
    """
    if isinstance(a, CsrMatrix):
        at = a.transpose()
        rows, cols = a.shape
        fwd = lambda v: spmm(a, v)
        bwd = lambda u: spmm(at, u)
    else:
        d = _as_dense(a)
        dt = np.ascontiguousarray(d.T)
        rows, cols = d.shape
        fwd = lambda v: backend.matmul(d, v)
        bwd = lambda u: backend.matmul(dt, u)
    if rows == 0 or cols == 0:
        return 0.0
    return _operator_norm(fwd, bwd, cols, tol, max_iter, "spectral norm")


def centered_propagation_norm(adj: CsrMatrix, k: int, tol: float = 1e-8,
                              max_iter: int = 10000) -> float:
    """Operator norm of mean-centering composed with k-step propagation.

    For a propagation matrix ``P`` (given as ``adj``; the transpose is
    applied internally, matching how gradients propagate), returns the
    largest singular value of ``v -> mean_center((P^T)^k v)``.  At
    ``k = 0`` this is the centering projector itself, norm 1 whenever
    the graph has at least two nodes.  The value measures how much
    k-step propagation can preserve deviation from the per-node mean;
    it is nonincreasing in ``k``.
    """
    if not isinstance(adj, CsrMatrix):
        raise ShapeError("adj must be a CsrMatrix")
    if adj.rows != adj.cols:
        raise ShapeError(f"adj must be square, got {adj.shape}")
    if k < 0:
        raise ValueError("k must be nonnegative")
    n = adj.rows
    if n == 0:
        return 0.0
    adj_t = adj.transpose()

    def fwd(v):
        w = v
        for _ in range(k):
            w = spmm(adj_t, w)
        return mean_center(w)

    def bwd(u):
        w = mean_center(u)
        for _ in range(k):
            w = spmm(adj, w)
        return w

    return _operator_norm(fwd, bwd, n, tol, max_iter,
                          "centered propagation norm")
