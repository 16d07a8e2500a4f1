"""Pure-Python (numpy) fallback kernels.

Same surface as the compiled extension in ``_kernels.pyx``.  The dense
product delegates to numpy's BLAS, which is run-to-run deterministic on a
fixed build but may order partial sums differently from the compiled
kernel; agreement between the two backends is numerical (tested at
1e-12), not bitwise.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense product ``a @ b``."""
    if a.shape[1] != b.shape[0]:
        raise ValueError("inner dimensions do not match")
    return a @ b


def spmm(indptr: np.ndarray, indices: np.ndarray, data: np.ndarray,
         b: np.ndarray, rows: int) -> np.ndarray:
    """Sparse-dense product: CSR ``(indptr, indices, data)`` times ``b``.

    Uses a segmented reduction over the expanded row blocks; rows with no
    stored entries stay zero (``np.add.reduceat`` alone would misassign
    them, so empty rows are masked out of the reduction).
    """
    n = b.shape[1]
    out = np.zeros((rows, n), dtype=np.float64)
    nnz = indices.shape[0]
    if nnz == 0:
        return out
    expanded = data[:, None] * b[indices]
    starts = indptr[:-1]
    nonempty = indptr[1:] > starts
    if nonempty.any():
        out[nonempty] = np.add.reduceat(expanded, starts[nonempty], axis=0)
    return out
