"""Dense float32 tensor and binary-sparse matrix primitives.

Dense feature tensors are plain C-contiguous float32 ndarrays (row-major,
last axis fastest), so reshapes between the tensor and matrix views used by
the transforms are zero-copy. Sparse matrices are CSR with implicit unit
values: every transport matrix in this package is binary, so no value array
is stored.
"""
from __future__ import annotations

import functools

import numpy as np
import scipy.sparse as sp

from .errors import ShapeError, ValidationError

__all__ = [
    "as_feature",
    "SparseBinaryMatrix",
    "matmul",
    "spmm",
    "hadamard",
    "scatter_add",
    "reduce_sum",
]

DTYPE = np.float32


def as_feature(x, name="tensor"):
    """Coerce to a C-contiguous float32 ndarray (the dense tensor type)."""
    arr = np.ascontiguousarray(x, dtype=DTYPE)
    if arr.size and not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains non-finite values")
    return arr


class SparseBinaryMatrix:
    """CSR matrix whose stored entries are all exactly 1.

    Args:
        rows: number of rows.
        cols: number of columns.
        row_offsets: int64 array of length rows+1, non-decreasing, starting
            at 0; row i owns col_indices[row_offsets[i]:row_offsets[i+1]].
        col_indices: int64 array of column ids, strictly increasing within
            each row.
    """

    __slots__ = ("rows", "cols", "row_offsets", "col_indices", "__dict__")

    def __init__(self, rows, cols, row_offsets, col_indices):
        rows = int(rows)
        cols = int(cols)
        row_offsets = np.ascontiguousarray(row_offsets, dtype=np.int64)
        col_indices = np.ascontiguousarray(col_indices, dtype=np.int64)
        if rows < 0 or cols < 0:
            raise ValidationError("matrix extents must be non-negative")
        if row_offsets.ndim != 1 or row_offsets.shape[0] != rows + 1:
            raise ValidationError(
                f"row_offsets must have length rows+1={rows + 1}, "
                f"got {row_offsets.shape}"
            )
        if row_offsets[0] != 0:
            raise ValidationError("row_offsets[0] must be 0")
        if np.any(np.diff(row_offsets) < 0):
            raise ValidationError("row_offsets must be non-decreasing")
        if col_indices.ndim != 1 or col_indices.shape[0] != row_offsets[-1]:
            raise ValidationError(
                f"col_indices length {col_indices.shape[0]} != nnz "
                f"{int(row_offsets[-1])}"
            )
        if col_indices.size:
            if col_indices.min() < 0 or col_indices.max() >= cols:
                raise ValidationError("column index out of range")
            # strictly increasing within each row: decreases may only occur
            # at row boundaries
            steps = np.diff(col_indices)
            bad = np.flatnonzero(steps <= 0) + 1
            if bad.size:
                starts = row_offsets[1:-1]
                if not np.isin(bad, starts).all():
                    raise ValidationError("col_indices must strictly increase within a row")
        row_offsets.setflags(write=False)
        col_indices.setflags(write=False)
        self.rows = rows
        self.cols = cols
        self.row_offsets = row_offsets
        self.col_indices = col_indices

    @property
    def nnz(self):
        return int(self.row_offsets[-1])

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def density(self):
        denom = self.rows * self.cols
        return self.nnz / denom if denom else 0.0

    @classmethod
    def from_coo(cls, rows, cols, row_ids, col_ids):
        """Build from unordered (row, col) pairs; duplicates collapse to 1."""
        row_ids = np.asarray(row_ids, dtype=np.int64).ravel()
        col_ids = np.asarray(col_ids, dtype=np.int64).ravel()
        if row_ids.shape != col_ids.shape:
            raise ShapeError.mismatch("from_coo", row_ids.shape, col_ids.shape)
        if row_ids.size:
            if row_ids.min() < 0 or row_ids.max() >= rows:
                raise ValidationError("row index out of range")
            if col_ids.min() < 0 or col_ids.max() >= cols:
                raise ValidationError("column index out of range")
            flat = np.unique(row_ids * np.int64(cols) + col_ids)
            row_ids, col_ids = flat // cols, flat % cols
        counts = np.bincount(row_ids, minlength=rows)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        return cls(rows, cols, offsets, col_ids)

    @classmethod
    def from_dense(cls, dense):
        dense = np.asarray(dense)
        if dense.ndim != 2:
            raise ShapeError(f"from_dense: expected a matrix, got shape {dense.shape}")
        row_ids, col_ids = np.nonzero(dense)
        return cls.from_coo(dense.shape[0], dense.shape[1], row_ids, col_ids)

    def densify(self, dtype=DTYPE):
        out = np.zeros((self.rows, self.cols), dtype=dtype)
        row_ids = np.repeat(np.arange(self.rows), np.diff(self.row_offsets))
        out[row_ids, self.col_indices] = 1
        return out

    @functools.cached_property
    def _scipy(self):
        # read-only execution handle; unit values materialized once
        data = np.ones(self.nnz, dtype=DTYPE)
        return sp.csr_matrix(
            (data, self.col_indices, self.row_offsets), shape=self.shape
        )

    def row(self, i):
        """Column ids of row i (a read-only view)."""
        return self.col_indices[self.row_offsets[i] : self.row_offsets[i + 1]]

    def __eq__(self, other):
        if not isinstance(other, SparseBinaryMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
        )

    def __hash__(self):
        return hash((self.shape, self.nnz))

    def __repr__(self):
        return (
            f"SparseBinaryMatrix({self.rows}x{self.cols}, nnz={self.nnz}, "
            f"density={self.density:.4g})"
        )


def matmul(a, b):
    """Real matrix product of two rank-2 float32 tensors.

    Accumulation happens in at least float32 (BLAS sgemm).
    """
    a = as_feature(a, "a")
    b = as_feature(b, "b")
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError.mismatch("matmul", a.shape, b.shape)
    return a @ b


def spmm(s, b):
    """Sparse-dense product: densify(s) @ b without densifying.

    Args:
        s: SparseBinaryMatrix of shape (m, k).
        b: dense tensor of shape (k, n).

    Returns:
        Dense (m, n) float32 tensor. Within each output row the addends are
        accumulated in ascending column order, so results are reproducible.
    """
    b = as_feature(b, "b")
    if b.ndim != 2 or s.cols != b.shape[0]:
        raise ShapeError.mismatch("spmm", s.shape, b.shape)
    out = s._scipy @ b
    return np.ascontiguousarray(out, dtype=DTYPE)


def hadamard(a, b):
    """Elementwise product; b may broadcast (extent-1 axes stretch)."""
    a = as_feature(a, "a")
    b = as_feature(b, "b")
    try:
        out_shape = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError.mismatch("hadamard", a.shape, b.shape) from None
    if out_shape != a.shape:
        raise ShapeError.mismatch("hadamard", a.shape, b.shape)
    return a * b


def scatter_add(values, targets, out_cells):
    """Sum rows of `values` into `out_cells` buckets.

    Args:
        values: (p, C) float32 rows.
        targets: (p,) integer cell index per row; negative means "absent"
            and the row is dropped.
        out_cells: number of output cells S.

    Returns:
        (S, C) float32 tensor; out[s] is the sum of all rows with target s,
        accumulated in ascending input-row order.

    Raises:
        IndexError: if any target >= out_cells.
    """
    values = as_feature(values, "values")
    if values.ndim != 2:
        raise ShapeError(f"scatter_add: values must be (p, C), got {values.shape}")
    targets = np.asarray(targets, dtype=np.int64).ravel()
    if targets.shape[0] != values.shape[0]:
        raise ShapeError.mismatch("scatter_add", values.shape, targets.shape)
    out_cells = int(out_cells)
    if targets.size and targets.max() >= out_cells:
        raise IndexError(
            f"scatter_add: target {int(targets.max())} >= out_cells {out_cells}"
        )
    out = np.zeros((out_cells, values.shape[1]), dtype=DTYPE)
    present = targets >= 0
    # np.add.at applies updates in input order, matching the sequential oracle
    np.add.at(out, targets[present], values[present])
    return out


def reduce_sum(t, axis):
    """Sum over one axis; the axis is removed from the shape."""
    t = as_feature(t, "t")
    axis = int(axis)
    if not 0 <= axis < t.ndim:
        raise ShapeError(f"reduce_sum: axis {axis} out of range for shape {t.shape}")
    return np.sum(t, axis=axis, dtype=DTYPE)
