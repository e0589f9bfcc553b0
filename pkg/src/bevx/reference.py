"""Ground-truth camera-to-BEV pipeline: lift, scatter splat, and the exact
sparse transport matrix.

Everything else in this package is validated against these routines. They
are written for clarity over speed; `transform` holds the fast route.

Shape glossary: W = N_c * W_I flattened (camera, column) index, S = H_B * W_B
flattened BEV cell index, C = channels, N_d = depth bins. Lifted tensors are
(W, N_d, C); column j of the transport matrix is j = (n * W_I + w) * N_d + d
(depth fastest).
"""
from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .tensor_core import SparseBinaryMatrix, as_feature, scatter_add, spmm

__all__ = [
    "lift",
    "lift_full",
    "splat_reference",
    "splat_full",
    "build_ftm",
    "vt_ftm",
]


def lift(features, depths):
    """Outer-product lift: out[w, d, c] = depths[w, d] * features[w, c].

    Args:
        features: (W, C) per-column feature vectors.
        depths: (W, N_d) per-column categorical depth distributions.

    Returns:
        (W, N_d, C) lifted tensor.
    """
    f = as_feature(features, "features")
    d = as_feature(depths, "depths")
    if f.ndim != 2 or d.ndim != 2:
        raise ShapeError(f"lift: expected 2-d inputs, got {f.shape} and {d.shape}")
    if f.shape[0] != d.shape[0]:
        raise ShapeError.mismatch("lift", f.shape, d.shape)
    return d[:, :, None] * f[:, None, :]


def lift_full(features, depths):
    """Full-height lift: out[n, h, w, d, c] = depths[n, h, w, d] * features[n, h, w, c].

    Slow-path variant used only by the height-compression ablation.
    """
    f = as_feature(features, "features")
    d = as_feature(depths, "depths")
    if f.ndim != 4 or d.ndim != 4 or f.shape[:3] != d.shape[:3]:
        raise ShapeError.mismatch("lift_full", f.shape, d.shape)
    return d[..., :, None] * f[..., None, :]


def _check_lifted(lifted, frustum):
    lifted = as_feature(lifted, "lifted")
    if lifted.ndim != 3:
        raise ShapeError(f"lifted must be (W, N_d, C), got {lifted.shape}")
    w = frustum.n_cameras * frustum.n_columns
    if lifted.shape[0] != w or lifted.shape[1] != frustum.n_depths:
        raise ShapeError.mismatch(
            "splat", lifted.shape, (w, frustum.n_depths, "C")
        )
    return lifted


def splat_reference(lifted, frustum, grid):
    """Scatter-add every lifted sample into its BEV cell.

    For each (camera, column, depth) sample whose ground point falls inside
    the grid, the C-vector lifted[(n, w), d, :] is added to that cell.
    Accumulation runs in ascending sample order.

    Returns:
        (S, C) BEV feature tensor.
    """
    lifted = _check_lifted(lifted, frustum)
    targets = grid.locate_many(frustum.points.reshape(-1, 2))
    values = lifted.reshape(-1, lifted.shape[2])
    return scatter_add(values, targets, grid.n_cells)


def splat_full(lifted_full, frusta, grid):
    """Full-height splat: one scatter pass per feature row, summed.

    Args:
        lifted_full: (N_c, H_I, W_I, N_d, C) tensor from lift_full.
        frusta: sequence of H_I FrustumGeometry objects, one per feature row
            (row h back-projected through its own pixel row).
        grid: BevGrid.

    Returns:
        (S, C) BEV feature tensor.
    """
    lifted_full = as_feature(lifted_full, "lifted_full")
    if lifted_full.ndim != 5:
        raise ShapeError(
            f"lifted_full must be (N_c, H_I, W_I, N_d, C), got {lifted_full.shape}"
        )
    n_c, h_i, w_i, n_d, c = lifted_full.shape
    if len(frusta) != h_i:
        raise ShapeError(f"need {h_i} per-row frusta, got {len(frusta)}")
    out = np.zeros((grid.n_cells, c), dtype=lifted_full.dtype)
    for h, fr in enumerate(frusta):
        out += splat_reference(
            lifted_full[:, h].reshape(n_c * w_i, n_d, c), fr, grid
        )
    return out


def build_ftm(frustum, grid):
    """Exact transport matrix: entry (s, (n*W_I+w)*N_d+d) = 1 iff the sample
    (n, w, d) lands in cell s.

    Every column has at most one nonzero because the grid cells partition
    the plane; samples outside the grid produce no entry.

    Returns:
        SparseBinaryMatrix of shape (S, W * N_d).
    """
    n_cols = frustum.n_cameras * frustum.n_columns * frustum.n_depths
    targets = grid.locate_many(frustum.points.reshape(-1, 2))
    present = targets >= 0
    return SparseBinaryMatrix.from_coo(
        grid.n_cells, n_cols, targets[present], np.flatnonzero(present)
    )


def vt_ftm(lifted, ftm):
    """Transport-matrix transform: BEV = ftm @ lifted reshaped to (W*N_d, C)."""
    lifted = as_feature(lifted, "lifted")
    if lifted.ndim != 3:
        raise ShapeError(f"lifted must be (W, N_d, C), got {lifted.shape}")
    flat = lifted.reshape(-1, lifted.shape[2])
    if ftm.cols != flat.shape[0]:
        raise ShapeError.mismatch("vt_ftm", (ftm.rows, ftm.cols), flat.shape)
    return spmm(ftm, flat)
