"""Binary file formats for dense tensors ("BXT1") and sparse matrices ("BXS1").

BXT1: magic "BXT1" | rank u64 | extents u64 x rank | payload f32 row-major.
BXS1: magic "BXS1" | rows u64 | cols u64 | nnz u64 | row_offsets u64 x (rows+1)
      | col_indices u64 x nnz.
All integers and floats are little-endian.
"""
from __future__ import annotations

import struct

import numpy as np

from .errors import FileFormatError
from .tensor_core import SparseBinaryMatrix, as_feature

TENSOR_MAGIC = b"BXT1"
SPARSE_MAGIC = b"BXS1"

_U64 = np.dtype("<u8")
_F32 = np.dtype("<f4")


def write_tensor(path, tensor):
    tensor = as_feature(tensor, "tensor")
    with open(path, "wb") as f:
        f.write(TENSOR_MAGIC)
        f.write(struct.pack("<Q", tensor.ndim))
        f.write(np.asarray(tensor.shape, dtype=_U64).tobytes())
        f.write(tensor.astype(_F32, copy=False).tobytes())


def read_tensor(path):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != TENSOR_MAGIC:
        raise FileFormatError(f"{path}: bad magic {raw[:4]!r}, expected {TENSOR_MAGIC!r}")
    if len(raw) < 12:
        raise FileFormatError(f"{path}: truncated header")
    (rank,) = struct.unpack_from("<Q", raw, 4)
    if rank > 64:
        raise FileFormatError(f"{path}: implausible rank {rank}")
    head = 12 + 8 * rank
    if len(raw) < head:
        raise FileFormatError(f"{path}: truncated extents")
    shape = np.frombuffer(raw, dtype=_U64, count=rank, offset=12)
    count = int(np.prod(shape)) if rank else 1
    payload = np.frombuffer(raw, dtype=_F32, count=-1, offset=head)
    if payload.size != count:
        raise FileFormatError(
            f"{path}: payload holds {payload.size} values, shape needs {count}"
        )
    return payload.astype(np.float32).reshape([int(e) for e in shape])


def write_sparse(path, matrix):
    with open(path, "wb") as f:
        f.write(SPARSE_MAGIC)
        f.write(struct.pack("<QQQ", matrix.rows, matrix.cols, matrix.nnz))
        f.write(matrix.row_offsets.astype(_U64).tobytes())
        f.write(matrix.col_indices.astype(_U64).tobytes())


def read_sparse(path):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != SPARSE_MAGIC:
        raise FileFormatError(f"{path}: bad magic {raw[:4]!r}, expected {SPARSE_MAGIC!r}")
    if len(raw) < 28:
        raise FileFormatError(f"{path}: truncated header")
    rows, cols, nnz = struct.unpack_from("<QQQ", raw, 4)
    if rows > 2**40 or nnz > 2**40:
        raise FileFormatError(f"{path}: implausible header ({rows} rows, {nnz} nnz)")
    need = 28 + 8 * (rows + 1) + 8 * nnz
    if len(raw) != need:
        raise FileFormatError(f"{path}: expected {need} bytes, got {len(raw)}")
    offsets = np.frombuffer(raw, dtype=_U64, count=rows + 1, offset=28)
    indices = np.frombuffer(raw, dtype=_U64, count=nnz, offset=28 + 8 * (rows + 1))
    try:
        return SparseBinaryMatrix(
            rows, cols, offsets.astype(np.int64), indices.astype(np.int64)
        )
    except ValueError as exc:
        raise FileFormatError(f"{path}: inconsistent sparse payload: {exc}") from exc
