"""Workload generation and matrix file I/O.

Matrices are signed 8-bit, row-major. The binary file format is:

    bytes 0..3   magic "SDM1"
    bytes 4..7   rows, uint32 little-endian
    bytes 8..11  cols, uint32 little-endian
    byte  12     dtype code (0x01 = signed 8-bit)
    bytes 13..   payload, rows*cols raw signed bytes

load_matrix also accepts a plain text grid (whitespace-separated integers,
one row per line) for small hand-written cases.
"""

import struct
from pathlib import Path

import numpy as np

__all__ = [
    "BadDtypeError",
    "BadMagicError",
    "MatrixFileError",
    "TruncatedFileError",
    "gen_random",
    "load_matrix",
    "pw_to_gemm",
    "store_matrix",
]

MAGIC = b"SDM1"
DTYPE_INT8 = 0x01
_HEADER = struct.Struct("<4sIIB")


class MatrixFileError(Exception):
    """Base for matrix file problems."""


class BadMagicError(MatrixFileError):
    pass


class BadDtypeError(MatrixFileError):
    pass


class TruncatedFileError(MatrixFileError):
    pass


def gen_random(rows: int, cols: int, sparsity: float, seed) -> np.ndarray:
    """Random int8 matrix with exactly round(sparsity * rows * cols) zeros.

    Zero positions come from a seeded uniform shuffle, so grid points in a
    sweep have noiseless density. Non-zero entries are uniform over
    [-128, 127] excluding 0, keeping stated sparsity equal to bitmap sparsity
    after compression. Deterministic per seed.
    """
    if not 0.0 <= sparsity <= 1.0:
        raise ValueError("sparsity must be within [0, 1]")
    if rows < 0 or cols < 0:
        raise ValueError("dims must be >= 0")
    total = rows * cols
    rng = np.random.default_rng(seed)
    raw = rng.integers(1, 256, size=total, dtype=np.int16)
    raw[raw > 127] -= 256
    flat = raw.astype(np.int8)
    n_zero = int(round(sparsity * total))
    positions = rng.permutation(total)
    flat[positions[:n_zero]] = 0
    return flat.reshape(rows, cols)


def store_matrix(mat, path):
    """Write a matrix in the binary format."""
    arr = np.asarray(mat)
    if arr.ndim != 2:
        raise ValueError("matrix must be 2-D")
    if arr.dtype != np.int8:
        if arr.size and (arr.min() < -128 or arr.max() > 127):
            raise ValueError("matrix entries outside signed 8-bit range")
        arr = arr.astype(np.int8)
    rows, cols = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, rows, cols, DTYPE_INT8))
        fh.write(np.ascontiguousarray(arr).tobytes())


def load_matrix(path) -> np.ndarray:
    """Read a matrix from the binary format or a text grid."""
    data = Path(path).read_bytes()
    if data[:4] == MAGIC:
        return _load_binary(data)
    if not data.strip():
        raise TruncatedFileError(f"{path}: empty file")
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError:
        raise BadMagicError(f"{path}: bad magic and not a text grid") from None
    return _load_text(text, path)


def _load_binary(data) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise TruncatedFileError("binary matrix header truncated")
    magic, rows, cols, dtype = _HEADER.unpack_from(data)
    if dtype != DTYPE_INT8:
        raise BadDtypeError(f"unsupported dtype code 0x{dtype:02x}")
    need = rows * cols
    payload = data[_HEADER.size :]
    if len(payload) < need:
        raise TruncatedFileError(
            f"payload holds {len(payload)} bytes, header promises {need}"
        )
    arr = np.frombuffer(payload, dtype=np.int8, count=need)
    return arr.reshape(rows, cols).copy()


def _load_text(text, path) -> np.ndarray:
    rows = []
    width = None
    for ln, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = [int(tok) for tok in line.split()]
        except ValueError:
            raise BadMagicError(f"{path}:{ln}: not an integer grid") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise BadMagicError(f"{path}:{ln}: ragged row ({len(row)} != {width})")
        rows.append(row)
    if not rows:
        raise TruncatedFileError(f"{path}: no rows in text grid")
    arr = np.array(rows)
    if arr.min() < -128 or arr.max() > 127:
        raise BadMagicError(f"{path}: entries outside signed 8-bit range")
    return arr.astype(np.int8)


def pw_to_gemm(weights, activations):
    """Map a pointwise (1x1) convolution layer onto matmul operands.

    weights: [c_out x c_in], activations: [c_in x (h*w)] with channels as
    rows. The product of the returned pair is the layer output [c_out x h*w].
    """
    w = np.asarray(weights)
    x = np.asarray(activations)
    if w.ndim != 2 or x.ndim != 2:
        raise ValueError("operands must be 2-D")
    if w.shape[1] != x.shape[0]:
        raise ValueError(
            f"channel dims disagree: weights {w.shape} vs activations {x.shape}"
        )
    return w, x
