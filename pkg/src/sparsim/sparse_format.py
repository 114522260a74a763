"""Bitmap compression for sparse 8-bit operand vectors.

A dense vector is stored as a bitmap flagging its non-zero positions plus the
packed non-zero values in original order. Bit i of the bitmap corresponds to
dense index i; when a bitmap is serialized, bit i lives in byte i // 8 at bit
position i % 8 (LSB first). All objects are frozen after construction and can
be shared freely across threads.
"""

from dataclasses import dataclass
import struct

import numpy as np

__all__ = [
    "CompressedVector",
    "StreamFormatError",
    "as_bitmap",
    "compress",
    "decompress",
    "from_bytes",
    "mask_index",
    "popcount",
    "rank",
    "to_bytes",
]

_I8_MIN, _I8_MAX = -128, 127


class StreamFormatError(ValueError):
    """Raised for malformed serialized compressed streams."""


def as_bitmap(bits) -> np.ndarray:
    """Coerce a bit sequence (list of 0/1, bools, ndarray) to a frozen bool array."""
    bm = np.asarray(bits)
    if bm.ndim != 1:
        raise ValueError("bitmap must be one-dimensional")
    bm = bm.astype(bool)
    bm.setflags(write=False)
    return bm


def popcount(bitmap) -> int:
    """Number of set bits."""
    return int(np.count_nonzero(bitmap))


@dataclass(frozen=True, eq=False)
class CompressedVector:
    """A dense int8 vector in bitmap-compressed form.

    bitmap: one bool per dense index, True where the stored value is non-zero.
    values: the packed entries at set-bit positions, in increasing index order.
    """

    bitmap: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bm = as_bitmap(self.bitmap)
        vals = np.asarray(self.values)
        if vals.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if vals.dtype != np.int8:
            _check_int8_range(vals)
            vals = vals.astype(np.int8)
        else:
            vals = vals.copy() if vals.flags.writeable else vals
        if len(vals) != popcount(bm):
            raise ValueError(
                f"values count {len(vals)} != bitmap popcount {popcount(bm)}"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "bitmap", bm)
        object.__setattr__(self, "values", vals)

    @property
    def length(self) -> int:
        """Dense length K."""
        return len(self.bitmap)

    @property
    def nnz(self) -> int:
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, CompressedVector):
            return NotImplemented
        return np.array_equal(self.bitmap, other.bitmap) and np.array_equal(
            self.values, other.values
        )


def _check_int8_range(arr):
    if arr.size and (arr.min() < _I8_MIN or arr.max() > _I8_MAX):
        raise ValueError("values outside signed 8-bit range")


def compress(dense) -> CompressedVector:
    """Compress a dense int8 vector; exact zeros are dropped (bit unset)."""
    arr = np.asarray(dense)
    if arr.ndim != 1:
        raise ValueError("dense vector must be one-dimensional")
    if arr.dtype != np.int8:
        _check_int8_range(arr)
        arr = arr.astype(np.int8)
    bitmap = arr != 0
    return CompressedVector(bitmap, arr[bitmap])


def decompress(cv: CompressedVector) -> np.ndarray:
    """Reconstruct the dense vector: zeros at unset bits, values scattered to set bits."""
    if len(cv.values) != popcount(cv.bitmap):
        raise ValueError("corrupt compressed vector: values count != popcount")
    out = np.zeros(len(cv.bitmap), dtype=np.int8)
    out[cv.bitmap] = cv.values
    return out


def mask_index(bitmap) -> np.ndarray:
    """Original indexes of set bits, increasing; entry j is the original index
    of compressed element j."""
    idx = np.flatnonzero(bitmap).astype(np.int64)
    idx.setflags(write=False)
    return idx


def rank(bitmap, original_index: int) -> int:
    """Compressed position of a set bit: the count of set bits strictly before it."""
    bm = np.asarray(bitmap)
    if not 0 <= original_index < len(bm):
        raise IndexError(f"index {original_index} out of range for length {len(bm)}")
    if not bm[original_index]:
        raise ValueError(f"bit {original_index} is not set")
    return int(np.count_nonzero(bm[:original_index]))


# Serialized stream layout: uint32 LE dense length K, ceil(K/8) bitmap bytes
# (LSB-first within each byte), then one raw signed byte per stored value.

def to_bytes(cv: CompressedVector) -> bytes:
    k = len(cv.bitmap)
    packed = np.packbits(cv.bitmap, bitorder="little").tobytes()
    return struct.pack("<I", k) + packed + cv.values.tobytes()


def from_bytes(buf: bytes, offset: int = 0) -> tuple[CompressedVector, int]:
    """Decode one stream starting at offset; returns (vector, next offset)."""
    if len(buf) - offset < 4:
        raise StreamFormatError("truncated stream: missing length header")
    (k,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    nbytes = (k + 7) // 8
    if len(buf) - offset < nbytes:
        raise StreamFormatError("truncated stream: missing bitmap bytes")
    raw = np.frombuffer(buf, dtype=np.uint8, count=nbytes, offset=offset)
    bitmap = np.unpackbits(raw, count=k, bitorder="little").astype(bool)
    if k % 8 and np.unpackbits(raw, bitorder="little")[k:].any():
        raise StreamFormatError("non-zero padding bits past end of bitmap")
    offset += nbytes
    nvals = int(np.count_nonzero(bitmap))
    if len(buf) - offset < nvals:
        raise StreamFormatError("truncated stream: missing packed values")
    values = np.frombuffer(buf, dtype=np.int8, count=nvals, offset=offset)
    return CompressedVector(bitmap, values), offset + nvals
