"""Bit-packed +/-1 matrices and exact XNOR-popcount matrix products.

Encoding: bit 1 is +1, bit 0 is -1. Each row is packed least-significant-bit
first by column into 64-bit words and padded to a whole number of words; the
padding bits are always zero.
"""

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import InvalidInputError, InvalidParamsError, ShapeError

WORD_BITS = 64


def words_per_row(cols: int) -> int:
    return -(-cols // WORD_BITS)


@dataclass(frozen=True, eq=False)
class BitMatrix:
    """Row-major bit-packed +/-1 matrix.

    ``words`` has shape ``(rows, words_per_row(cols))`` and dtype uint64.
    """

    rows: int
    cols: int
    words: np.ndarray

    def __post_init__(self):
        if self.rows < 0 or self.cols < 0:
            raise InvalidParamsError("negative BitMatrix dimensions")
        expected = (self.rows, words_per_row(self.cols))
        if self.words.shape != expected or self.words.dtype != np.uint64:
            raise InvalidParamsError(
                f"words must be uint64 of shape {expected}, got {self.words.dtype} {self.words.shape}"
            )
        tail = self.cols % WORD_BITS
        if tail and self.rows and np.any(self.words[:, -1] >> np.uint64(tail)):
            raise InvalidParamsError("padding bits must be zero")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def __eq__(self, other):
        if not isinstance(other, BitMatrix):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.words, other.words)

    def to_bits(self) -> np.ndarray:
        """Unpack to a ``(rows, cols)`` uint8 array of 0/1 bits."""
        as_bytes = self.words.astype("<u8").view(np.uint8).reshape(self.rows, -1)
        bits = np.unpackbits(as_bytes, axis=1, bitorder="little")
        return bits[:, : self.cols]

    def to_signs(self) -> np.ndarray:
        """Unpack to a ``(rows, cols)`` int8 array of +/-1."""
        return self.to_bits().astype(np.int8) * 2 - 1

    @classmethod
    def from_bits(cls, bits) -> "BitMatrix":
        bits = np.asarray(bits)
        if bits.ndim != 2:
            raise ShapeError(f"expected a 2-D bit array, got ndim={bits.ndim}")
        rows, cols = bits.shape
        n_words = words_per_row(cols)
        padded = np.zeros((rows, n_words * WORD_BITS), dtype=np.uint8)
        padded[:, :cols] = bits != 0
        packed = np.packbits(padded, axis=1, bitorder="little")
        words = packed.view("<u8").astype(np.uint64).reshape(rows, n_words)
        return cls(rows, cols, np.ascontiguousarray(words))


def sign_quantize(m) -> BitMatrix:
    """Pack ``Sign(m)`` with ``Sign(0) = +1``."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"sign_quantize needs a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("sign_quantize: matrix has non-finite entries")
    return BitMatrix.from_bits(m >= 0)


def xnor_popcount_gemm(x: BitMatrix, w: BitMatrix, backend: str | None = None) -> np.ndarray:
    """Exact +/-1 product ``x @ w.T`` as int64, via ``2*popcount(XNOR) - cols``.

    ``w`` is stored transposed: one packed row per output column.
    """
    if x.cols != w.cols:
        raise ShapeError(f"inner dimensions differ: x has {x.cols} columns, w has {w.cols}")
    kernels = _backend.get(backend)
    return kernels.xnor_popcount_gemm(
        np.ascontiguousarray(x.words), np.ascontiguousarray(w.words), x.cols
    )
