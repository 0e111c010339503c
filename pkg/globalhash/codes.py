"""Packed binary codes, Hamming distance, ranking and radius lookup."""

from __future__ import annotations

import struct
from pathlib import Path
from typing import List, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

CODE_MAGIC = b"GHSC"
WORD_BITS = 64


class CodeError(ValueError):
    """Error for malformed or mismatched binary codes."""

    pass


def words_for(c: int) -> int:
    """Get the number of 64-bit words needed to hold ``c`` bits."""
    return (c + WORD_BITS - 1) // WORD_BITS


class CodeMatrix(BaseModel):
    r"""
    An n×c matrix of codes in {−1, +1}, packed 64 bits per word.

    Bit ``j`` of row ``i`` lives in word ``j // 64`` at position ``j % 64``,
    and a set bit means +1.

    :param c:
        code length in bits
    :param words:
        an n×⌈c/64⌉ array of unsigned 64-bit words whose pad bits are zero
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    c: int
    words: np.ndarray

    @field_validator("words", mode="before")
    def words_must_be_uint64(cls, v) -> np.ndarray:
        """Store packed words as a 2-D uint64 array."""
        result = np.ascontiguousarray(v, dtype=np.uint64)
        if result.ndim != 2:
            raise ValueError(f"packed words must be 2-dimensional, not {result.ndim}")
        return result

    @model_validator(mode="after")
    def padding_must_be_zero(self) -> CodeMatrix:
        """Check the word count and that unused trailing bits are clear."""
        if self.c < 1:
            raise ValueError(f"code length must be at least 1, not {self.c}")
        if self.words.shape[1] != words_for(self.c):
            raise ValueError(
                f"{self.c} bits need {words_for(self.c)} words per row, "
                f"got {self.words.shape[1]}"
            )
        used = self.c % WORD_BITS
        if used and self.words.shape[0]:
            pad_mask = ~np.uint64((1 << used) - 1)
            if np.any(self.words[:, -1] & pad_mask):
                raise ValueError("trailing pad bits must be zero")
        return self

    @classmethod
    def from_bits(cls, bits: np.ndarray) -> CodeMatrix:
        """Pack an n×c boolean matrix, where True stands for +1."""
        matrix = np.asarray(bits, dtype=bool)
        if matrix.ndim != 2:
            raise CodeError("bits must be a 2-dimensional matrix")
        n, c = matrix.shape
        padded = np.zeros((n, words_for(c) * WORD_BITS), dtype=bool)
        padded[:, :c] = matrix
        packed = np.packbits(padded, axis=1, bitorder="little")
        words = np.ascontiguousarray(packed).view("<u8").astype(np.uint64)
        return cls(c=c, words=words.reshape(n, words_for(c)))

    @classmethod
    def from_signs(cls, signs: np.ndarray) -> CodeMatrix:
        """Pack an n×c matrix of −1/+1 values."""
        return cls.from_bits(np.asarray(signs) > 0)

    @property
    def n(self) -> int:
        """Get the number of coded points."""
        return self.words.shape[0]

    def to_bits(self) -> np.ndarray:
        """Unpack into an n×c boolean matrix."""
        as_bytes = self.words.astype("<u8").view(np.uint8)
        return np.unpackbits(as_bytes, axis=1, bitorder="little")[:, : self.c].astype(bool)

    def to_signs(self) -> np.ndarray:
        """Unpack into an n×c int8 matrix of −1/+1 values."""
        return np.where(self.to_bits(), 1, -1).astype(np.int8)

    def row(self, i: int) -> np.ndarray:
        """Get the packed words of one code row."""
        return self.words[i]

    def take(self, indices) -> CodeMatrix:
        """Get a new CodeMatrix holding the selected rows."""
        return CodeMatrix(c=self.c, words=self.words[np.asarray(indices, dtype=np.intp)])

    def __str__(self) -> str:
        return f"CodeMatrix(n={self.n}, c={self.c})"


def column_balance(codes: CodeMatrix) -> np.ndarray:
    """Get the sum of ±1 values in each code column."""
    return codes.to_signs().sum(axis=0, dtype=np.int64)


def hamming(a: np.ndarray, b: np.ndarray) -> int:
    """Count the differing bits between two packed code rows."""
    left = np.asarray(a, dtype=np.uint64)
    right = np.asarray(b, dtype=np.uint64)
    if left.shape != right.shape:
        raise CodeError(f"code rows differ in length: {left.shape} vs {right.shape}")
    return int(np.bitwise_count(left ^ right).sum())


def hamming_to_all(query: np.ndarray, base: CodeMatrix) -> np.ndarray:
    """Get the Hamming distance from one packed row to every row of ``base``."""
    row = np.asarray(query, dtype=np.uint64)
    if row.shape != (base.words.shape[1],):
        raise CodeError(
            f"query has {row.shape} words but base rows have {base.words.shape[1]}"
        )
    return np.bitwise_count(base.words ^ row).sum(axis=1, dtype=np.uint16)


def rank_by_hamming(query: np.ndarray, base: CodeMatrix, k: int) -> np.ndarray:
    """
    Get the indices of the ``k`` base rows closest to ``query``.

    Ties are broken by ascending index.
    """
    if not 0 <= k <= base.n:
        raise CodeError(f"k must be between 0 and {base.n}, not {k}")
    distances = hamming_to_all(query, base)
    # stable argsort of small unsigned keys is a linear radix sort
    return np.argsort(distances, kind="stable")[:k]


def lookup_within_radius(query: np.ndarray, base: CodeMatrix, radius: int) -> np.ndarray:
    """Get the ascending indices of base rows within ``radius`` bits of ``query``."""
    if radius < 0:
        raise CodeError(f"radius must be non-negative, not {radius}")
    return np.flatnonzero(hamming_to_all(query, base) <= radius)


def write_codes(codes: CodeMatrix, path: Union[str, Path]) -> None:
    """
    Write a GHSC code file.

    Layout (little-endian): magic ``GHSC``, n as u32, c as u32, then
    n·⌈c/64⌉ u64 words row by row.
    """
    with open(path, "wb") as f:
        f.write(CODE_MAGIC)
        f.write(struct.pack("<II", codes.n, codes.c))
        f.write(codes.words.astype("<u8").tobytes())


def read_codes(path: Union[str, Path]) -> CodeMatrix:
    """Read a GHSC code file written by :func:`write_codes`."""
    raw = Path(path).read_bytes()
    if raw[:4] != CODE_MAGIC:
        raise CodeError(f"{path} is not a GHSC code file")
    if len(raw) < 12:
        raise CodeError(f"{path} has a truncated header")
    n, c = struct.unpack_from("<II", raw, 4)
    width = words_for(c)
    expected = 12 + 8 * n * width
    if len(raw) != expected:
        raise CodeError(f"{path} should hold {expected} bytes, found {len(raw)}")
    words = np.frombuffer(raw, dtype="<u8", offset=12).astype(np.uint64)
    return CodeMatrix(c=c, words=words.reshape(n, width))


def require_same_length(*code_sets: CodeMatrix) -> int:
    """Get the shared code length of several CodeMatrix objects."""
    lengths: List[int] = sorted({codes.c for codes in code_sets})
    if len(lengths) != 1:
        raise CodeError(f"code files disagree on code length: {lengths}")
    return lengths[0]
