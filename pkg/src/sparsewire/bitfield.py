"""Per-(pre, post) single-bit matrices backed by packed 64-bit words.

Rows are independent: concurrent mutation of distinct rows is safe, one
row must only ever be touched by one worker at a time.  Bits at column
indices >= num_post in the trailing word of each row are kept zero by
every operation.
"""

from __future__ import annotations

import numpy as np

from .errors import KTooLarge
from .rng import CounterRng

_WORD_BITS = 64


class Bitfield:
    __slots__ = ("num_pre", "num_post", "words", "_tail_mask")

    def __init__(self, num_pre: int, num_post: int):
        self.num_pre = num_pre
        self.num_post = num_post
        n_words = (num_post + _WORD_BITS - 1) // _WORD_BITS
        self.words = np.zeros((num_pre, n_words), dtype=np.uint64)
        tail_bits = num_post - (n_words - 1) * _WORD_BITS
        self._tail_mask = np.uint64((1 << tail_bits) - 1 if tail_bits < 64 else (1 << 64) - 1)

    # -- single-bit ops ------------------------------------------------

    def set_bit(self, i: int, j: int) -> None:
        self.words[i, j >> 6] |= np.uint64(1 << (j & 63))

    def clear_bit(self, i: int, j: int) -> None:
        self.words[i, j >> 6] &= np.uint64(~(1 << (j & 63)) & 0xFFFFFFFFFFFFFFFF)

    def test_bit(self, i: int, j: int) -> bool:
        return bool((self.words[i, j >> 6] >> np.uint64(j & 63)) & np.uint64(1))

    # -- vectorized ops over one row ------------------------------------

    def set_bits(self, i: int, cols) -> None:
        cols = np.asarray(cols, dtype=np.int64)
        np.bitwise_or.at(self.words[i], cols >> 6, np.uint64(1) << (cols & 63).astype(np.uint64))

    def clear_bits(self, i: int, cols) -> None:
        cols = np.asarray(cols, dtype=np.int64)
        masks = ~(np.uint64(1) << (cols & 63).astype(np.uint64))
        np.bitwise_and.at(self.words[i], cols >> 6, masks)

    def test_bits(self, i: int, cols) -> np.ndarray:
        cols = np.asarray(cols, dtype=np.int64)
        return ((self.words[i, cols >> 6] >> (cols & 63).astype(np.uint64)) & np.uint64(1)).astype(bool)

    def test_bits_rows(self, rows_cols: np.ndarray) -> np.ndarray:
        """Test bit (r, rows_cols[r, c]) for a full column-index matrix."""
        w = np.take_along_axis(self.words, (rows_cols >> 6).astype(np.int64), axis=1)
        return ((w >> (rows_cols & 63).astype(np.uint64)) & np.uint64(1)).astype(bool)

    def clear_row(self, i: int) -> None:
        self.words[i, :] = 0

    def clear_all(self) -> None:
        self.words[:, :] = 0

    def set_k_random_bits_in_row(self, i: int, k: int, rng: CounterRng) -> np.ndarray:
        """Set exactly k distinct bits, uniform over the C(num_post, k) subsets.

        Returns the chosen column indices (draw order).
        """
        if k > self.num_post:
            raise KTooLarge(f"k={k} exceeds row width {self.num_post}")
        cols = rng.sample_k_distinct(k, self.num_post)
        if k:
            self.set_bits(i, cols)
        return cols

    def set_bits_in_row(self, i: int) -> np.ndarray:
        """Ascending column indices of all set bits in row i."""
        row = self.words[i]
        bits = (row[:, None] >> np.arange(64, dtype=np.uint64)[None, :]) & np.uint64(1)
        idx = np.flatnonzero(bits.ravel())
        return idx[idx < self.num_post]

    def row_popcount(self, i: int) -> int:
        return int(np.bitwise_count(self.words[i]).sum())

    def popcount(self) -> int:
        return int(np.bitwise_count(self.words).sum())

    def randomize(self, rng: CounterRng) -> None:
        """Fill every addressable bit with an independent fair coin flip."""
        flat = rng.u64_array(self.words.size)
        self.words[:, :] = flat.reshape(self.words.shape)
        self.words[:, -1] &= self._tail_mask
