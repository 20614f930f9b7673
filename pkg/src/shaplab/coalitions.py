"""Coalitions: subsets of the player set {0, ..., d-1} backed by bitmasks."""

from __future__ import annotations

from typing import Iterable, Iterator

import numpy as np

MAX_PLAYERS = 512


class Coalition:
    """An immutable subset of players 0..d-1 stored as an integer bitmask.

    Membership, union, intersection, and complement are O(1) bit operations.
    The capacity is capped at MAX_PLAYERS players; a larger player count is
    rejected at construction rather than silently degraded.
    """

    __slots__ = ("mask", "d")

    def __init__(self, mask: int, d: int):
        if not 0 < d <= MAX_PLAYERS:
            raise ValueError(f"player count must be in 1..{MAX_PLAYERS}, got {d}")
        mask = int(mask)
        if mask < 0 or mask >> d:
            raise ValueError(f"mask {mask:#x} has bits outside players 0..{d - 1}")
        self.mask = mask
        self.d = d

    @classmethod
    def empty(cls, d: int) -> "Coalition":
        return cls(0, d)

    @classmethod
    def full(cls, d: int) -> "Coalition":
        return cls((1 << d) - 1, d)

    @classmethod
    def from_indices(cls, indices: Iterable[int], d: int) -> "Coalition":
        mask = 0
        for i in indices:
            if not 0 <= i < d:
                raise ValueError(f"player {i} outside 0..{d - 1}")
            mask |= 1 << i
        return cls(mask, d)

    def __contains__(self, player: int) -> bool:
        return 0 <= player < self.d and bool((self.mask >> player) & 1)

    def __len__(self) -> int:
        return self.mask.bit_count()

    def __iter__(self) -> Iterator[int]:
        mask = self.mask
        while mask:
            low = mask & -mask
            yield low.bit_length() - 1
            mask ^= low

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Coalition)
            and self.mask == other.mask
            and self.d == other.d
        )

    def __hash__(self) -> int:
        return hash((self.mask, self.d))

    def __repr__(self) -> str:
        return f"Coalition({sorted(self)}, d={self.d})"

    def _check_same_space(self, other: "Coalition") -> None:
        if self.d != other.d:
            raise ValueError(f"player counts differ: {self.d} vs {other.d}")

    def add(self, player: int) -> "Coalition":
        if not 0 <= player < self.d:
            raise ValueError(f"player {player} outside 0..{self.d - 1}")
        return Coalition(self.mask | (1 << player), self.d)

    def discard(self, player: int) -> "Coalition":
        if not 0 <= player < self.d:
            raise ValueError(f"player {player} outside 0..{self.d - 1}")
        return Coalition(self.mask & ~(1 << player), self.d)

    def union(self, other: "Coalition") -> "Coalition":
        self._check_same_space(other)
        return Coalition(self.mask | other.mask, self.d)

    __or__ = union

    def intersection(self, other: "Coalition") -> "Coalition":
        self._check_same_space(other)
        return Coalition(self.mask & other.mask, self.d)

    __and__ = intersection

    def complement(self) -> "Coalition":
        return Coalition(self.mask ^ ((1 << self.d) - 1), self.d)

    def indices(self) -> tuple[int, ...]:
        return tuple(self)

    def to_bits(self) -> np.ndarray:
        """Membership as a boolean vector of length d."""
        return np.array([(self.mask >> j) & 1 for j in range(self.d)], dtype=bool)


def mask_dtype(d: int):
    """Array dtype for bitmasks: uint64 when shifts fit, Python ints otherwise."""
    return np.uint64 if d <= 64 else object


def player_bits(d: int) -> np.ndarray:
    """Array of single-player masks [1 << 0, ..., 1 << (d-1)]."""
    if d <= 64:
        return (np.uint64(1) << np.arange(d, dtype=np.uint64)).astype(np.uint64)
    return np.array([1 << j for j in range(d)], dtype=object)


def full_mask(d: int):
    """Bitmask of the grand coalition."""
    m = (1 << d) - 1
    return np.uint64(m) if d <= 64 else m


def masks_to_bits(masks: np.ndarray, d: int) -> np.ndarray:
    """Expand an array of bitmasks into a (len(masks), d) boolean matrix."""
    masks = np.asarray(masks)
    if masks.dtype != object and d <= 64:
        shifts = np.arange(d, dtype=np.uint64)
        return ((masks[:, None].astype(np.uint64) >> shifts) & np.uint64(1)).astype(bool)
    out = np.empty((len(masks), d), dtype=bool)
    for r, m in enumerate(masks):
        m = int(m)
        for j in range(d):
            out[r, j] = (m >> j) & 1
    return out


def bits_to_masks(bits: np.ndarray) -> np.ndarray:
    """Inverse of masks_to_bits for a (n, d) boolean matrix."""
    bits = np.asarray(bits, dtype=bool)
    d = bits.shape[1]
    if d <= 64:
        return (bits.astype(np.uint64) * player_bits(d)).sum(axis=1, dtype=np.uint64)
    out = np.empty(len(bits), dtype=object)
    for r in range(len(bits)):
        m = 0
        for j in range(d):
            if bits[r, j]:
                m |= 1 << j
        out[r] = m
    return out
