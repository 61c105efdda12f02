"""Permutation arithmetic: Lehmer-code ranking, position lookup and position distance.

A full rank over ``R`` items is stored as a tuple ``items`` where
``items[r]`` is the item placed at (0-based) slot ``r``.  Every rank also has
a canonical index in ``0 .. R!-1``, its lexicographic position among all
permutations of ``range(R)``.

Public positions (``tau`` and the ``r`` argument of ``pos_distance``) are
1-based; array helpers below are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial
from typing import Sequence

import numpy as np

from .errors import InvalidItemError, InvalidPermutationError


def check_permutation(items: Sequence[int], R: int | None = None) -> tuple[int, ...]:
    items = tuple(int(x) for x in items)
    n = len(items) if R is None else R
    if len(items) != n or sorted(items) != list(range(n)):
        raise InvalidPermutationError(f"{list(items)} is not a permutation of 0..{n - 1}")
    return items


def encode(items: Sequence[int]) -> int:
    """Lexicographic index of ``items`` among all permutations of ``range(len(items))``."""
    items = check_permutation(items)
    R = len(items)
    if R < 2:
        raise InvalidPermutationError("need at least two items")
    index = 0
    for r, item in enumerate(items):
        smaller_later = sum(1 for other in items[r + 1:] if other < item)
        index += smaller_later * factorial(R - 1 - r)
    return index


def decode(index: int, R: int) -> tuple[int, ...]:
    """Inverse of :func:`encode`."""
    K = factorial(R)
    if not 0 <= index < K:
        raise InvalidPermutationError(f"index {index} out of range for R={R} (K={K})")
    pool = list(range(R))
    out = []
    for r in range(R):
        f = factorial(R - 1 - r)
        digit, index = divmod(index, f)
        out.append(pool.pop(digit))
    return tuple(out)


def tau(k: Sequence[int], item: int) -> int:
    """1-based position of ``item`` in list ``k``."""
    for r, x in enumerate(k):
        if x == item:
            return r + 1
    raise InvalidItemError(f"item {item} not in {list(k)}")


def pos_distance(k: Sequence[int], d: Sequence[int], r: int) -> int:
    """``|tau(k, d_r) - r| + 1`` for 1-based slot ``r``; equals 1 iff ``k`` and ``d`` agree there."""
    if not 1 <= r <= len(d):
        raise ValueError(f"position {r} outside 1..{len(d)}")
    return abs(tau(k, d[r - 1]) - r) + 1


def footrule(k: Sequence[int], d: Sequence[int]) -> int:
    """Spearman footrule distance between two ranks of the same items."""
    pos_k = {x: i for i, x in enumerate(k)}
    return sum(abs(pos_k[x] - r) for r, x in enumerate(d))


@dataclass(frozen=True)
class Permutation:
    items: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "items", check_permutation(self.items))

    @classmethod
    def from_index(cls, index: int, R: int) -> "Permutation":
        return cls(decode(index, R))

    @classmethod
    def identity(cls, R: int) -> "Permutation":
        return cls(tuple(range(R)))

    @property
    def R(self) -> int:
        return len(self.items)

    @property
    def index(self) -> int:
        return encode(self.items)

    def tau(self, item: int) -> int:
        return tau(self.items, item)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, r):
        return self.items[r]


# -- vectorised tables used by the likelihood and EM code -------------------


@lru_cache(maxsize=None)
def permutation_table(R: int) -> np.ndarray:
    """(K, R) array of all permutations; row ``k`` is ``decode(k, R)``."""
    K = factorial(R)
    table = np.empty((K, R), dtype=np.int64)
    for k in range(K):
        table[k] = decode(k, R)
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def position_table(R: int) -> np.ndarray:
    """(K, R) array with ``out[k, item]`` = 0-based position of ``item`` in permutation ``k``."""
    perms = permutation_table(R)
    inv = np.empty_like(perms)
    rows = np.arange(perms.shape[0])[:, None]
    inv[rows, perms] = np.arange(R)[None, :]
    inv.setflags(write=False)
    return inv


@lru_cache(maxsize=None)
def position_indicator(R: int) -> np.ndarray:
    """(K, R*R) 0/1 matrix; entry ``(k, item*R + b)`` is 1 iff ``item`` sits at position ``b`` in ``k``."""
    inv = position_table(R)
    K = inv.shape[0]
    onehot = np.zeros((K, R * R))
    cols = np.arange(R)[None, :] * R + inv
    onehot[np.arange(K)[:, None], cols] = 1.0
    onehot.setflags(write=False)
    return onehot


def encode_many(ranks: np.ndarray) -> np.ndarray:
    """Vectorised :func:`encode` for an (N, R) integer array of valid permutations."""
    ranks = np.asarray(ranks, dtype=np.int64)
    N, R = ranks.shape
    weights = np.array([factorial(R - 1 - r) for r in range(R)], dtype=np.int64)
    later_smaller = (ranks[:, None, :] < ranks[:, :, None]) & np.triu(np.ones((R, R), bool), 1)[None]
    return later_smaller.sum(axis=2) @ weights
