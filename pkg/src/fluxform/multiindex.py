"""Increasing multi-indices and the signs produced by sorting them.

Multi-indices are plain tuples of 1-based integers, e.g. ``(1, 3)`` stands for
``dx1 ^ dx3``.  Lexicographic order of :func:`enumerate_indices` is the
canonical order of every dense component vector in the package.
"""

from __future__ import annotations

import json
from functools import lru_cache
from itertools import combinations
from typing import Iterable, Sequence

from .errors import AxisError, DegreeError

MultiIndex = tuple[int, ...]


class _Repeated:
    """Sentinel returned by :func:`sort_with_sign` when an index repeats."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "REPEATED"

    def __reduce__(self):
        return (_Repeated, ())


REPEATED = _Repeated()


def check_degree(n: int, p: int) -> None:
    if n < 0:
        raise DegreeError(f"dimension must be non-negative, got {n}")
    if p < 0 or p > n:
        raise DegreeError(f"degree {p} out of range for dimension {n}")


@lru_cache(maxsize=None)
def _enumerate(n: int, p: int) -> tuple[MultiIndex, ...]:
    return tuple(combinations(range(1, n + 1), p))


def enumerate_indices(n: int, p: int) -> list[MultiIndex]:
    """All ``C(n, p)`` increasing multi-indices of length ``p`` in lex order.

    >>> enumerate_indices(3, 2)
    [(1, 2), (1, 3), (2, 3)]
    >>> enumerate_indices(2, 0)
    [()]
    """
    check_degree(n, p)
    return list(_enumerate(n, p))


@lru_cache(maxsize=None)
def index_positions(n: int, p: int) -> dict[MultiIndex, int]:
    """Map each increasing multi-index to its column in dense storage."""
    check_degree(n, p)
    return {idx: pos for pos, idx in enumerate(_enumerate(n, p))}


def sort_with_sign(indices: Iterable[int], n: int | None = None):
    """Sort ``indices`` and return ``(sorted_tuple, sign)``.

    The sign is that of the sorting permutation.  A repeated entry makes the
    alternating basis element vanish, reported as ``(REPEATED, 0)``.

    >>> sort_with_sign([3, 1, 2])
    ((1, 2, 3), 1)
    >>> sort_with_sign([1, 1])
    (REPEATED, 0)
    """
    idx = [int(i) for i in indices]
    for i in idx:
        if i < 1 or (n is not None and i > n):
            bound = "n" if n is None else str(n)
            raise AxisError(f"index {i} outside 1..{bound}")
    if len(set(idx)) != len(idx):
        return REPEATED, 0
    # parity from inversion count
    inversions = sum(1 for a in range(len(idx)) for b in range(a + 1, len(idx)) if idx[a] > idx[b])
    return tuple(sorted(idx)), (-1 if inversions % 2 else 1)


def validate_index(idx: Sequence[int], n: int, p: int | None = None) -> MultiIndex:
    """Return ``idx`` as a tuple after checking it is increasing and within ``1..n``."""
    out = tuple(int(i) for i in idx)
    if p is not None and len(out) != p:
        raise DegreeError(f"multi-index {list(out)} has length {len(out)}, expected {p}")
    if len(out) > n:
        raise DegreeError(f"multi-index {list(out)} longer than dimension {n}")
    for a, b in zip(out, out[1:]):
        if a >= b:
            raise AxisError(f"multi-index {list(out)} is not strictly increasing")
    if out and (out[0] < 1 or out[-1] > n):
        raise AxisError(f"multi-index {list(out)} has entries outside 1..{n}")
    return out


def to_key(idx: Sequence[int]) -> str:
    """JSON-array string used as a component key, e.g. ``"[1,3]"``."""
    return "[" + ",".join(str(int(i)) for i in idx) + "]"


def from_key(key: str) -> MultiIndex:
    try:
        value = json.loads(key)
    except json.JSONDecodeError as exc:
        raise ValueError(f"component key {key!r} is not a JSON array") from exc
    if not isinstance(value, list) or not all(isinstance(v, int) for v in value):
        raise ValueError(f"component key {key!r} is not a JSON array of integers")
    return tuple(value)
