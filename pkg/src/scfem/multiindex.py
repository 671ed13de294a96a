"""Downward-closed multi-index sets, margins and the doubling rule.

Multi-indices are plain tuples of positive ints. Sets keep their members
sorted lexicographically so that every traversal (and hence every floating
point reduction downstream) happens in a fixed order.
"""
from __future__ import annotations

from bisect import bisect_left
from itertools import product
from math import prod
from typing import Iterable, Iterator, Sequence

MultiIndex = tuple[int, ...]


def as_index(entries: Iterable[int]) -> MultiIndex:
    idx = tuple(int(e) for e in entries)
    if not idx:
        raise ValueError("multi-index must have at least one entry")
    if any(e < 1 for e in idx):
        raise ValueError(f"multi-index entries must be >= 1, got {idx}")
    return idx


def unit(n: int, dim: int) -> MultiIndex:
    """The n-th unit vector e_n (0-based n) as a tuple of 0/1."""
    return tuple(1 if k == n else 0 for k in range(dim))


def ones(dim: int) -> MultiIndex:
    return (1,) * dim


class MultiIndexSet:
    """Finite set of multi-indices of a fixed dimension.

    Members are stored as a sorted tuple. Membership is a binary search.
    The set is immutable; ``union`` returns a new instance.
    """

    __slots__ = ("dim", "_members")

    def __init__(self, members: Iterable[Sequence[int]], dim: int | None = None):
        idx = sorted({as_index(m) for m in members})
        if dim is None:
            if not idx:
                raise ValueError("dimension required for an empty set")
            dim = len(idx[0])
        for i in idx:
            if len(i) != dim:
                raise ValueError(f"index {i} does not have dimension {dim}")
        self.dim = int(dim)
        self._members: tuple[MultiIndex, ...] = tuple(idx)

    @classmethod
    def unit_set(cls, dim: int) -> "MultiIndexSet":
        return cls([ones(dim)], dim)

    @classmethod
    def rectangle(cls, corner: Sequence[int]) -> "MultiIndexSet":
        """The axis-aligned box R_i = {j : 1 <= j <= i}."""
        corner = as_index(corner)
        return cls(product(*(range(1, c + 1) for c in corner)), len(corner))

    def __contains__(self, i: object) -> bool:
        k = bisect_left(self._members, i)  # type: ignore[arg-type]
        return k < len(self._members) and self._members[k] == i

    def __iter__(self) -> Iterator[MultiIndex]:
        return iter(self._members)

    def __len__(self) -> int:
        return len(self._members)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MultiIndexSet):
            return NotImplemented
        return self.dim == other.dim and self._members == other._members

    def __hash__(self) -> int:
        return hash((self.dim, self._members))

    def __repr__(self) -> str:
        return f"MultiIndexSet({list(self._members)!r})"

    @property
    def members(self) -> tuple[MultiIndex, ...]:
        return self._members

    def union(self, others: Iterable[Sequence[int]]) -> "MultiIndexSet":
        extra = [as_index(o) for o in others]
        for o in extra:
            if len(o) != self.dim:
                raise ValueError(f"index {o} does not have dimension {self.dim}")
        return MultiIndexSet(list(self._members) + extra, self.dim)

    def is_downward_closed(self) -> bool:
        for i in self._members:
            for n in range(self.dim):
                if i[n] > 1 and backward(i, n) not in self:
                    return False
        return True

    def is_rectangle(self) -> bool:
        if not self._members:
            return False
        corner = tuple(max(i[n] for i in self._members) for n in range(self.dim))
        return len(self) == prod(corner) and self.is_downward_closed()


def backward(i: MultiIndex, n: int) -> MultiIndex:
    return i[:n] + (i[n] - 1,) + i[n + 1:]


def forward(i: MultiIndex, n: int) -> MultiIndex:
    return i[:n] + (i[n] + 1,) + i[n + 1:]


def _require_downward_closed(I: MultiIndexSet) -> None:
    if not I.is_downward_closed():
        raise ValueError("multi-index set is not downward-closed")


def doubling_m(level: int) -> int:
    """Number of nodes at ``level`` under the doubling rule: 0, 1, 3, 5, 9, ..."""
    if level < 0:
        raise ValueError("level must be non-negative")
    if level == 0:
        return 0
    if level == 1:
        return 1
    return 2 ** (level - 1) + 1


def margin(I: MultiIndexSet) -> tuple[MultiIndex, ...]:
    """Indices outside ``I`` with at least one backward neighbour inside it.

    Returned in lexicographic order.
    """
    _require_downward_closed(I)
    found = set()
    for i in I:
        for n in range(I.dim):
            j = forward(i, n)
            if j not in I:
                found.add(j)
    return tuple(sorted(found))


def reduced_set(i: Sequence[int], I: MultiIndexSet) -> tuple[MultiIndex, ...]:
    """Smallest subset of the margin containing ``i`` that keeps ``I`` downward-closed.

    This is ``R_i \\ I``: any downward-closed set containing ``i`` contains the
    whole box below it.
    """
    i = as_index(i)
    if i not in set(margin(I)):
        raise ValueError(f"{i} is not in the margin of the set")
    box = product(*(range(1, c + 1) for c in i))
    return tuple(sorted(j for j in box if j not in I))


def stability_bound(i: Sequence[int]) -> int:
    """Product of the entries of ``i``; bounds the norm of the surplus operator."""
    return prod(as_index(i))


def work(j: Sequence[int]) -> int:
    """Number of new tensor nodes contributed by index ``j``."""
    return prod(doubling_m(e) - doubling_m(e - 1) for e in as_index(j))


def maximal_points(I: MultiIndexSet) -> tuple[MultiIndex, ...]:
    """Margin indices not dominated componentwise by another margin index.

    ``i`` is kept iff every other margin index ``j`` has some ``n`` with
    ``i_n > j_n``. A singleton margin is trivially maximal.
    """
    M = margin(I)
    keep = []
    for i in M:
        if all(any(a > b for a, b in zip(i, j)) for j in M if j != i):
            keep.append(i)
    return tuple(keep)


def backward_neighbors(i: Sequence[int], I: MultiIndexSet) -> tuple[MultiIndex, ...]:
    """Indices ``i - e_n`` that belong to ``I`` (requires ``i`` in the margin)."""
    i = as_index(i)
    if i not in set(margin(I)):
        raise ValueError(f"{i} is not in the margin of the set")
    return tuple(sorted(backward(i, n) for n in range(I.dim)
                        if i[n] > 1 and backward(i, n) in I))
