"""Unions of disjoint real intervals, with endpoints allowed at +/-infinity.

Selection events on the path parameter live here: canonical form keeps the
intervals sorted and merges any pair separated by less than the merge
tolerance, so membership and measure queries are exact on the stored
representation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["IntervalUnion", "intersect"]

MERGE_TOL = 1e-10


@dataclass(frozen=True)
class IntervalUnion:
    """Sorted, pairwise-disjoint open-ended intervals ``(lo, hi)``."""

    intervals: tuple = field(default_factory=tuple)

    @staticmethod
    def from_pairs(pairs, merge_tol: float = MERGE_TOL) -> "IntervalUnion":
        """Canonicalize arbitrary ``(lo, hi)`` pairs: drop empty ones, sort,
        and merge overlapping or nearly-touching neighbors."""
        cleaned = [(float(lo), float(hi)) for lo, hi in pairs if hi > lo]
        cleaned.sort()
        merged: list[list[float]] = []
        for lo, hi in cleaned:
            if merged and lo <= merged[-1][1] + merge_tol:
                if hi > merged[-1][1]:
                    merged[-1][1] = hi
            else:
                merged.append([lo, hi])
        return IntervalUnion(tuple((lo, hi) for lo, hi in merged))

    @staticmethod
    def real_line() -> "IntervalUnion":
        return IntervalUnion(((-math.inf, math.inf),))

    @property
    def is_empty(self) -> bool:
        return len(self.intervals) == 0

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self):
        return len(self.intervals)

    def measure(self) -> float:
        return sum(hi - lo for lo, hi in self.intervals)

    def hull(self) -> tuple[float, float]:
        if self.is_empty:
            raise ValueError("empty union has no hull")
        return self.intervals[0][0], self.intervals[-1][1]

    def contains(self, x: float, tol: float = 0.0) -> bool:
        for lo, hi in self.intervals:
            if lo - tol <= x <= hi + tol:
                return True
        return False

    def contains_many(self, xs) -> np.ndarray:
        """Vectorized membership for grid oracles (boundaries count as in)."""
        xs = np.asarray(xs, dtype=float)
        out = np.zeros(xs.shape, dtype=bool)
        for lo, hi in self.intervals:
            out |= (xs >= lo) & (xs <= hi)
        return out

    def distance(self, x: float) -> float:
        """Distance from ``x`` to the union (0 if inside)."""
        if self.is_empty:
            return math.inf
        best = math.inf
        for lo, hi in self.intervals:
            if lo <= x <= hi:
                return 0.0
            best = min(best, abs(x - lo), abs(x - hi))
        return best

    def enclosing(self, x: float, tol: float = 0.0):
        """The single interval containing ``x``, or None."""
        for lo, hi in self.intervals:
            if lo - tol <= x <= hi + tol:
                return (lo, hi)
        return None

    def clip(self, lo: float, hi: float) -> "IntervalUnion":
        return intersect(self, IntervalUnion(((lo, hi),)))


def intersect(a: IntervalUnion, b: IntervalUnion) -> IntervalUnion:
    """Canonical intersection of two canonical unions."""
    out = []
    ai = bi = 0
    A, B = a.intervals, b.intervals
    while ai < len(A) and bi < len(B):
        lo = max(A[ai][0], B[bi][0])
        hi = min(A[ai][1], B[bi][1])
        if hi > lo:
            out.append((lo, hi))
        if A[ai][1] < B[bi][1]:
            ai += 1
        else:
            bi += 1
    return IntervalUnion(tuple(out))
