"""Exact rho-variation of finite sequences and eps-jump counting.

The variation is the supremum over increasing index subsequences of the
l^rho sum of consecutive norm differences.  On a finite sequence that is a
maximum-weight path problem on the complete increasing DAG, solved exactly
by dynamic programming with cached pairwise norms.  Jump counting finds a
maximum family of disjoint index pairs whose norm difference clears a
threshold; the earliest-completion greedy is optimal by the usual exchange
argument and is cross-checked against brute force in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from .core import grid_norm, weighted_norm
from .ergodic import AverageSequence
from .errors import EmptySequence, InvalidPairs


class PairwiseNorms:
    """Upper-triangular cache of ||frame_k - frame_i||_p over a sequence."""

    def __init__(self, seq: AverageSequence, p: Union[float, Fraction]):
        self.seq = seq
        self.p = float(p)
        self._cache: dict[tuple[int, int], float] = {}

    def __call__(self, i: int, k: int) -> float:
        if i > k:
            i, k = k, i
        if i == k:
            return 0.0
        key = (i, k)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        diff = self.seq.diff_values(k, i)
        if self.seq.weights is not None:
            val = weighted_norm(diff, self.p, self.seq.weights)
        else:
            vol = self.seq.cell_volume
            val = grid_norm(diff, self.p, vol if vol is not None else 1.0)
        self._cache[key] = val
        return val


@dataclass(frozen=True)
class VariationResult:
    """Value of the variation together with a maximizing subsequence.

    ``witness`` holds positions into the sequence; recomputing the l^rho sum
    of consecutive norm differences over it reproduces ``value``.
    """

    value: float
    witness: tuple[int, ...]
    rho: float
    p: float

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.witness, self.witness[1:])):
            raise ValueError("witness must be strictly increasing")


def rho_variation(
    seq: AverageSequence,
    rho: float,
    p: Union[float, Fraction],
    norms: PairwiseNorms | None = None,
) -> VariationResult:
    """Exact rho-variation of the sequence in the L^p norm.

    Dynamic programming over the complete DAG whose edge (i, k) carries
    weight ||frame_k - frame_i||_p ** rho; the maximum-weight path value is
    the variation to the power rho.  O(m^2) cached norm evaluations.
    """
    if len(seq) == 0:
        raise EmptySequence("variation needs at least one frame")
    if rho < 1:
        raise ValueError(f"rho must be >= 1, got {rho}")
    dist = norms if norms is not None else PairwiseNorms(seq, p)
    m = len(seq)
    best = np.zeros(m)
    parent = np.full(m, -1, dtype=int)
    for k in range(1, m):
        for i in range(k):
            cand = best[i] + dist(i, k) ** rho
            if cand > best[k]:
                best[k] = cand
                parent[k] = i
    end = int(np.argmax(best))
    total = float(best[end])
    if total == 0.0:
        return VariationResult(0.0, (0,), rho, float(p))
    path = [end]
    while parent[path[-1]] >= 0:
        path.append(int(parent[path[-1]]))
    path.reverse()
    return VariationResult(total ** (1.0 / rho), tuple(path), rho, float(p))


def variation_by_enumeration(
    seq: AverageSequence, rho: float, p: Union[float, Fraction]
) -> VariationResult:
    """Reference implementation: try every increasing subsequence.

    Exponential; only sensible for short sequences.  Kept as the oracle the
    dynamic program is tested against.
    """
    if len(seq) == 0:
        raise EmptySequence("variation needs at least one frame")
    dist = PairwiseNorms(seq, p)
    m = len(seq)
    best = 0.0
    best_path: tuple[int, ...] = (0,)
    for mask in range(1, 1 << m):
        path = [i for i in range(m) if (mask >> i) & 1]
        if len(path) < 2:
            continue
        total = sum(dist(a, b) ** rho for a, b in zip(path, path[1:]))
        if total > best:
            best = total
            best_path = tuple(path)
    return VariationResult(best ** (1.0 / rho) if best else 0.0, best_path, rho, float(p))


@dataclass(frozen=True)
class JumpCount:
    """Maximal number of disjoint eps-jumps and one witnessing pair family.

    Pairs are (m, n) sequence-index values with m < n <= next m, each with
    norm difference at least eps.
    """

    count: int
    pairs: tuple[tuple[int, int], ...]
    eps: float
    p: float


def count_eps_jumps(
    seq: AverageSequence,
    eps: float,
    p: Union[float, Fraction],
    norms: PairwiseNorms | None = None,
) -> JumpCount:
    """Greedy left-to-right maximal count of disjoint eps-jumps.

    Scans for the earliest completion index n admitting a start m at or
    after the previous completion with ||frame_n - frame_m||_p >= eps; takes
    the left-most such start.  Earliest completion makes the family maximal.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    dist = norms if norms is not None else PairwiseNorms(seq, p)
    m_count = len(seq)
    pairs: list[tuple[int, int]] = []
    start = 0
    n_pos = 1
    while n_pos < m_count:
        found = None
        for m_pos in range(start, n_pos):
            if dist(m_pos, n_pos) >= eps:
                found = m_pos
                break
        if found is not None:
            pairs.append((seq.indices[found], seq.indices[n_pos]))
            start = n_pos
        n_pos += 1
    return JumpCount(len(pairs), tuple(pairs), float(eps), float(p))


def count_jumps_by_enumeration(
    seq: AverageSequence, eps: float, p: Union[float, Fraction]
) -> int:
    """Reference maximal jump count by branch-and-bound over all families."""
    dist = PairwiseNorms(seq, p)
    m = len(seq)

    def from_position(start: int) -> int:
        best = 0
        for a in range(start, m):
            for b in range(a + 1, m):
                if dist(a, b) >= eps:
                    best = max(best, 1 + from_position(b))
        return best

    return from_position(0)


@dataclass(frozen=True)
class DyadicSplit:
    """Jump pairs separated into within-block and block-straddling groups.

    ``short`` pairs sit inside one dyadic block [2^k, 2^(k+1)).  ``long``
    pairs straddle a power of two; each carries the dyadic anchors (k, l)
    with 2^k <= m < 2^(k+1) and 2^l < n <= 2^(l+1).  Anchors may coincide
    when an endpoint is itself a power of two.
    """

    short: tuple[tuple[int, int], ...]
    long: tuple[tuple[int, int, int, int], ...]


def dyadic_split(pairs: Sequence[tuple[int, int]]) -> DyadicSplit:
    """Separate jump pairs by the dyadic blocks of their endpoints."""
    prev_n = 0
    for m, n in pairs:
        if not (0 < m < n) or m < prev_n:
            raise InvalidPairs(f"pairs must be increasing and disjoint, got {pairs}")
        prev_n = n
    short: list[tuple[int, int]] = []
    long: list[tuple[int, int, int, int]] = []
    for m, n in pairs:
        k = m.bit_length() - 1  # 2^k <= m < 2^(k+1)
        if n < (1 << (k + 1)):
            short.append((m, n))
        else:
            l = (n - 1).bit_length() - 1  # 2^l < n <= 2^(l+1)
            long.append((m, n, k, l))
    return DyadicSplit(tuple(short), tuple(long))


def variation_csv_rows(results: Sequence[VariationResult]) -> list[str]:
    """CSV lines (with header) for variation results."""
    lines = ["rho,p,value,witness"]
    for res in results:
        witness = ";".join(str(i) for i in res.witness)
        lines.append(f"{res.rho!r},{res.p!r},{res.value!r},{witness}")
    return lines
