"""Run metrics and statistics.

* Moving average reward (MAR): trailing-window mean over per-episode
  cumulative rewards, maintained incrementally (new value in, oldest out).
* Path diversity: mean pairwise Jaccard dissimilarity between episodes'
  correct-transition sets, with a per-episode contribution view (an
  episode's mean dissimilarity to every other episode in the same set).
* Wilcoxon signed-rank (two-sided): exact enumeration of the W+ null
  distribution for up to 25 non-zero pairs, normal approximation with
  tie and continuity corrections above that.
* Cliff's delta: pairwise dominance in [-1, +1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "AnalysisError",
    "MarSeries",
    "DiversityScore",
    "mar",
    "path_diversity",
    "wilcoxon_signed_rank",
    "cliffs_delta",
]

EXACT_WILCOXON_LIMIT = 25


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class MarSeries:
    window: int
    values: tuple[float, ...]  # one value per episode index >= window - 1


def mar(rewards, n: int) -> MarSeries:
    """Trailing mean of ``n`` episode rewards; the result has
    ``len(rewards) - n + 1`` points."""
    rewards = [float(r) for r in rewards]
    if n < 1:
        raise AnalysisError("window must be at least 1")
    if n > len(rewards):
        raise AnalysisError(f"window {n} exceeds {len(rewards)} episodes")
    current = sum(rewards[:n]) / n
    values = [current]
    for k in range(n, len(rewards)):
        current = current + (rewards[k] - rewards[k - n]) / n
        values.append(current)
    return MarSeries(n, tuple(values))


@dataclass(frozen=True)
class DiversityScore:
    score: float  # mean pairwise dissimilarity in [0, 1]
    contributions: tuple[float, ...]  # per trace: mean dissimilarity to the rest


def _jaccard_dissimilarity(a: frozenset, b: frozenset) -> float:
    union = len(a | b)
    if union == 0:
        return 0.0  # two empty paths are identical
    return 1.0 - len(a & b) / union


def path_diversity(transition_sets) -> DiversityScore:
    """``transition_sets`` holds one set of (state, action, next state)
    triples per trace; needs at least two traces."""
    sets = [frozenset(s) for s in transition_sets]
    k = len(sets)
    if k < 2:
        raise AnalysisError("path diversity needs at least 2 traces")
    sums = [0.0] * k
    for i in range(k):
        for j in range(i + 1, k):
            d = _jaccard_dissimilarity(sets[i], sets[j])
            sums[i] += d
            sums[j] += d
    contributions = tuple(s / (k - 1) for s in sums)
    return DiversityScore(sum(contributions) / k, contributions)


def _midranks(values) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        rank = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = rank
        i = j + 1
    return ranks


def wilcoxon_signed_rank(a, b) -> float:
    """Two-sided p-value for paired samples; ties are mid-ranked and zero
    differences are dropped (all-zero differences report p = 1)."""
    a = list(map(float, a))
    b = list(map(float, b))
    if len(a) != len(b):
        raise AnalysisError("samples must be paired (equal length)")
    diffs = [x - y for x, y in zip(a, b) if x != y]
    if not diffs:
        return 1.0
    if len(diffs) < 5:
        raise AnalysisError("need at least 5 non-zero differences")
    n = len(diffs)
    ranks = _midranks([abs(d) for d in diffs])
    w_plus = sum(r for r, d in zip(ranks, diffs) if d > 0)

    if n <= EXACT_WILCOXON_LIMIT:
        return _exact_two_sided_p(ranks, w_plus)

    mean = n * (n + 1) / 4.0
    tie_counts = {}
    for r in ranks:
        tie_counts[r] = tie_counts.get(r, 0) + 1
    tie_term = sum(t**3 - t for t in tie_counts.values()) / 48.0
    sigma = math.sqrt(n * (n + 1) * (2 * n + 1) / 24.0 - tie_term)
    d = w_plus - mean
    # continuity correction toward the mean
    d -= 0.5 * math.copysign(1.0, d) if d != 0 else 0.0
    z = d / sigma
    p = 2.0 * _norm_sf(abs(z))
    return min(p, 1.0)


def _exact_two_sided_p(ranks, w_plus: float) -> float:
    """Enumerate the exact null distribution of W+ over all sign
    assignments.  Mid-ranks are half-integers, so work on doubled ranks."""
    doubled = [int(round(2 * r)) for r in ranks]
    total = sum(doubled)
    counts = [Fraction(0)] * (total + 1)
    counts[0] = Fraction(1)
    for dr in doubled:
        nxt = counts[:]
        for s in range(total - dr + 1):
            if counts[s]:
                nxt[s + dr] += counts[s]
        counts = nxt
    denom = Fraction(2) ** len(ranks)
    w2 = int(round(2 * w_plus))
    p_le = sum(counts[: w2 + 1], Fraction(0)) / denom
    p_ge = sum(counts[w2:], Fraction(0)) / denom
    return float(min(1, 2 * min(p_le, p_ge)))


def _norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def cliffs_delta(a, b) -> float:
    """(#{a_i > b_j} - #{a_i < b_j}) / (|a| * |b|)."""
    a = list(map(float, a))
    b = list(map(float, b))
    if not a or not b:
        raise AnalysisError("both samples must be non-empty")
    bs = np.sort(np.asarray(b))
    av = np.asarray(a)
    greater = np.searchsorted(bs, av, side="left").sum()
    less_equal = np.searchsorted(bs, av, side="right").sum()
    wins = int(greater)
    losses = len(a) * len(b) - int(less_equal)
    return (wins - losses) / (len(a) * len(b))
