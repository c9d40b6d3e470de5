"""Tests for MAR, path diversity, Wilcoxon signed-rank, and Cliff's delta.

The statistics are validated against scipy as the published-distribution
oracle; scipy is a test dependency only.
"""

import itertools
import math
import random

import numpy as np
import pytest
from scipy import stats

from uavtest.analysis import (
    AnalysisError,
    cliffs_delta,
    mar,
    path_diversity,
    wilcoxon_signed_rank,
)

# ---------------------------------------------------------------------------
# MAR


def test_mar_constant_rewards():
    series = mar([5.0] * 12, 4)
    assert series.values == tuple([5.0] * 9)


def test_mar_window_two():
    series = mar([1, 2, 3, 4], 2)
    assert series.values == (1.5, 2.5, 3.5)


def test_mar_window_one_is_identity():
    rewards = [3.0, -1.0, 7.5, 0.0]
    assert mar(rewards, 1).values == tuple(rewards)


def test_mar_point_count_for_large_window():
    rewards = list(range(1000))
    series = mar(rewards, 350)
    assert len(series.values) == 1000 - 350 + 1 == 651


def test_mar_incremental_matches_direct():
    rng = random.Random(11)
    rewards = [rng.uniform(-5, 50) for _ in range(200)]
    series = mar(rewards, 35)
    direct = [sum(rewards[k : k + 35]) / 35 for k in range(len(rewards) - 34)]
    assert np.allclose(series.values, direct, atol=1e-9)


def test_mar_rejects_oversized_window():
    with pytest.raises(AnalysisError):
        mar([1.0, 2.0], 3)


# ---------------------------------------------------------------------------
# path diversity


def test_identical_traces_have_zero_diversity():
    t = {("A", "go", "B"), ("B", "stop", "C")}
    assert path_diversity([t, set(t)]).score == 0.0


def test_disjoint_traces_have_full_diversity():
    a = {("A", "go", "B")}
    b = {("B", "stop", "C")}
    assert path_diversity([a, b]).score == 1.0


def test_three_trace_diversity_matches_pairwise_oracle():
    sets = [
        {("A", "x", "B"), ("B", "y", "C")},
        {("A", "x", "B"), ("C", "z", "D")},
        {("D", "w", "E")},
    ]

    def jaccard_dissim(p, q):
        p, q = set(p), set(q)
        return 1.0 - len(p & q) / len(p | q)

    pair_mean = np.mean(
        [jaccard_dissim(p, q) for p, q in itertools.combinations(sets, 2)]
    )
    result = path_diversity(sets)
    assert result.score == pytest.approx(pair_mean)
    # contributions average back to the score
    assert np.mean(result.contributions) == pytest.approx(result.score)


def test_diversity_permutation_invariant():
    rng = random.Random(5)
    sets = []
    for _ in range(6):
        sets.append(
            {
                ("S" + str(rng.randrange(4)), "e" + str(rng.randrange(3)), "T")
                for _ in range(rng.randrange(1, 5))
            }
        )
    base = path_diversity(sets).score
    shuffled = sets[:]
    rng.shuffle(shuffled)
    assert path_diversity(shuffled).score == pytest.approx(base)


def test_diversity_needs_two_traces():
    with pytest.raises(AnalysisError):
        path_diversity([{("A", "x", "B")}])


def test_empty_sets_are_identical():
    assert path_diversity([set(), set()]).score == 0.0


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank


def test_wilcoxon_identical_samples():
    a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
    assert wilcoxon_signed_rank(a, a) == 1.0


def test_wilcoxon_strong_separation():
    a = [float(i) + 10.0 for i in range(10)]
    b = [float(i) for i in range(10)]
    assert wilcoxon_signed_rank(a, b) < 0.05


def test_wilcoxon_exact_matches_scipy_small_samples():
    rng = random.Random(77)
    for _ in range(25):
        n = rng.randrange(6, 16)
        # tie-free differences so scipy's exact mode applies
        diffs = rng.sample(range(1, 120), n)
        signs = [rng.choice([-1, 1]) for _ in range(n)]
        a = [s * d / 7.0 for s, d in zip(signs, diffs)]
        b = [0.0] * n
        mine = wilcoxon_signed_rank(a, b)
        oracle = stats.wilcoxon(a, b, alternative="two-sided", method="exact").pvalue
        assert mine == pytest.approx(oracle, abs=1e-3)


def test_wilcoxon_textbook_ten_pairs():
    # paired-measurement example with distinct differences, so the exact
    # table applies without tie handling
    a = [125, 115, 130, 140, 142, 115, 140, 125, 141, 135]
    b = [110, 122, 125, 120, 140, 124, 123, 137, 135, 145]
    mine = wilcoxon_signed_rank(a, b)
    oracle = stats.wilcoxon(a, b, alternative="two-sided", method="exact").pvalue
    assert mine == pytest.approx(oracle, abs=1e-3)


def test_wilcoxon_exact_handles_midrank_ties():
    # tied absolute differences: enumerate the conditional distribution
    # given the observed mid-ranks (scipy's exact table assumes no ties)
    a = [15.0, -7.0, 5.0, 20.0, -9.0, 17.0, -12.0, 5.0, -10.0]
    b = [0.0] * 9
    p = wilcoxon_signed_rank(a, b)
    assert 0.0 < p <= 1.0
    assert p == pytest.approx(0.6328125)  # 2 * P(W+ <= 27 | observed ranks)


def test_wilcoxon_approximation_matches_scipy_large_samples():
    rng = np.random.default_rng(123)
    for _ in range(10):
        n = int(rng.integers(30, 120))
        a = rng.normal(size=n) + 0.2
        b = rng.normal(size=n)
        mine = wilcoxon_signed_rank(a, b)
        oracle = stats.wilcoxon(
            a, b, alternative="two-sided", method="approx", correction=True
        ).pvalue
        assert mine == pytest.approx(oracle, abs=1e-3)


def test_wilcoxon_symmetry():
    rng = np.random.default_rng(5)
    a = rng.normal(size=40).tolist()
    b = rng.normal(size=40).tolist()
    assert wilcoxon_signed_rank(a, b) == pytest.approx(wilcoxon_signed_rank(b, a))


def test_wilcoxon_needs_five_nonzero_pairs():
    with pytest.raises(AnalysisError):
        wilcoxon_signed_rank([1.0, 2.0, 3.0, 4.0], [0.0, 0.0, 0.0, 0.0])


# ---------------------------------------------------------------------------
# Cliff's delta


def test_cliffs_delta_identical():
    a = [1.0, 2.0, 2.0, 3.0]
    assert cliffs_delta(a, list(a)) == 0.0


def test_cliffs_delta_total_dominance():
    assert cliffs_delta([10, 11, 12], [1, 2, 3]) == 1.0
    assert cliffs_delta([1, 2, 3], [10, 11, 12]) == -1.0


def test_cliffs_delta_small_case():
    # brute force over pairs: one win (2 > 1), two losses (1 < 3, 2 < 3)
    assert cliffs_delta([1, 2], [1, 3]) == (1 - 2) / 4


def test_cliffs_delta_antisymmetric():
    rng = np.random.default_rng(9)
    a = rng.normal(size=30).tolist()
    b = rng.normal(size=25).tolist()
    assert cliffs_delta(a, b) == pytest.approx(-cliffs_delta(b, a))


def test_cliffs_delta_matches_brute_force():
    rng = np.random.default_rng(31)
    for _ in range(10):
        a = rng.integers(0, 8, size=12).astype(float).tolist()
        b = rng.integers(0, 8, size=9).astype(float).tolist()
        brute = sum(
            (1 if x > y else -1 if x < y else 0) for x in a for y in b
        ) / (len(a) * len(b))
        assert cliffs_delta(a, b) == pytest.approx(brute)
