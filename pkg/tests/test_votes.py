import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import beta

from giacert.classifier import SyntheticClassifier
from giacert.graph import Graph, InputFormatError
from giacert.smoothing import SmoothingParams
from giacert.votes import (GapVector, VoteStats, binomial_lower_bound, binomial_upper_bound, bound_level,
                           estimate_votes, gaps_from_votes, read_gaps_csv, write_gaps_csv)
from helpers import random_graph

# pinned from the bisection routine; the beta-quantile oracle agrees to < 1e-10
LOWER_998_1000 = 0.9899163366644643
GAP_PA = 0.9890839842846617
GAP_PB = 0.01091601571533829


# --------------------------------------------------------------------------
# votes

def test_no_noise_is_unanimous():
    g = random_graph(15, 20, 0)
    stats = estimate_votes(g, SyntheticClassifier(4), SmoothingParams(0, 0), 50, seed=3)
    assert np.all(stats.n_a == 50) and np.all(stats.n_b == 0)


def test_single_sample():
    g = random_graph(15, 20, 0)
    stats = estimate_votes(g, SyntheticClassifier(4), SmoothingParams(0.4, 0.4), 1, seed=3)
    assert np.all(stats.counts.sum(axis=1) == 1) and np.all(stats.counts.max(axis=1) == 1)


def test_votes_thread_invariant():
    g = random_graph(25, 40, 1)
    model, params = SyntheticClassifier(3), SmoothingParams(0.3, 0.2)
    a = estimate_votes(g, model, params, 200, seed=9, threads=1)
    b = estimate_votes(g, model, params, 200, seed=9, threads=3)
    assert np.array_equal(a.counts, b.counts)


def _reference_labels(n, edges, kept_nodes, kept_edges, depth, K):
    adj = {u: set() for u in range(n)}
    for (u, v), ke in zip(edges, kept_edges):
        if ke and kept_nodes[u] and kept_nodes[v]:
            adj[u].add(v)
            adj[v].add(u)
    out = []
    for v in range(n):
        ball, frontier = {v}, {v}
        for _ in range(depth):
            frontier = {w for u in frontier for w in adj[u]} - ball
            ball |= frontier
        out.append(sum((u + 1) ** 2 for u in ball) % K)
    return out


def test_votes_match_direct_recomputation_and_exhaustive_expectation():
    g = Graph.from_edges(3, [(0, 1), (1, 2)])
    params, K, N, seed = SmoothingParams(0.4, 0.3), 3, 2000, 12345
    stats = estimate_votes(g, SyntheticClassifier(K, 2), params, N, seed)

    # independent recomputation under the same generator contract
    ref = np.zeros((3, K), dtype=np.int64)
    for i in range(N):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, i])))
        kn = rng.random(3) >= params.p_n
        ke = rng.random(2) >= params.p_e
        for v, y in enumerate(_reference_labels(3, [(0, 1), (1, 2)], kn, ke, 2, K)):
            ref[v, y] += 1
    assert np.array_equal(stats.counts, ref)

    # exact class probabilities by summing over all 2^(n + |E|) outcomes
    exact = np.zeros((3, K))
    for bits in itertools.product((0, 1), repeat=5):
        kn, ke = np.array(bits[:3], bool), np.array(bits[3:], bool)
        w = np.prod([params.keep_n if b else params.p_n for b in kn] + [params.keep_e if b else params.p_e for b in ke])
        for v, y in enumerate(_reference_labels(3, [(0, 1), (1, 2)], kn, ke, 2, K)):
            exact[v, y] += w
    sigma = np.sqrt(exact * (1 - exact) / N)
    assert np.all(np.abs(stats.counts / N - exact) <= 4 * sigma + 1e-12)


def test_vote_stats_tie_rule():
    stats = VoteStats(np.array([[3, 5, 5, 0], [4, 4, 4, 1]]), 13, 0.01)
    assert stats.y_a.tolist() == [1, 0] and stats.y_b.tolist() == [2, 1]
    with pytest.raises(ValueError):
        VoteStats(np.array([[3, 5]]), 9, 0.01)


# --------------------------------------------------------------------------
# confidence bounds

def test_closed_forms():
    lv = 0.005
    assert binomial_lower_bound(100, 100, lv) == pytest.approx(lv ** 0.01, abs=1e-9)
    assert binomial_upper_bound(0, 100, lv) == pytest.approx(1 - lv ** 0.01, abs=1e-9)
    assert binomial_lower_bound(0, 100, lv) == 0.0
    assert binomial_upper_bound(100, 100, lv) == 1.0


def test_pinned_lower_bound():
    got = binomial_lower_bound(998, 1000, 0.0025)
    assert got == pytest.approx(LOWER_998_1000, abs=1e-12)
    assert got == pytest.approx(beta.ppf(0.0025, 998, 3), abs=1e-9)


def test_pinned_gap():
    stats = VoteStats(np.array([[99000, 1000]]), 100_000, 0.01)
    gaps = gaps_from_votes(stats)
    assert gaps.p_a_lower[0] == pytest.approx(GAP_PA, abs=1e-12)
    assert gaps.p_b_upper[0] == pytest.approx(GAP_PB, abs=1e-12)
    assert gaps.c[0] == pytest.approx(GAP_PA - GAP_PB, abs=1e-12)
    lv = bound_level(0.01, 2)
    assert GAP_PA == pytest.approx(beta.ppf(lv, 99000, 1001), abs=1e-9)
    assert GAP_PB == pytest.approx(beta.ppf(1 - lv, 1001, 99000), abs=1e-9)


@pytest.mark.parametrize("N,K,alpha", [(100, 2, 0.01), (1000, 3, 0.05), (50, 7, 0.001)])
def test_unanimous_gap_closed_form(N, K, alpha):
    counts = np.zeros((1, K), dtype=int)
    counts[0, 0] = N
    gaps = gaps_from_votes(VoteStats(counts, N, alpha))
    lv = alpha / (2 * K)
    assert gaps.c[0] == pytest.approx(2 * lv ** (1 / N) - 1, abs=2e-9)


def test_even_split_abstains():
    gaps = gaps_from_votes(VoteStats(np.array([[500, 500, 0]]), 1000, 0.01))
    assert gaps.c[0] <= 0 and gaps.abstain[0]


def test_bound_argument_checks():
    with pytest.raises(ValueError):
        binomial_lower_bound(5, 3, 0.01)
    with pytest.raises(ValueError):
        binomial_upper_bound(1, 0, 0.01)
    with pytest.raises(ValueError):
        binomial_lower_bound(1, 3, 1.0)


def test_bonferroni_budget():
    for K in (1, 2, 5):
        assert 2 * bound_level(0.01, K) == pytest.approx(0.01 / K)
        assert 2 * bound_level(0.01, K) <= 0.01


@given(st.integers(1, 400), st.data(), st.sampled_from([0.001, 0.0025, 0.01, 0.05, 0.2]))
def test_bound_symmetry_and_ordering(n, data, level):
    s = data.draw(st.integers(0, n))
    lo, hi = binomial_lower_bound(s, n, level), binomial_upper_bound(s, n, level)
    assert hi == pytest.approx(1 - binomial_lower_bound(n - s, n, level), abs=2e-10)
    assert lo <= s / n <= hi
    if s < n:
        assert binomial_lower_bound(s + 1, n, level) >= lo
        assert binomial_upper_bound(s + 1, n, level) >= hi


@given(st.integers(1, 2000), st.data())
def test_bounds_match_beta_quantiles(n, data):
    s = data.draw(st.integers(0, n))
    level = 0.0025
    lo = binomial_lower_bound(s, n, level)
    ref = 0.0 if s == 0 else beta.ppf(level, s, n - s + 1)
    assert lo == pytest.approx(ref, abs=2e-10)


def test_lower_bound_coverage_small_grid():
    rng = np.random.default_rng(7)
    level, draws = 0.05, 2000
    for p, n in ((0.3, 40), (0.9, 200)):
        s = rng.binomial(n, p, size=draws)
        miss = sum(binomial_lower_bound(int(x), n, level) > p for x in s)
        assert miss <= level * draws + 4 * math.sqrt(draws * level * (1 - level))


# --------------------------------------------------------------------------
# gaps CSV

def test_gaps_csv_round_trip(tmp_path):
    gaps = gaps_from_votes(VoteStats(np.array([[90, 10], [40, 60], [50, 50]]), 100, 0.01))
    gaps.meta.update(p_e=0.3, p_n=0.2, generator="x")
    write_gaps_csv(tmp_path / "g.csv", gaps)
    back = read_gaps_csv(tmp_path / "g.csv")
    assert np.array_equal(back.y_star, gaps.y_star)
    assert np.array_equal(back.p_a_lower, gaps.p_a_lower) and np.array_equal(back.c, gaps.c)
    assert back.meta["N"] == 100 and back.meta["p_e"] == 0.3 and back.meta["generator"] == "x"


@pytest.mark.parametrize("text", ["node,y,a,b,c\n0,0,0.5,0.1,0.4\n",
                                  "node,y_star,p_a_lower,p_b_upper,c_v\n0,0,0.5,0.1\n",
                                  "node,y_star,p_a_lower,p_b_upper,c_v\n1,0,0.5,0.1,0.4\n",
                                  "node,y_star,p_a_lower,p_b_upper,c_v\n0,0,zz,0.1,0.4\n", ""])
def test_gaps_csv_rejects_malformed(tmp_path, text):
    (tmp_path / "bad.csv").write_text(text)
    with pytest.raises(InputFormatError):
        read_gaps_csv(tmp_path / "bad.csv")


def test_gap_vector_from_gaps():
    gv = GapVector.from_gaps([0.5, -0.1, 0.0])
    assert gv.c.tolist() == [0.5, -0.1, 0.0] and gv.abstain.tolist() == [False, True, True]
