import itertools
import math

import numpy as np
import pytest

from giacert.certify import CertProblem, LimitExceeded, interference_bound, solve_exact
from giacert.graph import AttackVariables, Graph, ThreatModel
from giacert.oracle import (MAX_SLOTS, TinyInstance, count_attacks, empirical_event_frequency, enumerate_attacks,
                            exact_event_probability, exact_worst_case, injected_paths, paths_disjoint,
                            random_tiny_instance, run_battery)
from giacert.smoothing import SmoothingParams
from giacert.votes import GapVector
from helpers import random_graph

P55 = SmoothingParams(0.5, 0.5)


def _inst(g, rho, tau, c=None, targets=None, params=P55):
    c = np.full(g.n, 0.5) if c is None else c
    targets = np.arange(g.n) if targets is None else targets
    return TinyInstance(g, ThreatModel(rho, tau), GapVector.from_gaps(c), targets, params)


# --------------------------------------------------------------------------
# enumeration

def test_one_node_one_edge_on_three_nodes():
    inst = _inst(Graph.from_edges(3, [(0, 1)]), 1, 1)
    attacks = list(enumerate_attacks(inst))
    assert len(attacks) == count_attacks(inst) == 4
    assert sorted(int(a.a1.sum()) for a in attacks) == [0, 1, 1, 1]


def test_no_budget_yields_only_the_empty_attack():
    inst = _inst(Graph.from_edges(4, [(0, 1)]), 0, 3)
    attacks = list(enumerate_attacks(inst))
    assert len(attacks) == 1 and attacks[0].rho == 0


def test_two_nodes_unit_degree_count():
    # degree sequences: the internal edge alone (1), or a multiset of two
    # choices from {none, node 0, node 1} (6)
    inst = _inst(Graph.from_edges(2, []), 2, 1)
    assert count_attacks(inst) == 1 + 6


def _orbit_count(inst):
    """Raw enumeration of all 0/1 blocks, grouped by injected-node relabeling."""
    rho, n = inst.threat.rho, inst.g.n
    tau = inst.threat.effective_tau(n)
    iu, ju = np.triu_indices(rho, 1)
    perms = list(itertools.permutations(range(rho)))
    classes = set()
    for bits in itertools.product((0, 1), repeat=rho * n + iu.size):
        a1 = np.array(bits[:rho * n], dtype=int).reshape(rho, n)
        a2 = np.zeros((rho, rho), dtype=int)
        a2[iu, ju] = bits[rho * n:]
        a2 = a2 + a2.T
        if rho and (a1.sum(axis=1) + a2.sum(axis=1)).max() > tau:
            continue
        classes.add(min(tuple(a1[list(p)].ravel()) + tuple(a2[np.ix_(p, p)].ravel()) for p in perms))
    return len(classes)


def test_enumeration_matches_raw_orbit_count():
    rng = np.random.default_rng(3)
    done = 0
    while done < 12:
        inst = random_tiny_instance(rng)
        rho, n = inst.threat.rho, inst.g.n
        if rho * n + rho * (rho - 1) // 2 > 14:
            continue
        attacks = list(enumerate_attacks(inst))
        tau = inst.threat.effective_tau(n)
        assert all(a.rho == 0 or a.degrees().max() <= tau for a in attacks)
        assert len(attacks) == count_attacks(inst) == _orbit_count(inst)
        done += 1


def test_slot_limit():
    g = random_graph(8, 8, 0)
    with pytest.raises(LimitExceeded):
        _inst(g, 3, 2)
    assert 2 * 8 + 1 <= MAX_SLOTS
    _inst(g, 2, 2)


# --------------------------------------------------------------------------
# worst case

def test_no_budget_worst_case_counts_abstains():
    g = random_graph(6, 7, 0)
    c = np.array([0.3, -0.1, 0.0, 0.5, 0.2, -0.4])
    m_star, atk = exact_worst_case(_inst(g, 0, 2, c, [0, 1, 2, 3]))
    assert m_star == 2 and atk.rho == 0


def test_worst_case_monotone_in_budget():
    rng = np.random.default_rng(8)
    for _ in range(15):
        inst = random_tiny_instance(rng, max_rho=2)
        vals = [exact_worst_case(TinyInstance(inst.g, ThreatModel(r, inst.threat.tau), inst.gaps, inst.targets,
                                              inst.params))[0] for r in range(3)]
        assert vals == sorted(vals)


def test_worst_case_attack_achieves_the_value():
    rng = np.random.default_rng(10)
    for _ in range(15):
        inst = random_tiny_instance(rng)
        m_star, atk = exact_worst_case(inst)
        hits = sum(interference_bound(inst.g, atk, inst.params, int(v)) >= inst.gaps.c[v] / 2 or inst.gaps.c[v] <= 0
                   for v in inst.targets)
        assert hits == m_star
        prob = CertProblem(inst.g, inst.threat, inst.gaps, inst.targets, inst.params, "exact")
        assert solve_exact(prob).M_upper == m_star


# --------------------------------------------------------------------------
# event probability

def test_single_direct_edge_is_tight():
    g = Graph.from_edges(3, [(0, 1), (1, 2)])
    atk = AttackVariables(np.array([[0, 1, 0]]), np.zeros((1, 1), dtype=int))
    params = SmoothingParams(0.9, 0.8)
    # with k = 1 the only path into node 1 is the direct edge
    ev = exact_event_probability(g, atk, params, 1, k=1)
    assert ev == pytest.approx(0.1 * 0.2, abs=1e-15)
    assert ev == pytest.approx(interference_bound(g, atk, params, 1, k=1), abs=1e-15)


def test_disjoint_paths_give_the_independence_product():
    g = Graph.from_edges(3, [(0, 1)])
    atk = AttackVariables(np.array([[0, 0, 1], [0, 0, 1]]), np.zeros((2, 2), dtype=int))
    params = SmoothingParams(0.3, 0.4)
    s = 0.7 * 0.6
    assert paths_disjoint(g, atk, 2)
    ev = exact_event_probability(g, atk, params, 2)
    assert ev == pytest.approx(1 - (1 - s) ** 2, abs=1e-15)
    assert ev == pytest.approx(interference_bound(g, atk, params, 2), abs=1e-12)


def test_shared_edge_gadget_is_strictly_below_the_bound():
    # v=0 -- a=1, both injected nodes hang off a: paths j-a-v share (a, v) and a
    g = Graph.from_edges(2, [(0, 1)])
    atk = AttackVariables(np.array([[0, 1], [0, 1]]), np.zeros((2, 2), dtype=int))
    params = SmoothingParams(0.3, 0.4)
    s = 0.7 * 0.6
    assert not paths_disjoint(g, atk, 0)
    ev = exact_event_probability(g, atk, params, 0)
    bound = interference_bound(g, atk, params, 0)
    assert ev == pytest.approx(s * s * (2 - s), abs=1e-15)
    assert bound == pytest.approx(s * s * (2 - s * s), abs=1e-15)
    assert ev < bound


def test_no_paths_zero_probability():
    g = Graph.from_edges(4, [(0, 1), (2, 3)])
    atk = AttackVariables(np.array([[0, 0, 0, 1]]), np.zeros((1, 1), dtype=int))
    assert injected_paths(g, atk, 0, 2).paths == []
    assert exact_event_probability(g, atk, P55, 0) == 0.0


def test_masks_and_inclusion_exclusion_agree():
    rng = np.random.default_rng(4)
    checked = 0
    while checked < 40:
        inst = random_tiny_instance(rng)
        if inst.threat.rho == 0:
            continue
        _, atk = exact_worst_case(inst)
        for v in inst.targets.tolist():
            try:
                a = exact_event_probability(inst.g, atk, inst.params, v, method="masks")
                b = exact_event_probability(inst.g, atk, inst.params, v, method="ie")
            except LimitExceeded:
                continue
            assert a == pytest.approx(b, abs=1e-12)
            assert a <= interference_bound(inst.g, atk, inst.params, v) + 1e-12
            checked += 1


def test_event_method_errors():
    g = Graph.from_edges(2, [(0, 1)])
    atk = AttackVariables(np.array([[1, 1]]), np.zeros((1, 1), dtype=int))
    with pytest.raises(ValueError):
        exact_event_probability(g, atk, P55, 0, method="nope")
    # a dense gadget with too many smoothing bits for the mask route
    n = 6
    g = Graph.from_edges(n, [(u, w) for u in range(n) for w in range(u + 1, n)])
    atk = AttackVariables(np.ones((2, n), dtype=int), np.array([[0, 1], [1, 0]]))
    with pytest.raises(LimitExceeded):
        exact_event_probability(g, atk, P55, 0, method="masks")


def test_empirical_frequency_tracks_exact_value():
    g = Graph.from_edges(3, [(0, 1), (1, 2)])
    atk = AttackVariables(np.array([[1, 0, 1], [0, 1, 0]]), np.array([[0, 1], [1, 0]]))
    params = SmoothingParams(0.4, 0.3)
    exact = exact_event_probability(g, atk, params, 0)
    draws = 40_000
    freq = empirical_event_frequency(g, atk, params, 0, 2, draws, seed=5)
    assert abs(freq - exact) <= 4 * math.sqrt(exact * (1 - exact) / draws)
    assert freq == empirical_event_frequency(g, atk, params, 0, 2, draws, seed=5)


# --------------------------------------------------------------------------
# battery

def test_battery_is_clean():
    res = run_battery(25, seed=1)
    assert res.ok and res.instances == 25 and res.checks >= 75


def test_battery_flags_injected_violation():
    res = run_battery(3, seed=1, inject_violation=True)
    assert not res.ok and res.violations[0][1] == "exact"
