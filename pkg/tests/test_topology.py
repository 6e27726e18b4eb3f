import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import complete_topology
from resilient_gne.topology import (
    AgentId,
    ClusterTopology,
    TopologyError,
    _reaches_all,
    complete_edges,
    has_source_component,
    in_neighbors_cluster,
    in_neighbors_global,
    validate_redundancy,
)


def brute_source(nodes, edges):
    """Reference: a source component exists iff some node reaches every node by BFS."""
    nodes = list(nodes)
    if not nodes:
        return False
    out = {v: [r for s, r in edges if s == v] for v in nodes}
    for root in nodes:
        seen, stack = {root}, [root]
        while stack:
            for w in out[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        if len(seen) == len(nodes):
            return True
    return False


def all_pairs(k):
    return [(s, r) for s in range(k) for r in range(k) if s != r]


# neighbor queries ------------------------------------------------------------


def test_complete_cluster_neighbors():
    topo = complete_topology((5,))
    assert in_neighbors_cluster(topo, AgentId(1, 1)) == {2, 3, 4, 5}


def test_isolated_member_has_no_neighbors():
    topo = ClusterTopology.from_edges((3,), [], [[]])
    assert in_neighbors_cluster(topo, AgentId(1, 2)) == frozenset()
    assert in_neighbors_global(topo, AgentId(1, 2)) == frozenset()


def test_directed_cycle_neighbors():
    topo = ClusterTopology.from_edges((3,), [], [[(1, 2), (2, 3), (3, 1)]])
    assert in_neighbors_cluster(topo, AgentId(1, 2)) == {1}


def test_complete_global_graph_on_fifteen():
    topo = complete_topology((5, 5, 5))
    nbrs = in_neighbors_global(topo, AgentId(2, 3))
    assert len(nbrs) == 14 and AgentId(2, 3) not in nbrs


def test_single_cross_edge():
    topo = ClusterTopology.from_edges((1, 1), [(AgentId(1, 1), AgentId(2, 1))], [[], []])
    assert in_neighbors_global(topo, AgentId(2, 1)) == {AgentId(1, 1)}


def test_invalid_agent_rejected():
    topo = complete_topology((2, 2))
    with pytest.raises(TopologyError):
        in_neighbors_cluster(topo, AgentId(3, 1))
    with pytest.raises(TopologyError):
        in_neighbors_global(topo, AgentId(1, 5))


# construction invariants -------------------------------------------------------


def test_budget_sum_must_match():
    with pytest.raises(TopologyError, match="sum"):
        complete_topology((3, 3), b_cluster=(1, 1), b_global=3)


def test_byzantine_count_within_budget():
    with pytest.raises(TopologyError, match="budget"):
        complete_topology((3, 3), byzantine=[AgentId(1, 1), AgentId(1, 2)], b_cluster=(1, 0))


def test_cluster_needs_an_honest_agent():
    with pytest.raises(TopologyError, match="honest"):
        complete_topology((1, 3), byzantine=[AgentId(1, 1)], b_cluster=(1, 0))


def test_self_loops_rejected():
    with pytest.raises(TopologyError, match="self-loop"):
        ClusterTopology.from_edges((2,), [], [[(1, 1)]])
    with pytest.raises(TopologyError, match="self-loop"):
        ClusterTopology.from_edges((2,), [(AgentId(1, 1), AgentId(1, 1))], [[]])


# source components ---------------------------------------------------------------


def test_source_component_examples():
    assert has_source_component([1], [])
    assert not has_source_component([1, 2], [])
    assert has_source_component(range(5), [(0, k) for k in range(1, 5)])
    assert not has_source_component([], [])


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_source_component_exhaustive(k):
    pairs = all_pairs(k)
    for mask in range(2 ** len(pairs)):
        edges = [p for b, p in enumerate(pairs) if mask >> b & 1]
        assert has_source_component(range(k), edges) == brute_source(range(k), edges), edges


@settings(max_examples=300, deadline=None)
@given(st.integers(5, 6).flatmap(lambda k: st.tuples(st.just(k), st.lists(st.sampled_from(all_pairs(k)), unique=True))))
def test_source_component_random_larger(case):
    k, edges = case
    assert has_source_component(range(k), edges) == brute_source(range(k), edges)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6).flatmap(lambda k: st.tuples(st.just(k), st.lists(st.sampled_from(all_pairs(k)) if k > 1 else st.nothing(), unique=True))))
def test_fast_reachability_matches_networkx(case):
    k, edges = case
    adj = np.zeros((k, k), dtype=bool)
    for s, r in edges:
        adj[s, r] = True
    assert _reaches_all(adj) == has_source_component(range(k), edges)


# redundancy validation ------------------------------------------------------------


def test_complete_cluster_passes_everything():
    topo = complete_topology((5,), b_cluster=(1,))
    rep = validate_redundancy(topo)
    s = rep["cluster 1"]
    assert (s.degree, s.tracker, s.reduced) == ("pass", "pass", "pass")
    assert rep.fully_verified


def test_path_fails_degree_check():
    topo = ClusterTopology.from_edges((3,), [], [[(1, 2), (2, 3)]], b_cluster=(1,))
    assert validate_redundancy(topo)["cluster 1"].degree == "fail"


def test_single_honest_agent_no_budget():
    topo = ClusterTopology.from_edges((1,), [], [[]], b_cluster=(0,))
    rep = validate_redundancy(topo)
    assert rep.ok and rep.fully_verified


def test_large_instance_reports_unverified():
    topo = complete_topology((5, 5, 5), byzantine=[AgentId(1, 5)], b_cluster=(1, 1, 1))
    rep = validate_redundancy(topo, exhaustive_limit=200)
    assert rep["global"].reduced == "unverified"
    assert rep["global"].checked == 200
    assert rep.ok and not rep.fully_verified


@pytest.mark.parametrize("b", [0, 1, 2])
@pytest.mark.parametrize("n_honest", [3, 4, 5, 6, 7, 8, 9])
def test_complete_graphs_with_enough_members(b, n_honest):
    if n_honest < 2 * b + 2:
        pytest.skip("below the size that guarantees the checks")
    s = validate_redundancy(complete_topology((n_honest,), b_cluster=(b,)), exhaustive_limit=5_000)["cluster 1"]
    assert s.degree == "pass"
    assert s.reduced == ("pass" if s.reduced_graph_count <= 5_000 else "unverified")
    # n - 1 > n/2 + 2b - 1 holds exactly when n > 4b
    assert (s.tracker == "pass") == (n_honest > 4 * b)


def test_tracker_check_stricter_than_degree_on_complete_graph():
    s = validate_redundancy(complete_topology((4,), b_cluster=(1,)))["cluster 1"]
    assert (s.degree, s.tracker, s.reduced) == ("pass", "fail", "pass")


def test_reduced_check_does_not_imply_degree_check():
    # complete triangle, b=1: each receiver keeps one in-edge after any removal,
    # which always leaves a source component, yet in-degree 2 < 2b + 1
    topo = ClusterTopology.from_edges((3,), [], [complete_edges([1, 2, 3])], b_cluster=(1,))
    s = validate_redundancy(topo)["cluster 1"]
    assert (s.reduced, s.degree) == ("pass", "fail")
    assert s.checked == s.reduced_graph_count


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 5).flatmap(
    lambda k: st.tuples(st.just(k), st.integers(0, 1), st.lists(st.sampled_from(all_pairs(k)), unique=True, min_size=1))))
def test_reduced_check_implies_b_plus_one_in_degree(case):
    k, b, edges = case
    topo = ClusterTopology.from_edges((k,), [], [[(s + 1, r + 1) for s, r in edges]], b_cluster=(b,))
    rep = validate_redundancy(topo, exhaustive_limit=100_000)["cluster 1"]
    in_deg = [sum(1 for _, r in edges if r == v) for v in range(k)]
    if rep.reduced == "pass":
        # at most one receiver can be stripped bare, otherwise two sources appear
        assert sum(d <= b for d in in_deg) <= 1


def test_reduced_counterexample_detected():
    # two disjoint complete triangles have no common source after any removal
    edges = complete_edges([1, 2, 3]) + complete_edges([4, 5, 6])
    topo = ClusterTopology.from_edges((6,), [], [edges], b_cluster=(0,))
    assert validate_redundancy(topo)["cluster 1"].reduced == "fail"


def test_exhaustive_maximal_removal_matches_full_enumeration():
    # compare the maximal-removal shortcut against enumerating every subset removal
    rng = np.random.default_rng(3)
    for _ in range(30):
        k = 4
        pairs = all_pairs(k)
        edges = [p for p in pairs if rng.random() < 0.7]
        topo = ClusterTopology.from_edges((k,), [], [[(s + 1, r + 1) for s, r in edges]], b_cluster=(1,))
        fast = validate_redundancy(topo)["cluster 1"].reduced == "pass"
        in_sets = {v: [s for s, r in edges if r == v] for v in range(k)}
        options = [[()] + [(s,) for s in in_sets[v]] for v in range(k)]
        full = all(
            brute_source(range(k), [(s, r) for s, r in edges if s not in removal[r]])
            for removal in itertools.product(*options)
        )
        assert fast == full
