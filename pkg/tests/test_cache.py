"""Affinity-cache graph: merging, persistence, neighbor ordering."""

import pytest

from locater.cache import (
    GlobalAffinityGraph,
    LocalAffinityGraph,
    local_graph,
    ordered_neighbors,
    time_weighted_affinity,
)
from locater.fine import NeighborInfo

DAY = 86_400


def _neighbor(dev, affs):
    return NeighborInfo(dev, "g", 0.5, affs, {})


def test_local_graph_averages_over_candidate_rooms():
    n = _neighbor("n1", {"a": 0.4, "b": 0.8})
    g = local_graph("q", 100, [n], ("a", "b"))
    assert g.edges[frozenset(("q", "n1"))] == pytest.approx(0.6)
    assert g.nodes == frozenset({"q", "n1"})


def test_local_graph_neighbor_pairs_need_a_callback():
    ns = [_neighbor("n1", {"a": 1.0}), _neighbor("n2", {"a": 0.5})]
    bare = local_graph("q", 0, ns, ("a",))
    assert frozenset(("n1", "n2")) not in bare.edges
    full = local_graph("q", 0, ns, ("a",), pair_room_affinity=lambda r, a, b: 0.25)
    assert full.edges[frozenset(("n1", "n2"))] == pytest.approx(0.25)


def test_merge_appends_and_is_idempotent(tmp_path):
    path = tmp_path / "cache.jsonl"
    graph = GlobalAffinityGraph(path)
    local = LocalAffinityGraph(t_q=50, edges={frozenset(("a", "b")): 0.3})
    graph.merge(local)
    graph.merge(local)  # no duplicate entry
    assert graph.edge("a", "b") == [(0.3, 50)]
    assert graph.edge("b", "a") == [(0.3, 50)]
    assert len(path.read_text().splitlines()) == 1

    replayed = GlobalAffinityGraph(path)
    assert replayed.edge("a", "b") == [(0.3, 50)]


def test_prune_drops_stale_entries_and_compacts(tmp_path):
    path = tmp_path / "cache.jsonl"
    graph = GlobalAffinityGraph(path)
    graph.merge(LocalAffinityGraph(t_q=0, edges={frozenset(("a", "b")): 0.3}))
    graph.merge(LocalAffinityGraph(t_q=100 * DAY, edges={frozenset(("a", "c")): 0.4}))
    graph.prune(now=100 * DAY, ttl_days=30)
    assert graph.edge("a", "b") == []
    assert graph.edge("a", "c") == [(0.4, 100 * DAY)]
    assert len(path.read_text().splitlines()) == 1


def test_stats_reports_counts():
    graph = GlobalAffinityGraph()
    graph.merge(LocalAffinityGraph(t_q=5, edges={frozenset(("a", "b")): 0.3}))
    text = graph.stats()
    assert "nodes: 2" in text and "edges: 1" in text and "oldest: 5" in text


def test_time_weighted_affinity_prefers_nearby_entries():
    assert time_weighted_affinity([], 0) == 0.0
    assert time_weighted_affinity([(0.7, 123)], 999_999) == pytest.approx(0.7)
    vec = [(0.9, 0), (0.1, 10 * DAY)]
    assert time_weighted_affinity(vec, 0) > 0.85
    assert time_weighted_affinity(vec, 10 * DAY) < 0.15


def test_ordered_neighbors_ranks_cached_edges_first():
    graph = GlobalAffinityGraph()
    graph.merge(
        LocalAffinityGraph(
            t_q=0,
            edges={frozenset(("q", "low")): 0.2, frozenset(("q", "high")): 0.9},
        )
    )
    ns = [_neighbor(d, {}) for d in ("zzz", "low", "high", "aaa")]
    out = ordered_neighbors(graph, "q", 0, ns)
    assert [n.dev for n in out] == ["high", "low", "aaa", "zzz"]
