"""Cross-query cache of pairwise device affinities.

Each answered fine query yields a small local graph over the devices it
touched; local graphs merge into a global graph whose edges keep the
full (weight, timestamp) history.  Later queries order their neighbor
lists by Gaussian-time-weighted cached affinity so the most informative
devices are processed first and the early-stop test fires sooner.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .fine import NeighborInfo

DAY_S = 86400


@dataclass(frozen=True)
class LocalAffinityGraph:
    """Affinities observed while answering one query."""

    t_q: int
    edges: dict[frozenset, float]  # unordered device pair -> weight in [0,1]

    @property
    def nodes(self) -> frozenset:
        out: set[str] = set()
        for pair in self.edges:
            out |= pair
        return frozenset(out)


def local_graph(
    query_dev: str,
    t_q: int,
    processed: list[NeighborInfo],
    candidate_rooms: tuple[str, ...],
    pair_room_affinity=None,
) -> LocalAffinityGraph:
    """Edge weight between two devices is their mean per-candidate-room
    group affinity.  Query-to-neighbor weights come from the neighbor's
    stored affinities; neighbor-to-neighbor weights need a callback
    (room, dev_a, dev_b) -> affinity and are skipped without one."""
    n_rooms = len(candidate_rooms)
    edges: dict[frozenset, float] = {}
    for n in processed:
        w = sum(n.affinities.get(r, 0.0) for r in candidate_rooms) / n_rooms
        edges[frozenset((query_dev, n.dev))] = min(max(w, 0.0), 1.0)
    if pair_room_affinity is not None:
        for i, a in enumerate(processed):
            for b in processed[i + 1:]:
                w = sum(
                    pair_room_affinity(r, a.dev, b.dev) for r in candidate_rooms
                ) / n_rooms
                edges[frozenset((a.dev, b.dev))] = min(max(w, 0.0), 1.0)
    return LocalAffinityGraph(t_q=t_q, edges=edges)


class GlobalAffinityGraph:
    """Merged history of local graphs, persisted as a JSONL append log.

    Single writer, many readers: mutations hold a lock and readers copy
    nothing mutable out.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._edges: dict[frozenset, list[tuple[float, int]]] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._replay()

    def _replay(self):
        for line in self.path.read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            self._insert(frozenset((rec["a"], rec["b"])), rec["w"], rec["t"])

    def _insert(self, pair: frozenset, w: float, t: int) -> bool:
        vec = self._edges.setdefault(pair, [])
        if (w, t) in ((v, ts) for v, ts in vec):
            return False
        vec.append((w, t))
        vec.sort(key=lambda wt: wt[1])
        return True

    def merge(self, local: LocalAffinityGraph) -> None:
        """Append every local edge at the local graph's timestamp.
        Re-merging an identical graph is a no-op."""
        with self._lock:
            appended = []
            for pair, w in local.edges.items():
                if self._insert(pair, w, local.t_q):
                    appended.append((pair, w))
            if self.path is not None and appended:
                with self.path.open("a") as fh:
                    for pair, w in appended:
                        a, b = sorted(pair)
                        fh.write(json.dumps({"a": a, "b": b, "w": w, "t": local.t_q}) + "\n")

    def edge(self, a: str, b: str) -> list[tuple[float, int]]:
        return list(self._edges.get(frozenset((a, b)), []))

    def prune(self, now: int, ttl_days: float) -> None:
        """Drop entries older than the retention window, then empty edges;
        compacts the log file."""
        with self._lock:
            for pair in list(self._edges):
                kept = [(w, t) for w, t in self._edges[pair] if now - t <= ttl_days * DAY_S]
                if kept:
                    self._edges[pair] = kept
                else:
                    del self._edges[pair]
            if self.path is not None:
                tmp = self.path.with_suffix(".tmp")
                with tmp.open("w") as fh:
                    for pair in sorted(self._edges, key=sorted):
                        a, b = sorted(pair)
                        for w, t in self._edges[pair]:
                            fh.write(json.dumps({"a": a, "b": b, "w": w, "t": t}) + "\n")
                tmp.replace(self.path)

    def stats(self) -> str:
        nodes: set[str] = set()
        entries = 0
        oldest = None
        for pair, vec in self._edges.items():
            nodes |= pair
            entries += len(vec)
            for _, t in vec:
                oldest = t if oldest is None else min(oldest, t)
        lines = [
            f"nodes: {len(nodes)}",
            f"edges: {len(self._edges)}",
            f"entries: {entries}",
            f"oldest: {oldest if oldest is not None else '-'}",
        ]
        return "\n".join(lines)


def time_weighted_affinity(vector: list[tuple[float, int]], t_q: int) -> float:
    """Gaussian-weighted average of an edge's history, sigma of one day.

    Timestamps are rescaled to days before weighting; an empty vector
    scores 0.
    """
    if not vector:
        return 0.0
    # subtract the max exponent so a lone far-away entry still normalizes
    exps = [-((t - t_q) / DAY_S) ** 2 / 2.0 for _, t in vector]
    m = max(exps)
    ls = [math.exp(e - m) for e in exps]
    total = sum(ls)
    return sum(l * w for l, (w, _) in zip(ls, vector)) / total


def ordered_neighbors(
    graph: GlobalAffinityGraph,
    query_dev: str,
    t_q: int,
    d_n: list[NeighborInfo],
) -> list[NeighborInfo]:
    """Reorder a neighbor list by descending cached affinity with the
    query device.  Devices with no cached edge sort last, lexicographic;
    nobody is dropped."""
    cached = []
    absent = []
    for n in d_n:
        vec = graph.edge(query_dev, n.dev)
        if vec:
            cached.append((n, time_weighted_affinity(vec, t_q)))
        else:
            absent.append(n)
    cached.sort(key=lambda na: (-na[1], na[0].dev))
    absent.sort(key=lambda n: n.dev)
    return [n for n, _ in cached] + absent
