"""Link-disjoint (working, backup) route pairs.

The cheapest pair comes from Suurballe's algorithm (two successive shortest
paths on the residual graph, then cancellation of oppositely used links).
Further pairs are found by streaming simple paths in non-decreasing length
and pairing each new path with the disjoint ones seen before it; the stream
stops once no unseen path can improve the current k-th best total.
"""
from __future__ import annotations

import csv
import heapq
import io
from dataclasses import dataclass
from typing import Iterator

from .netmodel import Topology, format_number

INF = float("inf")


@dataclass(frozen=True)
class Path:
    nodes: tuple[str, ...]
    links: tuple[int, ...]
    length: float

    @property
    def hops(self) -> int:
        return len(self.links)

    def sort_key(self):
        return (self.length, self.hops, self.nodes)


@dataclass(frozen=True)
class RoutePair:
    working: Path
    backup: Path

    @property
    def total_length(self) -> float:
        return self.working.length + self.backup.length

    @property
    def working_links(self) -> frozenset[int]:
        return frozenset(self.working.links)

    @property
    def backup_links(self) -> frozenset[int]:
        return frozenset(self.backup.links)

    def in_working(self, link_id: int) -> bool:
        return link_id in self.working.links

    def in_backup(self, link_id: int) -> bool:
        return link_id in self.backup.links

    def sort_key(self):
        return (
            _round(self.total_length),
            self.working.hops + self.backup.hops,
            self.working.nodes,
            self.backup.nodes,
        )

    @classmethod
    def from_paths(cls, p: Path, q: Path) -> "RoutePair":
        """Orient so the shorter path is the working one."""
        if q.sort_key() < p.sort_key():
            p, q = q, p
        return cls(p, q)


def _round(x: float) -> float:
    # sums of float lengths can differ in the last ulp depending on order
    return round(x, 9)


def _path_from_nodes(topo: Topology, nodes, lookup) -> Path:
    links = tuple(lookup[frozenset(uv)].id for uv in zip(nodes, nodes[1:]))
    length = sum(topo.links[i].length for i in links)
    return Path(tuple(nodes), links, length)


def _lookup(topo: Topology):
    return {frozenset((l.a, l.b)): l for l in topo.links}


def _dijkstra(arcs, src, nodes):
    """Shortest distances and predecessor arcs over arcs {u: [(v, w, key)]}, w >= 0."""
    dist = {n: INF for n in nodes}
    pred = {}
    dist[src] = 0.0
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, w, key in arcs.get(u, ()):
            nd = d + w
            if nd < dist[v] - 1e-12:
                dist[v] = nd
                pred[v] = (u, key)
                heapq.heappush(heap, (nd, v))
    return dist, pred


def _walk_back(pred, src, dst):
    arcs = []
    v = dst
    while v != src:
        u, key = pred[v]
        arcs.append((u, v, key))
        v = u
    arcs.reverse()
    return arcs


def suurballe_pair(topology: Topology, src: str, dst: str) -> RoutePair | None:
    """Minimum total-length pair of link-disjoint src-dst paths, or None."""
    if src == dst:
        raise ValueError("source and destination coincide")
    nodes = topology.nodes
    adj = {n: [] for n in nodes}
    for link in topology.links:
        adj[link.a].append((link.b, link.length, link.id))
        adj[link.b].append((link.a, link.length, link.id))

    dist, pred = _dijkstra(adj, src, nodes)
    if dist[dst] == INF:
        return None
    first = _walk_back(pred, src, dst)
    on_first = {key: (u, v) for u, v, key in first}

    # residual graph with reduced costs: first-path links only traversable
    # backwards at zero cost, every other arc at w + d(u) - d(v) >= 0
    residual = {n: [] for n in nodes}
    for u in nodes:
        if dist[u] == INF:
            continue
        for v, w, key in adj[u]:
            if dist[v] == INF:
                continue
            if key in on_first:
                fu, fv = on_first[key]
                if (u, v) == (fv, fu):
                    residual[u].append((v, 0.0, key))
                continue
            residual[u].append((v, max(0.0, w + dist[u] - dist[v]), key))
    _, pred2 = _dijkstra(residual, src, nodes)
    if dst not in pred2:
        return None
    second = _walk_back(pred2, src, dst)

    used = {}
    for u, v, key in first:
        used[key] = (u, v)
    for u, v, key in second:
        if key in used:
            del used[key]  # traversed both ways: cancels
        else:
            used[key] = (u, v)

    out: dict[str, list[tuple[str, int]]] = {}
    for key, (u, v) in sorted(used.items()):
        out.setdefault(u, []).append((v, key))
    paths = []
    for _ in range(2):
        seq = [src]
        u = src
        while u != dst:
            v, key = out[u].pop(0)
            seq.append(v)
            u = v
        paths.append(seq)
    lookup = _lookup(topology)
    p, q = (_path_from_nodes(topology, s, lookup) for s in paths)
    return RoutePair.from_paths(p, q)


def simple_paths_by_length(topology: Topology, src: str, dst: str) -> Iterator[Path]:
    """Yield every simple src-dst path in non-decreasing length.

    Best-first search over partial paths ordered by length-so-far plus the
    exact remaining distance to dst, which is consistent, so complete paths
    pop in length order. Ties are broken by hop count then node sequence.
    """
    adj = topology.adjacency()
    back = {n: [(v, l.length, l.id) for v, l in adj[n]] for n in topology.nodes}
    to_dst, _ = _dijkstra(back, dst, topology.nodes)
    if to_dst[src] == INF:
        return
    heap = [(_round(to_dst[src]), 0, (src,), (), 0.0)]
    while heap:
        f, hops, seq, links, g = heapq.heappop(heap)
        u = seq[-1]
        if u == dst:
            yield Path(seq, links, g)
            continue
        for v, link in adj[u]:
            if v in seq or to_dst[v] == INF:
                continue
            ng = g + link.length
            heapq.heappush(heap, (_round(ng + to_dst[v]), hops + 1, seq + (v,), links + (link.id,), ng))


def k_disjoint_pairs(topology: Topology, src: str, dst: str, k_pairs: int = 4) -> list[RoutePair]:
    """Up to ``k_pairs`` distinct link-disjoint pairs, cheapest total length first.

    The first entry is the Suurballe pair; the remainder are ordered by
    (total length, total hops, working nodes, backup nodes).
    """
    if k_pairs < 1:
        raise ValueError("k_pairs must be >= 1")
    best = suurballe_pair(topology, src, dst)
    if best is None:
        return []
    seen: list[Path] = []
    found: dict[tuple, RoutePair] = {}
    shortest = None
    cutoff = INF
    for path in simple_paths_by_length(topology, src, dst):
        if shortest is None:
            shortest = path.length
        if _round(path.length + shortest) > cutoff:
            break
        mine = set(path.links)
        for other in seen:
            if mine.isdisjoint(other.links):
                pair = RoutePair.from_paths(other, path)
                found[(pair.working.nodes, pair.backup.nodes)] = pair
        seen.append(path)
        if len(found) >= k_pairs:
            ranked = sorted(found.values(), key=RoutePair.sort_key)
            cutoff = _round(ranked[k_pairs - 1].total_length)
            # only keep what can still make the cut
            found = {(p.working.nodes, p.backup.nodes): p for p in ranked if _round(p.total_length) <= cutoff}
    ranked = sorted(found.values(), key=RoutePair.sort_key)
    best_key = (best.working.nodes, best.backup.nodes)
    rest = [p for p in ranked if (p.working.nodes, p.backup.nodes) != best_key]
    return [best] + rest[: k_pairs - 1]


def pairs_csv(pairs_by_demand: dict[str, list[RoutePair]]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["demand_id", "pair_idx", "working_nodes", "backup_nodes", "len_w", "len_b"])
    for demand_id, pairs in pairs_by_demand.items():
        for i, p in enumerate(pairs):
            w.writerow([
                demand_id, i, "-".join(p.working.nodes), "-".join(p.backup.nodes),
                format_number(p.working.length), format_number(p.backup.length),
            ])
    return out.getvalue()


def pairs_for_instance(instance) -> dict[str, list[RoutePair]]:
    """Route pairs for every demand of a planning instance."""
    return {
        d.id: k_disjoint_pairs(instance.topology, d.src, d.dst, instance.k_pairs)
        for d in instance.demands
    }
