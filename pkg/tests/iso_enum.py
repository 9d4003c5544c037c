"""Enumerate connected graphs up to isomorphism by vertex augmentation.

Every connected graph on p nodes arises from a connected graph on p-1
nodes by adding one node joined to a nonempty subset (remove any
non-cut vertex to see this). Candidates are bucketed by a cheap exact
invariant and deduplicated with VF2. Known class counts for p = 1..8:
1, 1, 2, 6, 21, 112, 853, 11117.
"""

import networkx as nx

from matchq.graphs import Graph

KNOWN_CONNECTED_COUNTS = {1: 1, 2: 1, 3: 2, 4: 6, 5: 21, 6: 112, 7: 853, 8: 11117}


def _invariant(adj, p):
    degs = tuple(sorted(bin(a).count("1") for a in adj))
    tri = tuple(
        sorted(
            sum(
                bin(adj[u] & adj[v]).count("1")
                for v in range(p)
                if adj[u] >> v & 1
            )
            for u in range(p)
        )
    )
    nbr_degs = tuple(
        sorted(
            tuple(sorted(bin(adj[v]).count("1") for v in range(p) if adj[u] >> v & 1))
            for u in range(p)
        )
    )
    return degs, tri, nbr_degs


def _to_nx(adj, p):
    g = nx.Graph()
    g.add_nodes_from(range(p))
    for u in range(p):
        for v in range(u + 1, p):
            if adj[u] >> v & 1:
                g.add_edge(u, v)
    return g


def connected_graphs_up_to(max_nodes):
    """Yield (p, Graph) for one representative of every isomorphism class."""
    # adjacency as bitmasks over 0-based vertices
    current = [(0,)]  # the single-vertex graph
    yield 1, Graph(1, ())
    for p in range(2, max_nodes + 1):
        buckets = {}
        reps = []
        for base in current:
            for subset_bits in range(1, 1 << (p - 1)):
                adj = list(base) + [subset_bits]
                for v in range(p - 1):
                    if subset_bits >> v & 1:
                        adj[v] |= 1 << (p - 1)
                adj = tuple(adj)
                key = _invariant(adj, p)
                bucket = buckets.setdefault(key, [])
                gnew = None
                fresh = True
                for known in bucket:
                    if gnew is None:
                        gnew = _to_nx(adj, p)
                    if nx.is_isomorphic(known, gnew):
                        fresh = False
                        break
                if fresh:
                    bucket.append(gnew if gnew is not None else _to_nx(adj, p))
                    reps.append(adj)
        current = reps
        for adj in reps:
            edges = [
                (u + 1, v + 1)
                for u in range(p)
                for v in range(u + 1, p)
                if adj[u] >> v & 1
            ]
            yield p, Graph.from_edges(p, edges)


def brute_force_separable(graph):
    """Partition search oracle: independent groups with all cross edges."""
    p = graph.node_count
    groups: list[list[int]] = []

    def rec(v):
        if v > p:
            return len(groups) >= 2
        for g in groups:
            ok = all(not graph.has_edge(v, w) for w in g) and all(
                graph.has_edge(v, w) for h in groups if h is not g for w in h
            )
            if ok:
                g.append(v)
                if rec(v + 1):
                    return True
                g.pop()
        if all(graph.has_edge(v, w) for h in groups for w in h):
            groups.append([v])
            if rec(v + 1):
                return True
            groups.pop()
        return False

    return rec(1)
