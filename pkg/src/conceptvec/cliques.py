"""Maximal clique enumeration: pivoted Bron-Kerbosch with degeneracy ordering.

The thresholded pivot graph is sparse in practice, but both guards (vertex
count and clique count) abort pathological inputs instead of hanging.
"""

from __future__ import annotations

import heapq


class CliqueLimitError(Exception):
    """Input graph exceeded the enumeration guards."""


def degeneracy_order(adj: dict[bytes, set[bytes]]) -> list[bytes]:
    """Vertices in degeneracy order (repeatedly remove a min-degree vertex).

    Ties break on the smaller vertex ID so the order is deterministic.
    """
    degree = {v: len(n) for v, n in adj.items()}
    heap = [(d, v) for v, d in degree.items()]
    heapq.heapify(heap)
    removed: set[bytes] = set()
    order: list[bytes] = []
    while heap:
        d, v = heapq.heappop(heap)
        if v in removed or d != degree[v]:
            continue  # stale entry
        removed.add(v)
        order.append(v)
        for u in adj[v]:
            if u not in removed:
                degree[u] -= 1
                heapq.heappush(heap, (degree[u], u))
    return order


def find_maximal_cliques(adj: dict[bytes, set[bytes]], min_size: int = 1,
                         max_vertices: int | None = 200_000,
                         max_cliques: int | None = 5_000_000) -> list[frozenset[bytes]]:
    """All maximal cliques of size >= min_size, sorted deterministically.

    Isolated vertices count as maximal cliques of size 1.
    """
    if max_vertices is not None and len(adj) > max_vertices:
        raise CliqueLimitError(f"{len(adj)} vertices exceeds limit {max_vertices}")

    out: list[frozenset[bytes]] = []

    def report(clique: set[bytes]) -> None:
        if len(clique) >= min_size:
            out.append(frozenset(clique))
            if max_cliques is not None and len(out) > max_cliques:
                raise CliqueLimitError(f"more than {max_cliques} maximal cliques")

    def expand(r: set[bytes], p: set[bytes], x: set[bytes]) -> None:
        if not p and not x:
            report(r)
            return
        # pivot: vertex covering the most of P, ties to the smaller ID
        pivot = min(p | x, key=lambda u: (-len(p & adj[u]), u))
        for v in sorted(p - adj[pivot]):
            expand(r | {v}, p & adj[v], x & adj[v])
            p.remove(v)
            x.add(v)

    order = degeneracy_order(adj)
    rank = {v: i for i, v in enumerate(order)}
    for v in order:
        later = {u for u in adj[v] if rank[u] > rank[v]}
        earlier = {u for u in adj[v] if rank[u] < rank[v]}
        expand({v}, later, earlier)

    return sorted(out, key=lambda c: sorted(c))
