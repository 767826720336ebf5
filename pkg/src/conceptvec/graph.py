"""The multipartite dictionary graph and its normalized pivot adjacency.

Nodes are prefixed units partitioned by edition; edges connect pivot units
with other pivot units or pivot units with target units, never target with
target. Edge weights keep per-method link counts so alignment-based and
chi-square-based dictionaries can coexist on one edge.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .corpus import Edition, ParallelCorpus, edition_of
from . import tsvio

METHOD_ALIGN = "align"
METHOD_CHI2 = "chi2"


class GraphError(Exception):
    pass


def _ordered(u: bytes, v: bytes) -> tuple[bytes, bytes]:
    return (u, v) if u <= v else (v, u)


class DictionaryGraph:
    """Adjacency lists over units with a pivot/target partition."""

    def __init__(self, pivot_editions, editions):
        self.pivot_editions = list(pivot_editions)
        self._pivot_set = set(pivot_editions)
        self.editions = set(editions)
        missing = self._pivot_set - self.editions
        if missing:
            raise GraphError(f"pivot editions not in edition set: {sorted(missing)}")
        self.adj: dict[bytes, dict[bytes, dict[str, float]]] = {}

    def is_pivot_unit(self, unit: bytes) -> bool:
        return edition_of(unit) in self._pivot_set

    def add_edge(self, u: bytes, v: bytes, method: str, count: float) -> None:
        if u == v:
            raise GraphError(f"self-loop rejected: {u!r}")
        ed_u, ed_v = edition_of(u), edition_of(v)
        for ed in (ed_u, ed_v):
            if ed not in self.editions:
                raise GraphError(f"edge references unknown edition {ed!r}")
        if ed_u not in self._pivot_set and ed_v not in self._pivot_set:
            raise GraphError(f"target-target edge rejected: {u!r} -- {v!r}")
        tags = self.adj.setdefault(u, {}).get(v)
        if tags is None:
            tags = {}
            self.adj[u][v] = tags
            self.adj.setdefault(v, {})[u] = tags
        tags[method] = tags.get(method, 0) + count

    def units(self):
        return self.adj.keys()

    def neighbors(self, unit: bytes) -> dict[bytes, dict[str, float]]:
        return self.adj.get(unit, {})

    def neighborhood(self, unit: bytes) -> frozenset[bytes]:
        """Pivot units adjacent to ``unit``; empty for unknown units."""
        return frozenset(v for v in self.adj.get(unit, ()) if self.is_pivot_unit(v))

    def has_edge(self, u: bytes, v: bytes) -> bool:
        return v in self.adj.get(u, {})

    def edge_count(self, u: bytes, v: bytes) -> float:
        return sum(self.adj.get(u, {}).get(v, {}).values())

    def pivot_pivot_edges(self):
        """(u, v, tags) with u < v, both endpoints pivot units."""
        for u, nbrs in self.adj.items():
            if not self.is_pivot_unit(u):
                continue
            for v, tags in nbrs.items():
                if u < v and self.is_pivot_unit(v):
                    yield u, v, tags

    def edge_rows(self):
        for u, nbrs in self.adj.items():
            for v, tags in nbrs.items():
                if u < v:
                    for method, count in sorted(tags.items()):
                        yield u, v, method, count


def assemble(pivot_editions, editions, alignment_sets=(), chi2_dicts=()) -> DictionaryGraph:
    """Union all dictionaries into one graph, keeping per-method counts."""
    graph = DictionaryGraph(pivot_editions, editions)
    for edge_set in alignment_sets:
        for ed in (edge_set.edition_a, edge_set.edition_b):
            if ed not in graph.editions:
                raise GraphError(f"dictionary references unknown edition {ed!r}")
        for (u, v), count in edge_set.counts.items():
            graph.add_edge(u, v, METHOD_ALIGN, count)
    for chi2_dict in chi2_dicts:
        for ed in (chi2_dict.edition_s, chi2_dict.edition_t):
            if ed not in graph.editions:
                raise GraphError(f"dictionary references unknown edition {ed!r}")
        for u, v, score in chi2_dict.rows():
            # the edge carries the cooccurrence evidence; score is the weight
            graph.add_edge(u, v, METHOD_CHI2, score)
    return graph


@dataclass
class NormalizedAdjacency:
    """Sparse symmetric matrix over pivot units with values in [0, 1]."""

    values: dict[tuple[bytes, bytes], float] = field(default_factory=dict)

    def value(self, u: bytes, v: bytes) -> float:
        return self.values.get(_ordered(u, v), 0.0)

    def units(self) -> set[bytes]:
        out: set[bytes] = set()
        for u, v in self.values:
            out.add(u)
            out.add(v)
        return out

    def threshold_graph(self, theta: float) -> dict[bytes, set[bytes]]:
        """Adjacency over pivot units keeping entries strictly above theta."""
        adj: dict[bytes, set[bytes]] = {}
        for (u, v), value in self.values.items():
            if value > theta:
                adj.setdefault(u, set()).add(v)
                adj.setdefault(v, set()).add(u)
        return adj


def unit_verse_sets(edition: Edition, verse_ids) -> dict[bytes, set[str]]:
    """Verse-occurrence sets per prefixed unit of one edition."""
    out: dict[bytes, set[str]] = {}
    for vid in verse_ids:
        if vid not in edition.verses:
            continue
        for u in edition.unit_ids(vid):
            out.setdefault(u, set()).add(vid)
    return out


def pivot_cooccurrence_counts(corpus: ParallelCorpus, graph: DictionaryGraph,
                              verse_ids) -> dict[tuple[bytes, bytes], int]:
    """Verse-level cooccurrence counts for every pivot-pivot edge."""
    occurrence: dict[str, dict[bytes, set[str]]] = {}
    for pid in graph.pivot_editions:
        ids = set(verse_ids) & corpus.editions[pid].verses.keys()
        occurrence[pid] = unit_verse_sets(corpus.editions[pid], ids)
    counts: dict[tuple[bytes, bytes], int] = {}
    for u, v, _ in graph.pivot_pivot_edges():
        su = occurrence[edition_of(u)].get(u, set())
        sv = occurrence[edition_of(v)].get(v, set())
        counts[_ordered(u, v)] = len(su & sv)
    return counts


def normalize(graph: DictionaryGraph, cooc_counts: dict[tuple[bytes, bytes], int],
              freqs: dict[bytes, int] | None = None,
              denominator: str = "cooccurrence") -> NormalizedAdjacency:
    """Relative link frequency per pivot-pivot edge, clipped to 1.

    The default denominator is the number of training verses containing both
    words (an alignment edge is only possible where both cooccur); the
    ``minfreq`` alternative divides by min(f(u), f(v)) instead and needs the
    unit verse frequencies.
    """
    if denominator not in ("cooccurrence", "minfreq"):
        raise ValueError(f"unknown denominator {denominator!r}")
    values: dict[tuple[bytes, bytes], float] = {}
    for u, v, tags in graph.pivot_pivot_edges():
        link = sum(tags.values())
        if denominator == "cooccurrence":
            den = cooc_counts.get(_ordered(u, v), 0)
        else:
            if freqs is None:
                raise ValueError("minfreq denominator needs unit frequencies")
            den = min(freqs.get(u, 0), freqs.get(v, 0))
        if den <= 0:
            if link > 0:
                raise GraphError(
                    f"edge {u!r} -- {v!r} has links but zero possible alignments")
            continue
        values[_ordered(u, v)] = min(1.0, link / den)
    return NormalizedAdjacency(values)


def write_graph(path, graph: DictionaryGraph) -> None:
    with tsvio.atomic_write(path) as fh:
        fh.write(b"#editions\t" + ",".join(sorted(graph.editions)).encode() + b"\n")
        fh.write(b"#pivots\t" + ",".join(graph.pivot_editions).encode() + b"\n")
        rows = sorted(
            (u, v, method.encode(), tsvio.format_score(count))
            for u, v, method, count in graph.edge_rows()
        )
        for u, v, method, count in rows:
            fh.write(u + b"\t" + v + b"\t" + method + b"\t" + count + b"\n")


def read_graph(path) -> DictionaryGraph:
    editions: list[str] = []
    pivots: list[str] = []
    edges = []
    with open(path, "rb") as fh:
        for raw in fh:
            line = raw.rstrip(b"\n")
            if not line:
                continue
            if line.startswith(b"#editions\t"):
                editions = line.split(b"\t")[1].decode().split(",")
            elif line.startswith(b"#pivots\t"):
                pivots = line.split(b"\t")[1].decode().split(",")
            else:
                u, v, method, count = line.split(b"\t")
                edges.append((u, v, method.decode(), float(count)))
    graph = DictionaryGraph(pivots, editions)
    for u, v, method, count in edges:
        graph.add_edge(u, v, method, count)
    return graph
