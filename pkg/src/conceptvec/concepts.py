"""Concept induction over the dictionary graph, plus the SAMPLE baseline.

A concept pairs a defining set of pivot words with the target units linked
to them. CLIQUE concepts come from merged maximal cliques of the thresholded
pivot adjacency; target-neighborhood concepts group target units by the
exact set of pivot words they are linked to; SAMPLE groups units that occur
in exactly the same verses of random subcorpora.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace
from itertools import combinations

from .cliques import find_maximal_cliques
from .corpus import ParallelCorpus, edition_of
from .graph import DictionaryGraph, NormalizedAdjacency
from . import tsvio

CLIQUE = "CLIQUE"
NT = "NT"
NT_CC = "NT-CC"
NT_CLIQUE = "NT-CLIQUE"
NT_EDGE = "NT-EDGE"
SAMPLE = "SAMPLE"

CONCEPT_METHODS = (CLIQUE, NT, NT_CC, NT_CLIQUE, NT_EDGE, SAMPLE)

DEFAULT_THETA = 0.4
DEFAULT_NU = 0.6


@dataclass(frozen=True)
class Concept:
    concept_id: int
    method: str
    pivot_words: frozenset[bytes]
    target_units: frozenset[bytes]

    def units(self) -> list[bytes]:
        return sorted(self.pivot_words | self.target_units)


def _set_key(units: frozenset[bytes]) -> tuple:
    return tuple(sorted(units))


def induce_clique_concepts(adjacency: NormalizedAdjacency,
                           theta: float = DEFAULT_THETA,
                           nu: float = DEFAULT_NU) -> list[Concept]:
    """Merged maximal cliques of the thresholded pivot adjacency.

    Maximal cliques of size >= 3 become vertices of an overlap graph (edge
    when the shared words reach nu times the smaller clique); each maximal
    clique of that graph is flattened into one concept. Isolated cliques
    survive as their own concept.
    """
    adj = adjacency.threshold_graph(theta)
    cliques = find_maximal_cliques(adj, min_size=3)
    overlap: dict[int, set[int]] = {i: set() for i in range(len(cliques))}
    for i, j in combinations(range(len(cliques)), 2):
        if len(cliques[i] & cliques[j]) >= nu * min(len(cliques[i]), len(cliques[j])):
            overlap[i].add(j)
            overlap[j].add(i)
    metacliques = find_maximal_cliques(overlap, min_size=1)

    flattened: list[frozenset[bytes]] = []
    seen: set[frozenset[bytes]] = set()
    for meta in metacliques:
        flat = frozenset().union(*(cliques[i] for i in meta))
        if flat not in seen:
            seen.add(flat)
            flattened.append(flat)
    flattened.sort(key=_set_key)
    return [Concept(i, CLIQUE, words, frozenset()) for i, words in enumerate(flattened)]


def project_concept(concept: Concept, graph: DictionaryGraph,
                    nu: float = DEFAULT_NU) -> Concept:
    """Add every unit linked to at least nu of the concept's member words.

    The comparison is inclusive on the real-valued product, so a unit linked
    to exactly ceil(nu * |members|) words is included.
    """
    members = concept.pivot_words
    threshold = nu * len(members)
    counts: dict[bytes, int] = {}
    for w in sorted(members):
        for t in graph.neighbors(w):
            if t not in members:
                counts[t] = counts.get(t, 0) + 1
    targets = frozenset(t for t, c in counts.items() if c >= threshold)
    return replace(concept, target_units=targets)


def project_concepts(concepts, graph: DictionaryGraph, nu: float = DEFAULT_NU
                     ) -> list[Concept]:
    return [project_concept(c, graph, nu) for c in concepts]


def induce_target_neighborhoods(graph: DictionaryGraph) -> list[Concept]:
    """One concept per distinct non-empty target neighborhood.

    Every unit of the graph (pivot editions act as target editions too) is
    grouped by the exact set of pivot words it is linked to.
    """
    groups: dict[frozenset[bytes], list[bytes]] = {}
    for u in sorted(graph.units()):
        nb = graph.neighborhood(u)
        if nb:
            groups.setdefault(nb, []).append(u)
    ordered = sorted(groups.items(), key=lambda kv: _set_key(kv[0]))
    return [
        Concept(i, NT, pivot_words, frozenset(members))
        for i, (pivot_words, members) in enumerate(ordered)
    ]


def _induced_connected(graph: DictionaryGraph, words: frozenset[bytes]) -> bool:
    start = next(iter(sorted(words)))
    seen = {start}
    stack = [start]
    while stack:
        w = stack.pop()
        for v in graph.neighbors(w):
            if v in words and v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == len(words)


def _induced_complete(graph: DictionaryGraph, words: frozenset[bytes]) -> bool:
    return all(graph.has_edge(a, b) for a, b in combinations(sorted(words), 2))


def filter_nt(concepts, graph: DictionaryGraph, variant: str) -> list[Concept]:
    """Postfilter target neighborhoods by their pivot-pivot link structure.

    CC keeps neighborhoods inducing a connected subgraph, CLIQUE those
    inducing a complete one. EDGE emits a size-2 concept for every pivot
    pair that is a dictionary edge and a subset of a neighborhood, so edges
    that are proper subsets of larger neighborhoods also count.
    """
    out: list[Concept] = []
    if variant == "CC":
        for c in concepts:
            if _induced_connected(graph, c.pivot_words):
                out.append(replace(c, concept_id=len(out), method=NT_CC))
    elif variant == "CLIQUE":
        for c in concepts:
            if _induced_complete(graph, c.pivot_words):
                out.append(replace(c, concept_id=len(out), method=NT_CLIQUE))
    elif variant == "EDGE":
        for c in concepts:
            for a, b in combinations(sorted(c.pivot_words), 2):
                if graph.has_edge(a, b):
                    out.append(Concept(len(out), NT_EDGE, frozenset((a, b)),
                                       c.target_units))
    else:
        raise ValueError(f"unknown NT filter variant {variant!r}")
    return out


def induce_sample_concepts(corpus: ParallelCorpus, num_samples: int,
                           seed: int = 0) -> list[Concept]:
    """Group units occurring in exactly the same verses of random subcorpora.

    Subcorpus sizes are drawn log-uniformly between 2 and the training-set
    size, favoring small subcorpora where exact cooccurrence is likelier.
    A multi-edition group containing at least one pivot word becomes a
    concept; duplicates across samples are dropped.
    """
    train = sorted(corpus.train_ids)
    if num_samples <= 0 or len(train) < 2:
        return []
    pivot_set = set(corpus.pivot_ids)

    # tokenize once; samples only index into this
    unit_lists: dict[str, dict[str, list[bytes]]] = {}
    for eid in sorted(corpus.editions):
        ed = corpus.editions[eid]
        unit_lists[eid] = {
            vid: ed.unit_ids(vid) for vid in train if vid in ed.verses
        }

    rng = random.Random(seed)
    seen: set[tuple[frozenset[bytes], frozenset[bytes]]] = set()
    concepts: list[Concept] = []
    for _ in range(num_samples):
        size = int(round(math.exp(rng.uniform(math.log(2), math.log(len(train))))))
        subset = rng.sample(train, max(2, min(size, len(train))))
        groups: dict[frozenset[str], list[bytes]] = {}
        for eid in sorted(corpus.editions):
            verses = unit_lists[eid]
            occ: dict[bytes, set[str]] = {}
            for vid in subset:
                units = verses.get(vid)
                if units:
                    for u in set(units):
                        occ.setdefault(u, set()).add(vid)
            for u, vs in occ.items():
                groups.setdefault(frozenset(vs), []).append(u)
        for members in groups.values():
            if len({edition_of(u) for u in members}) < 2:
                continue
            pivots = frozenset(u for u in members if edition_of(u) in pivot_set)
            if not pivots:
                continue
            targets = frozenset(members) - pivots
            sig = (pivots, targets)
            if sig not in seen:
                seen.add(sig)
                concepts.append(Concept(len(concepts), SAMPLE, pivots, targets))
    return concepts


def write_concepts(path, concepts) -> None:
    """One concept per line: method, id, pivot units, target units."""
    with tsvio.atomic_write(path) as fh:
        for c in concepts:
            fh.write(b"\t".join([
                c.method.encode(),
                str(c.concept_id).encode(),
                b" ".join(tsvio.escape_unit(u) for u in sorted(c.pivot_words)),
                b" ".join(tsvio.escape_unit(u) for u in sorted(c.target_units)),
            ]) + b"\n")


def read_concepts(path) -> list[Concept]:
    out: list[Concept] = []
    with open(path, "rb") as fh:
        for raw in fh:
            line = raw.rstrip(b"\n")
            if not line:
                continue
            method, cid, pivots, targets = line.split(b"\t")
            out.append(Concept(
                int(cid), method.decode(),
                frozenset(tsvio.unescape_unit(u) for u in pivots.split(b" ") if u),
                frozenset(tsvio.unescape_unit(u) for u in targets.split(b" ") if u),
            ))
    return out
