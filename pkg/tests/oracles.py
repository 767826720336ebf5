"""Independent brute-force oracles shared by module and acceptance tests.

Everything here re-derives results by enumeration or full scans and never
calls into the package's optimized code paths, so agreement is meaningful.
"""

import random
from itertools import combinations

from conceptvec.chi2 import PairCooccurrence, f_min_for, selection_schedule


def brute_force_maximal_cliques(adj, min_size=1):
    """Enumerate all vertex subsets; keep cliques not contained in another."""
    nodes = sorted(adj)
    cliques = []
    for r in range(1, len(nodes) + 1):
        for subset in combinations(nodes, r):
            if all(b in adj[a] for a, b in combinations(subset, 2)):
                cliques.append(set(subset))
    maximal = [c for c in cliques if not any(c < other for other in cliques)]
    return sorted((frozenset(c) for c in maximal if len(c) >= min_size),
                  key=lambda c: sorted(c))


def random_graph(rng, max_nodes=15, p=None):
    n = rng.randint(0, max_nodes)
    p = rng.uniform(0.1, 0.7) if p is None else p
    adj = {i: set() for i in range(n)}
    for a, b in combinations(range(n), 2):
        if rng.random() < p:
            adj[a].add(b)
            adj[b].add(a)
    return adj


def merge_cliques_directly(cliques, nu):
    """Direct implementation of the clique-merging rule for oracle use.

    Builds the overlap graph with an explicit double loop, enumerates its
    maximal cliques by subset enumeration, and flattens.
    """
    overlap = {i: set() for i in range(len(cliques))}
    for i in range(len(cliques)):
        for j in range(len(cliques)):
            if i == j:
                continue
            if len(cliques[i] & cliques[j]) >= nu * min(len(cliques[i]),
                                                        len(cliques[j])):
                overlap[i].add(j)
    metacliques = brute_force_maximal_cliques(overlap, min_size=1)
    flattened = set()
    for meta in metacliques:
        flattened.add(frozenset().union(*(cliques[i] for i in meta)))
    return sorted(flattened, key=lambda c: sorted(c))


def index_from_occurrences(source_sets, target_sets, n):
    """Cooccurrence index from explicit per-unit verse-occurrence sets."""
    freq_s = {s: len(v) for s, v in source_sets.items()}
    freq_t = {t: len(v) for t, v in target_sets.items()}
    cooc = {}
    for s, sv in source_sets.items():
        for t, tv in target_sets.items():
            shared = len(sv & tv)
            if shared:
                cooc[(s, t)] = shared
    return PairCooccurrence("pp", "tt", n, freq_s, freq_t, cooc)


def random_chi2_index(rng, max_units_per_side=100, max_verses=500):
    n = rng.randint(20, max_verses)
    alphabet = b"abcd"
    source_sets = {}
    for i in range(rng.randint(3, max_units_per_side)):
        df = rng.randint(1, max(1, n // 2))
        source_sets[f"s{i}".encode()] = set(rng.sample(range(n), df))
    target_sets = {}
    for _ in range(rng.randint(3, max_units_per_side)):
        surface = bytes(rng.choice(alphabet) for _ in range(4))
        df = rng.randint(1, max(1, n // 2))
        target_sets.setdefault(surface, set(rng.sample(range(n), df)))
    return index_from_occurrences(source_sets, target_sets, n)


def replay_chi2_with_brute_force(index, chi_min, d_max, trace):
    """Re-derive every greedy pick by a full scan over eligible edges.

    Follows the same (degree, f_max) schedule; at each recorded selection
    the maximum-score eligible edge must match the trace exactly (score,
    endpoints, schedule position). Extensions are checked against the
    threshold, band and degree cap, then applied to keep state in sync.
    Raises AssertionError on any mismatch.
    """
    active = set(index.cooc)
    degrees = {}
    steps = iter(trace)
    step = next(steps, None)
    for d, f_max in selection_schedule(index.n_verses, d_max):
        f_min = f_min_for(f_max)
        while True:
            best = None
            for s, t in active:
                f_s, f_t = index.freq_s[s], index.freq_t[t]
                if not (f_min <= f_s <= f_max and f_min <= f_t <= f_max):
                    continue
                if degrees.get(s, 0) >= d or degrees.get(t, 0) >= d:
                    continue
                key = (-index.score(s, t), f_s, f_t, s, t)
                if best is None or key < best:
                    best = key
            if best is None or -best[0] < chi_min:
                break
            assert step is not None, "greedy selected fewer edges than the scan"
            assert (step.degree_pass, step.f_max) == (d, f_max)
            assert (step.source, step.target) == (best[3], best[4])
            assert abs(step.score - (-best[0])) < 1e-9
            for t_ext, score in step.extended:
                assert score >= chi_min
                assert f_min <= index.freq_t[t_ext] <= f_max
                assert degrees.get(t_ext, 0) < d
            for t_rm in [step.target] + [t for t, _ in step.extended]:
                active.discard((step.source, t_rm))
            degrees[step.source] = degrees.get(step.source, 0) + 1
            degrees[step.target] = degrees.get(step.target, 0) + 1
            step = next(steps, None)
    assert step is None, "greedy selected more edges than the scan"
