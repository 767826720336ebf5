"""Acceptance gate: one test per criterion, each printing a PASS line.

The two pipeline criteria build synthetic cipher corpora where the gold
dictionary is known exactly; the rest are oracle-equivalence and invariant
checks at their stated tolerances. Run with ``pytest -s`` to see the
per-criterion lines.
"""

import json
import random
import time

import numpy as np
import pytest

from conceptvec import chi2, cli, concepts, corpus, embed, evaluate, toy
from conceptvec.align import induce_alignment_dictionary, train_ibm1
from conceptvec.cliques import find_maximal_cliques
from conceptvec.corpus import ngramize, select_ngram_order, unit_id
from conceptvec.graph import DictionaryGraph, NormalizedAdjacency
from conceptvec.sentiment import f1_score, train_linear_svm

from oracles import (
    brute_force_maximal_cliques, merge_cliques_directly, random_chi2_index,
    random_graph, replay_chi2_with_brute_force,
)


def report(criterion: int, name: str) -> None:
    print(f"ACCEPTANCE {criterion:2d} {name}: PASS")


def run_toy_pipeline(tmp_path, *, corpus_seed, pipeline_seed, methods,
                     num_verses, vocab_size, drop_fraction=0.0, token_noise=0.0,
                     target_size, epochs, sid_epochs=50, num_queries=50,
                     min_freq=5):
    """Generate a cipher corpus, run the staged pipeline, return S1 means."""
    tc = toy.make_cipher_corpus(
        tmp_path / "corpus", num_editions=12, num_verses=num_verses,
        vocab_size=vocab_size, seed=corpus_seed, test_count=num_verses // 5,
        drop_fraction=drop_fraction, token_noise=token_noise)
    man = corpus.read_manifest(tc.manifest_path)
    built = corpus.build_corpus(man)
    queries = toy.frequent_queries(built, "eng0", built.train_ids,
                                   min_freq=min_freq, limit=num_queries)
    (tmp_path / "queries.txt").write_bytes(b"\n".join(queries) + b"\n")
    raw = {
        "manifest": str(tc.manifest_path),
        "out_dir": str(tmp_path / "out"),
        "methods": list(methods),
        "seed": pipeline_seed,
        "workers": 1,
        "target_size": target_size,
        "bow_factor": 1,
        "dim": 64,
        "epochs": epochs,
        "sid_epochs": sid_epochs,
        "query_edition": "eng0",
        "query_file": str(tmp_path / "queries.txt"),
    }
    (tmp_path / "config.json").write_text(json.dumps(raw))
    cfg = cli.load_config(tmp_path / "config.json")
    for stage in ("ingest", "align", "chi2", "graph", "concepts", "corpus",
                  "train", "eval"):
        cli.run_stage(stage, cfg)
    means = {}
    for method in methods:
        with open(tmp_path / "out" / "eval" / f"{method}.json") as fh:
            summary = json.load(fh)
        means[method] = summary["settings"]["S1"]["mean"]
    return means, len(queries)


class TestCriterion1CipherEndToEnd:
    def test_nt_pipeline_recovers_cipher_roundtrips(self, tmp_path):
        start = time.monotonic()
        means, n_queries = run_toy_pipeline(
            tmp_path, corpus_seed=11, pipeline_seed=7, methods=["NT"],
            num_verses=2000, vocab_size=500, target_size=8_000_000, epochs=8,
            num_queries=70)
        elapsed = time.monotonic() - start
        assert n_queries >= 50
        assert means["NT"] >= 0.90, f"S1 mean {means['NT']:.3f} below 0.90"
        assert elapsed < 600, f"pipeline took {elapsed:.0f}s, budget is 600s"
        report(1, f"cipher end-to-end oracle (S1={means['NT']:.3f}, "
                  f"{elapsed:.0f}s)")


class TestCriterion2QualitativeOrdering:
    def test_method_ordering_holds_across_three_seeds(self, tmp_path):
        methods = ["NT", "CLIQUE", "S-ID", "BOW", "RTSIMPLE"]
        for corpus_seed, pipeline_seed in ((21, 5), (22, 6), (23, 7)):
            means, _ = run_toy_pipeline(
                tmp_path / f"seed{corpus_seed}", corpus_seed=corpus_seed,
                pipeline_seed=pipeline_seed, methods=methods,
                num_verses=1200, vocab_size=700, drop_fraction=0.2,
                token_noise=0.05, target_size=6_000_000, epochs=8)
            # compare at the integer precision points the reference table
            # reports; the tied pair sits at the cipher ceiling, the strict
            # inequalities are separated by 5-60 points
            pts = {m: round(100 * v) for m, v in means.items()}
            label = f"seeds ({corpus_seed},{pipeline_seed}): {pts}"
            assert pts["NT"] >= pts["CLIQUE"], label
            assert pts["CLIQUE"] > pts["S-ID"], label
            assert pts["S-ID"] > pts["BOW"], label
            assert pts["RTSIMPLE"] < pts["NT"], label
        report(2, "qualitative method ordering across 3 seeds")


class TestCriterion3Chi2GreedyOracle:
    def test_fifty_random_corpora(self):
        rng = random.Random(303)
        for i in range(50):
            index = random_chi2_index(rng)
            chi_min = rng.choice([5.0, 10.0, 25.0, 50.0])
            d_max = rng.randint(1, 5)
            result = chi2.induce_chi2_dictionary(index, chi_min=chi_min,
                                                 d_max=d_max)
            replay_chi2_with_brute_force(index, chi_min, d_max, result.trace)
        report(3, "chi-square greedy selection matches brute force (50 corpora)")


class TestCriterion4CliqueOracle:
    def test_hundred_random_graphs(self):
        rng = random.Random(404)
        for _ in range(100):
            adj = random_graph(rng, max_nodes=15)
            assert find_maximal_cliques(adj, min_size=3) == \
                brute_force_maximal_cliques(adj, min_size=3)
        report(4, "maximal cliques match subset enumeration (100 graphs)")

    def test_merging_matches_direct_rule(self):
        rng = random.Random(405)
        for _ in range(30):
            n = rng.randint(3, 12)
            units = [unit_id(f"p{i}", b"w") for i in range(n)]
            values = {}
            for i in range(n):
                for j in range(i + 1, n):
                    if rng.random() < 0.4:
                        pair = tuple(sorted((units[i], units[j])))
                        values[pair] = rng.uniform(0.41, 1.0)
            adjacency = NormalizedAdjacency(values)
            nu = 0.6
            found = concepts.induce_clique_concepts(adjacency, theta=0.4, nu=nu)
            got = sorted((c.pivot_words for c in found), key=sorted)
            cliques = brute_force_maximal_cliques(
                adjacency.threshold_graph(0.4), min_size=3)
            expected = merge_cliques_directly(cliques, nu)
            assert got == expected
        report(4, "clique merging matches the direct overlap rule")


class TestCriterion5NeighborhoodGroupingOracle:
    def test_grouping_matches_pairwise_comparison(self):
        rng = random.Random(505)
        pivots = [f"p{i}" for i in range(10)]
        target_editions = ["t0", "t1", "t2"]
        graph = DictionaryGraph(pivots, pivots + target_editions)
        pool = [unit_id(p, f"w{k}".encode()) for p in pivots for k in range(4)]
        targets = [unit_id(rng.choice(target_editions), f"u{i}".encode())
                   for i in range(1000)]
        for t in set(targets):
            for p in rng.sample(pool, rng.randint(0, 5)):
                graph.add_edge(t, p, "align", 1)

        found = concepts.induce_target_neighborhoods(graph)

        # brute force: pairwise comparison of neighborhoods
        non_isolated = sorted(u for u in graph.units() if graph.neighborhood(u))
        assigned = {}
        groups = []
        for u in non_isolated:
            for group in groups:
                if graph.neighborhood(group[0]) == graph.neighborhood(u):
                    group.append(u)
                    break
            else:
                groups.append([u])
        expected = sorted((frozenset(g) for g in groups), key=sorted)
        got = sorted((c.target_units for c in found), key=sorted)
        assert got == expected

        # partition: disjoint and exhaustive over non-isolated units
        seen = set()
        for c in found:
            assert not (c.target_units & seen)
            seen |= c.target_units
        assert seen == set(non_isolated)
        report(5, "neighborhood grouping matches pairwise comparison "
                  f"({len(non_isolated)} targets)")


class TestCriterion6GradientCheck:
    def test_twenty_random_instances(self):
        rng = random.Random(606)
        worst = 0.0
        for i in range(20):
            ok, err = embed.finite_difference_check(
                vocab_size=rng.randint(3, 10), dim=rng.randint(4, 12),
                negatives=rng.randint(1, 5), n_pairs=rng.randint(2, 8),
                seed=i, tolerance=1e-4)
            worst = max(worst, err)
            assert ok, f"instance {i}: relative error {err}"
        report(6, f"SGNS gradient check (worst rel err {worst:.2e} < 1e-4)")


class TestCriterion7PrecisionFormula:
    FIRST = ["wife", "woman", "women", "widows", "daughters", "daughter",
             "marry", "married"]
    SECOND = ["marry", "wife", "woman", "married", "marriage", "virgin",
              "daughters", "bridegroom"]

    def test_two_intermediate_fixture(self):
        def preds(k_i, k_t):
            out = set()
            for route in [self.FIRST, self.SECOND][:k_i]:
                out |= {unit_id("eng", w.encode()) for w in route[:k_t]}
            return {"spa": out}

        strict = frozenset((b"woman",))
        relaxed = frozenset((b"woman", b"women"))
        expected = {"S1": 0.0, "R1": 0.0, "S4": 1.0, "S16": 1.0}
        for name, (kind, k_i, k_t) in evaluate.SETTINGS.items():
            truth = strict if kind == "s" else relaxed
            assert evaluate.precision(preds(k_i, k_t), truth) == expected[name]

    def test_monotonicity_on_randomized_fixtures(self):
        rng = random.Random(707)
        pool = [f"w{i}".encode() for i in range(12)]
        for _ in range(1000):
            editions = [f"e{i}" for i in range(rng.randint(1, 4))]
            strict = frozenset(rng.sample(pool, 2))
            relaxed = strict | frozenset(rng.sample(pool, 3))
            p1, p4, p16 = {}, {}, {}
            for e in editions:
                s1 = {unit_id("q", w) for w in rng.sample(pool, 1)}
                s4 = s1 | {unit_id("q", w) for w in rng.sample(pool, 3)}
                s16 = s4 | {unit_id("q", w) for w in rng.sample(pool, 6)}
                p1[e], p4[e], p16[e] = s1, s4, s16
            v1 = evaluate.precision(p1, strict)
            v4 = evaluate.precision(p4, strict)
            v16 = evaluate.precision(p16, strict)
            r1 = evaluate.precision(p1, relaxed)
            assert v16 >= v4 >= v1
            assert r1 >= v1
        report(7, "precision formula fixtures and monotonicity (1000 cases)")


class TestCriterion8NgramLaws:
    def test_count_law_ten_thousand_inputs(self):
        rng = random.Random(808)
        for _ in range(10_000):
            m = rng.randrange(0, 60)
            text = bytes(rng.randrange(256) for _ in range(m))
            n = rng.randrange(1, 17)
            assert len(ngramize(text, n)) == max(0, m - n + 3)

    def test_order_selection_boundaries(self):
        cases = {1.999: 4, 2.0: 8, 2.999: 8, 3.0: 12}
        for rho, expected in cases.items():
            assert select_ngram_order(int(rho * 1000), 1000) == expected
        report(8, "n-gram count law (10k inputs) and order boundaries")


class TestCriterion9AlignmentCipherOracle:
    def _cipher_editions(self, n_verses=500, vocab_size=200, seed=909):
        rng = random.Random(seed)
        vocab = [f"w{i:03d}".encode() for i in range(vocab_size)]
        mapping = {w: f"c{i:03d}".encode() for i, w in enumerate(vocab)}
        verses_a, verses_b = {}, {}
        for v in range(n_verses):
            toks = rng.sample(vocab, rng.randint(4, 10))
            vid = f"{v:04d}"
            verses_a[vid] = b" ".join(toks)
            verses_b[vid] = b" ".join(mapping[t] for t in toks)
        ed_a = corpus.Edition("aa", verses_a)
        ed_b = corpus.Edition("bb", verses_b)
        return ed_a, ed_b, mapping

    def test_dictionary_precision_and_recall_one(self):
        ed_a, ed_b, mapping = self._cipher_editions()
        # guard the fixture against perfectly confusable words: no two words
        # may share their full occurrence verse set
        occ = {}
        for vid in ed_a.verses:
            for w in ed_a.units(vid):
                occ.setdefault(w, set()).add(vid)
        signatures = [frozenset(v) for w, v in occ.items() if len(v) >= 2]
        assert len(signatures) == len(set(signatures)), "fixture degenerate"

        result = induce_alignment_dictionary(ed_a, ed_b, ed_a.verses.keys())
        gold = {(unit_id("aa", w), unit_id("bb", mapping[w]))
                for w, verses in occ.items() if len(verses) >= 2}
        predicted = set(result.counts)
        missing = gold - predicted
        spurious = predicted - gold
        assert not missing and not spurious, (
            f"recall misses {len(missing)}, precision misses {len(spurious)}")

        pairs = [(vid, ed_a.units(vid), ed_b.units(vid))
                 for vid in sorted(ed_a.verses)]
        _, history = train_ibm1(pairs, iterations=5)
        assert len(history) == 5
        for earlier, later in zip(history, history[1:]):
            assert later >= earlier - 1e-9
        report(9, f"IBM1 cipher dictionary exact ({len(gold)} edges), "
                  "EM log-likelihood non-decreasing")


class TestCriterion10SentimentPlumbing:
    def _separable(self, n=200, dim=6, seed=0, margin=2.0):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(n, dim))
        w = np.ones(dim) / np.sqrt(dim)
        y = (x @ w > 0).astype(np.int64)
        x += margin * np.outer(np.where(y == 1, 1.0, -1.0), w)
        return x, y

    def test_separable_and_permutation_control(self):
        x, y = self._separable()
        model = train_linear_svm(x, y, reg_lambda=1e-3, epochs=40, seed=1)
        train_f1 = f1_score(y, model.predict(x))
        assert train_f1 == 1.0

        rng = np.random.default_rng(10)
        prior = y.mean()
        scores = []
        for _ in range(10):
            shuffled = rng.permutation(y)
            control = train_linear_svm(x, shuffled, reg_lambda=1e-2,
                                       epochs=10, seed=2)
            scores.append(f1_score(y, control.predict(x)))
        chance_gap = abs(float(np.mean(scores)) - prior)
        assert chance_gap <= 0.1, f"permutation control off chance by {chance_gap:.3f}"
        report(10, f"sentiment plumbing (train F1 1.0, control gap "
                   f"{chance_gap:.3f})")
