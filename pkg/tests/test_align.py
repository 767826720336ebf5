import random

import pytest

from conceptvec import align
from conceptvec.align import (
    AlignmentError, NULL, align_and_symmetrize, build_alignment_dictionary,
    build_verse_pairs, grow_diag_final_and, induce_alignment_dictionary,
    train_ibm1, train_translation_model, viterbi_links,
)
from conceptvec.corpus import unit_id

from conftest import make_edition


def _identical_pair(n_verses=20, seed=0):
    rng = random.Random(seed)
    vocab = [f"w{i}".encode() for i in range(30)]
    pairs = []
    for v in range(n_verses):
        toks = rng.choices(vocab, k=rng.randint(3, 8))
        pairs.append((f"{v:03d}", list(toks), list(toks)))
    return pairs


def _cipher_pair(n_verses=60, vocab_size=40, seed=1):
    rng = random.Random(seed)
    vocab_a = [f"a{i}".encode() for i in range(vocab_size)]
    vocab_b = [f"b{i}".encode() for i in range(vocab_size)]
    mapping = dict(zip(vocab_a, vocab_b))
    pairs = []
    for v in range(n_verses):
        toks = rng.sample(vocab_a, rng.randint(3, 8))
        pairs.append((f"{v:03d}", toks, [mapping[t] for t in toks]))
    return pairs, mapping


class TestEM:
    def test_identical_editions_identity_is_argmax(self):
        pairs = _identical_pair()
        fwd, _ = train_ibm1(pairs, iterations=5)
        seen = {t for _, toks, _ in pairs for t in toks}
        for w in seen:
            best, _ = fwd.best(w)
            assert best == w

    def test_cipher_argmax_recovers_bijection(self):
        pairs, mapping = _cipher_pair()
        freq = {}
        for _, toks, _ in pairs:
            for t in toks:
                freq[t] = freq.get(t, 0) + 1
        fwd, _ = train_ibm1(pairs, iterations=5)
        for w, count in freq.items():
            if count >= 2:
                best, _ = fwd.best(w)
                assert best == mapping[w], f"{w} -> {best}"

    def test_single_shared_verse_prob_one(self):
        fwd, _ = train_ibm1([("001", [b"a"], [b"b"])], iterations=3)
        assert fwd.prob(b"a", b"b") == pytest.approx(1.0)

    def test_log_likelihood_non_decreasing(self):
        for seed in range(4):
            pairs, _ = _cipher_pair(n_verses=30, vocab_size=25, seed=seed)
            _, history = train_ibm1(pairs, iterations=5)
            for earlier, later in zip(history, history[1:]):
                assert later >= earlier - 1e-9

    def test_row_sums_at_most_one(self):
        pairs, _ = _cipher_pair(n_verses=30, seed=5)
        fwd, rev = train_translation_model(pairs, iterations=4)
        for table in (fwd, rev):
            for source, total in table.row_sums().items():
                assert total <= 1.0 + 1e-6

    def test_no_shared_verses_errors(self):
        with pytest.raises(AlignmentError):
            train_ibm1([], iterations=3)

    def test_deterministic(self):
        pairs, _ = _cipher_pair(seed=7)
        t1, h1 = train_ibm1(pairs, iterations=4)
        t2, h2 = train_ibm1(pairs, iterations=4)
        assert h1 == h2
        assert t1.probs == t2.probs


class TestSymmetrize:
    def test_equal_directional_alignments_pass_through(self):
        links = {(0, 0), (1, 2), (2, 1)}
        assert grow_diag_final_and(set(links), set(links)) == links

    def test_single_token_verse_link_always_kept(self):
        pairs = [("001", [b"x"], [b"y"])]
        fwd, rev = train_translation_model(pairs, iterations=2)
        out = align_and_symmetrize(pairs, fwd, rev)
        assert out == [{(0, 0)}]

    def test_identity_table_aligns_diagonally(self):
        pairs = _identical_pair(n_verses=25, seed=3)
        pairs = [(v, a, b) for v, a, b in pairs if len(set(a)) == len(a)]
        vocab = {t for _, toks, _ in pairs for t in toks}
        identity = align.TranslationTable({w: {w: 1.0} for w in vocab})
        for (_, toks, _), links in zip(
                pairs, align_and_symmetrize(pairs, identity, identity)):
            assert links == {(i, i) for i in range(len(toks))}

    def test_identical_editions_align_diagonally(self):
        # dense vocabulary: every token occurs several times, so EM has no
        # perfectly confusable hapax pairs and recovers the identity
        rng = random.Random(3)
        vocab = [f"w{i}".encode() for i in range(12)]
        pairs = []
        for v in range(25):
            toks = rng.sample(vocab, rng.randint(3, 7))
            pairs.append((f"{v:03d}", toks, list(toks)))
        fwd, rev = train_translation_model(pairs, iterations=5)
        for (_, toks, _), links in zip(pairs, align_and_symmetrize(pairs, fwd, rev)):
            assert links == {(i, i) for i in range(len(toks))}

    def test_symmetrized_subset_of_union_and_contains_intersection(self):
        rng = random.Random(11)
        for _ in range(300):
            la, lb = rng.randint(1, 6), rng.randint(1, 6)
            fwd = {(rng.randrange(la), rng.randrange(lb))
                   for _ in range(rng.randint(0, 8))}
            rev = {(rng.randrange(la), rng.randrange(lb))
                   for _ in range(rng.randint(0, 8))}
            sym = grow_diag_final_and(fwd, rev)
            assert sym <= fwd | rev
            assert fwd & rev <= sym

    def test_grow_diag_respects_unaligned_constraint(self):
        # (0,0) is the intersection; (1,1) is adjacent in the union and both
        # endpoints free, so it is grown; (2,2) then chains via (1,1)
        fwd = {(0, 0), (1, 1), (2, 2)}
        rev = {(0, 0)}
        assert grow_diag_final_and(fwd, rev) == {(0, 0), (1, 1), (2, 2)}

    def test_final_and_skips_covered_rows(self):
        # (0,1) in the union has row 0 already aligned: not added
        fwd = {(0, 0), (0, 1)}
        rev = {(0, 0)}
        assert grow_diag_final_and(fwd, rev) == {(0, 0)}


class TestViterbi:
    def test_null_loses_ties_to_real_words(self):
        table = align.TranslationTable({b"a": {b"x": 0.5}, NULL: {b"x": 0.5}})
        assert viterbi_links([b"a"], [b"x"], table) == {(0, 0)}

    def test_null_wins_when_strictly_better(self):
        table = align.TranslationTable({b"a": {b"x": 0.2}, NULL: {b"x": 0.6}})
        assert viterbi_links([b"a"], [b"x"], table) == set()


class TestDictionary:
    def test_min_count_threshold(self):
        ed_a = make_edition("aa", {"1": "x y", "2": "x z", "3": "q"})
        ed_b = make_edition("bb", {"1": "u v", "2": "u w", "3": "r"})
        pairs = build_verse_pairs(ed_a, ed_b, ["1", "2", "3"])
        links = [{(0, 0), (1, 1)}, {(0, 0), (1, 1)}, {(0, 0)}]
        out = build_alignment_dictionary(ed_a, ed_b, pairs, links, min_count=2)
        key = (unit_id("aa", b"x"), unit_id("bb", b"u"))
        assert out.counts == {key: 2}  # the once-linked pairs are dropped

    def test_empty_alignment_empty_dictionary(self):
        ed_a = make_edition("aa", {"1": "x"})
        ed_b = make_edition("bb", {"1": "u"})
        pairs = build_verse_pairs(ed_a, ed_b, ["1"])
        out = build_alignment_dictionary(ed_a, ed_b, pairs, [set()], min_count=2)
        assert out.counts == {}

    def test_cipher_dictionary_exact(self):
        rng = random.Random(13)
        vocab = [f"w{i:02d}".encode() for i in range(30)]
        mapping = {w: f"c{i:02d}".encode() for i, w in enumerate(vocab)}
        verses_a, verses_b = {}, {}
        for v in range(80):
            toks = rng.sample(vocab, rng.randint(3, 7))
            verses_a[f"{v:03d}"] = b" ".join(toks)
            verses_b[f"{v:03d}"] = b" ".join(mapping[t] for t in toks)
        ed_a = make_edition("aa", verses_a)
        ed_b = make_edition("bb", verses_b)
        out = induce_alignment_dictionary(ed_a, ed_b, verses_a.keys())
        freq = {}
        for text in verses_a.values():
            for t in text.split():
                freq[t] = freq.get(t, 0) + 1
        gold = {(unit_id("aa", w), unit_id("bb", mapping[w]))
                for w, c in freq.items() if c >= 2}
        assert set(out.counts) == gold

    def test_null_never_in_dictionary(self):
        pairs, _ = _cipher_pair(n_verses=40, seed=2)
        ed_a = make_edition("aa", {v: b" ".join(a) for v, a, _ in pairs})
        ed_b = make_edition("bb", {v: b" ".join(b) for v, _, b in pairs})
        out = induce_alignment_dictionary(ed_a, ed_b, ed_a.verses.keys())
        for ua, ub in out.counts:
            assert NULL not in (ua, ub)
            assert not ua.endswith(NULL) and not ub.endswith(NULL)
