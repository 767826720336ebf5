import numpy as np
import pytest

from conceptvec import embed
from conceptvec.embed import (
    EmbedError, EmptySpaceError, EmbeddingSpace, TrainConfig,
    batch_loss_and_grads, build_vocab, finite_difference_check, load_space,
    train_sgns,
)


def cos(space, a, b):
    va, vb = space.vector(a), space.vector(b)
    return float(va @ vb / (np.linalg.norm(va) * np.linalg.norm(vb)))


class TestVocab:
    def test_frequency_sorted_with_lexicographic_ties(self):
        lines = [[b"b", b"a", b"a"], [b"c", b"b"]]
        units, counts = build_vocab(lines, min_count=1)
        assert units == [b"a", b"b", b"c"]
        assert counts.tolist() == [2, 2, 1]

    def test_min_count_filter(self):
        units, _ = build_vocab([[b"a", b"a", b"b"]], min_count=2)
        assert units == [b"a"]


class TestTraining:
    def test_cowindowed_units_end_up_closer(self):
        # A and B share their context distribution (each other plus their
        # group's member unit); C lives in a disjoint group, so it shares no
        # contexts with A at all
        for seed in range(10):
            lines = [[b"x:A", b"x:B", b"x:m"]] * 150 + [[b"x:C", b"x:E", b"x:n"]] * 150
            cfg = TrainConfig(dim=16, epochs=10, seed=seed, window=2,
                              subsample=0, learning_rate=0.05)
            space = train_sgns(lines, cfg)
            assert cos(space, b"x:A", b"x:B") > cos(space, b"x:A", b"x:C"), seed

    def test_single_unit_vocabulary(self):
        space = train_sgns([[b"x:only", b"x:only", b"x:only"]] * 5,
                           TrainConfig(dim=8, epochs=2, seed=1))
        assert space.units == [b"x:only"]

    def test_empty_vocabulary_errors(self):
        with pytest.raises(EmptySpaceError):
            train_sgns([[b"a"]], TrainConfig(dim=4, epochs=1, min_count=5))

    def test_reproducible_single_worker(self):
        lines = [[b"x:A", b"x:B", b"x:C"]] * 60
        cfg = TrainConfig(dim=12, epochs=3, seed=42)
        s1 = train_sgns(lines, cfg)
        s2 = train_sgns(lines, cfg)
        assert s1.units == s2.units
        assert np.array_equal(s1.vectors, s2.vectors)

    def test_loss_decreases_across_epochs(self):
        lines = [[b"x:A", b"x:B"], [b"x:C", b"x:D"], [b"x:A", b"x:C"]] * 80
        cfg = TrainConfig(dim=16, epochs=6, seed=3, subsample=0)
        space = train_sgns(lines, cfg)
        losses = space.epoch_losses
        assert losses[-1] < losses[0]
        # monotone within a smoothing window of one epoch
        for earlier, later in zip(losses, losses[1:]):
            assert later <= earlier * 1.05

    def test_multi_worker_runs(self):
        lines = [[b"x:A", b"x:B", b"x:C"]] * 50
        cfg = TrainConfig(dim=8, epochs=2, seed=1, workers=2)
        space = train_sgns(lines, cfg)
        assert len(space.units) == 3


class TestKernelMatchesReference:
    def test_sequential_updates_match_numpy_reference(self):
        if not embed.HAVE_NUMBA:
            pytest.skip("reference path is the production path")
        rng = np.random.default_rng(0)
        vocab, dim, n_pairs, k = 7, 5, 12, 3
        w_in = rng.normal(scale=0.3, size=(vocab, dim)).astype(np.float32)
        w_out = rng.normal(scale=0.3, size=(vocab, dim)).astype(np.float32)
        centers = rng.integers(0, vocab, n_pairs)
        contexts = rng.integers(0, vocab, n_pairs)
        # distinct negatives per pair: the sequential kernel sees its own
        # update when a row repeats within a pair, the batch reference not
        negatives = np.stack([rng.choice(vocab, size=k, replace=False)
                              for _ in range(n_pairs)])
        lr = 0.1

        # reference: one pair at a time through the checked numpy math
        ref_in = w_in.astype(np.float64).copy()
        ref_out = w_out.astype(np.float64).copy()
        ref_loss = 0.0
        for p in range(n_pairs):
            c, o = int(centers[p]), int(contexts[p])
            neg = negatives[p : p + 1]
            mask = (neg != o).astype(np.float64)
            loss, g_v, g_u, g_n = batch_loss_and_grads(
                ref_in[c : c + 1], ref_out[o : o + 1], ref_out[neg], mask)
            ref_loss += loss
            ref_in[c] -= lr * g_v[0]
            ref_out[o] -= lr * g_u[0]
            for j in range(k):
                ref_out[neg[0, j]] -= lr * g_n[0, j]

        kern_in = w_in.copy()
        kern_out = w_out.copy()
        loss = embed._sgd_kernel(kern_in, kern_out, centers, contexts,
                                 negatives, np.float32(lr))
        assert loss == pytest.approx(ref_loss, rel=1e-4)
        np.testing.assert_allclose(kern_in, ref_in, atol=1e-5)
        np.testing.assert_allclose(kern_out, ref_out, atol=1e-5)


class TestGradientCheck:
    def test_random_instances_pass(self):
        for seed in range(5):
            ok, err = finite_difference_check(vocab_size=5, dim=8, seed=seed)
            assert ok, f"seed {seed}: max relative error {err}"

    def test_corrupted_gradient_fails(self):
        ok, err = finite_difference_check(seed=0, corrupt=True)
        assert not ok and err > 1e-2

    def test_zero_vectors_sigmoid_at_half(self):
        ok, _ = finite_difference_check(seed=0, zero_vectors=True)
        assert ok

    def test_large_vocab_rejected(self):
        with pytest.raises(ValueError):
            finite_difference_check(vocab_size=50)


def small_space():
    units = [b"aa:x", b"aa:y", b"aa:z", b"bb:x", b"bb:q"]
    vectors = np.asarray([
        [1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.8, 0.2], [-1.0, 0.0],
    ], dtype=np.float32)
    return EmbeddingSpace(units, vectors)


class TestNearestNeighbors:
    def test_self_is_rank_one_with_unit_cosine(self):
        space = small_space()
        top = space.nearest_neighbors(b"aa:x", "aa", 1)
        assert top[0][0] == b"aa:x"
        assert top[0][1] == pytest.approx(1.0, abs=1e-6)

    def test_k_larger_than_edition_returns_full_ranking(self):
        space = small_space()
        out = space.nearest_neighbors(b"aa:x", "bb", 10)
        assert [u for u, _ in out] == [b"bb:x", b"bb:q"]

    def test_edition_filter_respected(self):
        space = small_space()
        for u, _ in space.nearest_neighbors(b"aa:x", "bb", 5):
            assert u.startswith(b"bb:")

    def test_out_of_vocabulary_query(self):
        with pytest.raises(KeyError):
            small_space().nearest_neighbors(b"aa:nope", "aa", 1)

    def test_empty_edition(self):
        assert small_space().nearest_neighbors(b"aa:x", "cc", 3) == []

    def test_ties_break_lexicographically(self):
        units = [b"aa:q", b"bb:b", b"bb:a", b"bb:c"]
        vectors = np.asarray([[1.0, 0.0]] * 4, dtype=np.float32)
        space = EmbeddingSpace(units, vectors)
        out = space.nearest_neighbors(b"aa:q", "bb", 3)
        assert [u for u, _ in out] == [b"bb:a", b"bb:b", b"bb:c"]

    def test_cosine_self_similarity_of_nonzero_rows(self):
        rng = np.random.default_rng(1)
        units = [f"aa:u{i}".encode() for i in range(20)]
        space = EmbeddingSpace(units, rng.normal(size=(20, 6)).astype(np.float32))
        for u in units:
            top = space.nearest_neighbors(u, "aa", 1)
            assert top[0] == (u, pytest.approx(1.0, abs=1e-6))


class TestSaveLoad:
    def test_roundtrip_bitwise_stable(self, tmp_path):
        lines = [[b"x:A", b"x:B", b"y:C"]] * 30
        space = train_sgns(lines, TrainConfig(dim=6, epochs=2, seed=2))
        p1, p2 = tmp_path / "a.vec", tmp_path / "b.vec"
        space.save(p1)
        loaded = load_space(p1)
        loaded.save(p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert loaded.units == space.units

    def test_truncated_file_errors(self, tmp_path):
        path = tmp_path / "x.vec"
        path.write_bytes(b"3 2\nu 1.0 2.0\n")
        with pytest.raises(EmbedError):
            load_space(path)

    def test_zero_unit_header_errors(self, tmp_path):
        path = tmp_path / "x.vec"
        path.write_bytes(b"0 5\n")
        with pytest.raises(EmptySpaceError):
            load_space(path)

    def test_dimension_mismatch_errors(self, tmp_path):
        path = tmp_path / "x.vec"
        path.write_bytes(b"1 3\nu 1.0 2.0\n")
        with pytest.raises(EmbedError):
            load_space(path)

    def test_units_with_spaces_survive(self, tmp_path):
        units = [b"aa: xy ", b"aa:z"]
        space = EmbeddingSpace(units, np.ones((2, 2), dtype=np.float32))
        path = tmp_path / "s.vec"
        space.save(path)
        assert load_space(path).units == units
