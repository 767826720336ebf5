"""Skipgram embeddings with negative sampling, trained from pseudocorpora.

The trainer follows the usual conventions: frequency-sorted vocabulary,
subsampling of frequent units, dynamic window, negatives drawn from the
unigram distribution raised to 3/4, linearly decaying learning rate, input
vectors initialized uniformly and output vectors at zero. Pairs are buffered
per chunk and updated by a compiled sequential-SGD kernel (numba); without
numba a batched numpy path applies the same updates with stale in-batch
reads.

The numpy loss/gradient core is a pure function verified against central
finite differences, and the kernel is tested equivalent to applying that
core one pair at a time, so the checked math is the trained math.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap

from .tsvio import unescape_unit, escape_unit, atomic_write

log = logging.getLogger(__name__)

_BATCH_PAIRS = 8192


class EmbedError(Exception):
    pass


class EmptySpaceError(EmbedError):
    pass


@dataclass
class TrainConfig:
    dim: int = 200
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    min_lr_fraction: float = 1e-4
    min_count: int = 1  # hapax handling is done upstream in the pseudocorpus
    subsample: float = 1e-3
    seed: int = 1
    workers: int = 1

    def __post_init__(self) -> None:
        numeric = (self.dim, self.window, self.negatives, self.epochs,
                   self.learning_rate, self.min_count, self.workers)
        if any(v <= 0 for v in numeric):
            raise ValueError("all TrainConfig sizes and rates must be positive")
        if not (0 < self.min_lr_fraction <= 1):
            raise ValueError("min_lr_fraction must be in (0, 1]")


def _edition_prefix(unit: bytes) -> bytes:
    head, sep, _ = unit.partition(b":")
    return head if sep else b""


@dataclass
class EmbeddingSpace:
    """Unit vocabulary plus one dense vector per unit."""

    units: list[bytes]
    vectors: np.ndarray
    epoch_losses: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.units) != self.vectors.shape[0]:
            raise EmbedError("vocabulary/vector row count mismatch")
        self.index = {u: i for i, u in enumerate(self.units)}
        self._normed: np.ndarray | None = None
        self._edition_rows: dict[bytes, np.ndarray] = {}

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __contains__(self, unit: bytes) -> bool:
        return unit in self.index

    def vector(self, unit: bytes) -> np.ndarray:
        return self.vectors[self.index[unit]]

    def editions(self) -> set[str]:
        return {_edition_prefix(u).decode("ascii", "replace") for u in self.units}

    def _normalized(self) -> np.ndarray:
        if self._normed is None:
            norms = np.linalg.norm(self.vectors, axis=1, keepdims=True)
            norms[norms == 0] = 1.0
            self._normed = self.vectors / norms
        return self._normed

    def _rows_for(self, edition: str) -> np.ndarray:
        key = edition.encode("ascii")
        rows = self._edition_rows.get(key)
        if rows is None:
            members = [(u, i) for i, u in enumerate(self.units)
                       if _edition_prefix(u) == key]
            members.sort()  # lexicographic, so stable sorts break ties by unit
            rows = np.asarray([i for _, i in members], dtype=np.int64)
            self._edition_rows[key] = rows
        return rows

    def nearest_neighbors(self, query: bytes, edition: str, k: int
                          ) -> list[tuple[bytes, float]]:
        """Top-k units of one edition by cosine, ties lexicographic."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if query not in self.index:
            raise KeyError(f"query unit not in vocabulary: {query!r}")
        rows = self._rows_for(edition)
        if rows.size == 0:
            return []
        normed = self._normalized()
        scores = normed[rows] @ normed[self.index[query]]
        order = np.argsort(-scores, kind="stable")[:k]
        return [(self.units[rows[i]], float(scores[i])) for i in order.tolist()]

    def save(self, path) -> None:
        with atomic_write(path) as fh:
            fh.write(f"{len(self.units)} {self.dim}\n".encode("ascii"))
            for unit, row in zip(self.units, self.vectors):
                values = b" ".join(f"{v:.9g}".encode("ascii") for v in row.tolist())
                fh.write(escape_unit(unit) + b" " + values + b"\n")


def load_space(path) -> EmbeddingSpace:
    with open(path, "rb") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise EmbedError(f"{path}: malformed header")
        count, dim = int(header[0]), int(header[1])
        if count == 0:
            raise EmptySpaceError(f"{path}: empty embedding space")
        units: list[bytes] = []
        vectors = np.empty((count, dim), dtype=np.float32)
        for i in range(count):
            line = fh.readline().rstrip(b"\n")
            if not line:
                raise EmbedError(f"{path}: truncated at row {i}")
            parts = line.split(b" ")
            if len(parts) != dim + 1:
                raise EmbedError(f"{path}: row {i} has {len(parts) - 1} values, "
                                 f"expected {dim}")
            units.append(unescape_unit(parts[0]))
            vectors[i] = [float(v) for v in parts[1:]]
    return EmbeddingSpace(units, vectors)


def save_space(space: EmbeddingSpace, path) -> None:
    space.save(path)


def iter_token_lines(path):
    """Token lines of a pseudocorpus file, unit escaping undone."""
    with open(path, "rb") as fh:
        for raw in fh:
            tokens = raw.split()
            if tokens:
                yield [unescape_unit(t) for t in tokens]


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def batch_loss_and_grads(v: np.ndarray, u: np.ndarray, nvecs: np.ndarray,
                         mask: np.ndarray):
    """Negative-sampling loss and gradients for gathered vectors.

    v: (P, d) center vectors; u: (P, d) context vectors; nvecs: (P, K, d)
    negative vectors; mask: (P, K) zeroing negatives that collide with the
    positive context. Loss is sum of -log s(v.u) - sum_k log s(-v.n_k).
    """
    pos_dot = np.einsum("pd,pd->p", v, u)
    neg_dot = np.einsum("pkd,pd->pk", nvecs, v)
    pos_s = _sigmoid(pos_dot)
    neg_s = _sigmoid(neg_dot) * mask
    eps = 1e-12
    loss = -(np.log(pos_s + eps).sum()
             + (np.log(1.0 - _sigmoid(neg_dot) + eps) * mask).sum())
    g_pos = pos_s - 1.0  # d loss / d pos_dot
    g_v = g_pos[:, None] * u + np.einsum("pk,pkd->pd", neg_s, nvecs)
    g_u = g_pos[:, None] * v
    g_n = neg_s[:, :, None] * v[:, None, :]
    return loss, g_v, g_u, g_n


class _NegativeSampler:
    """Unigram^(3/4) sampler over vocabulary indices."""

    def __init__(self, counts: np.ndarray):
        weights = np.power(counts.astype(np.float64), 0.75)
        self.cumulative = np.cumsum(weights)

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        points = rng.random(shape) * self.cumulative[-1]
        return np.searchsorted(self.cumulative, points).astype(np.int64)


@njit(cache=True, nogil=True)
def _sgd_kernel(w_in, w_out, centers, contexts, negatives, lr):  # pragma: no cover
    """Sequential SGD over one chunk of pairs, updating the matrices in place.

    Per pair: the positive context and each non-colliding negative update
    the output rows against the unchanged center row; the center row takes
    the accumulated update afterwards, as in the usual C implementation.
    Returns the summed loss.
    """
    n_pairs = centers.shape[0]
    n_neg = negatives.shape[1]
    dim = w_in.shape[1]
    delta = np.empty(dim, dtype=np.float32)
    loss = 0.0
    for p in range(n_pairs):
        c = centers[p]
        o = contexts[p]
        dot = 0.0
        for i in range(dim):
            dot += w_in[c, i] * w_out[o, i]
        if dot > 30.0:
            dot = 30.0
        elif dot < -30.0:
            dot = -30.0
        s = 1.0 / (1.0 + math.exp(-dot))
        loss += -math.log(s + 1e-12)
        g = lr * (1.0 - s)
        for i in range(dim):
            delta[i] = g * w_out[o, i]
            w_out[o, i] += g * w_in[c, i]
        for k in range(n_neg):
            nrow = negatives[p, k]
            if nrow == o:
                continue
            dot = 0.0
            for i in range(dim):
                dot += w_in[c, i] * w_out[nrow, i]
            if dot > 30.0:
                dot = 30.0
            elif dot < -30.0:
                dot = -30.0
            s = 1.0 / (1.0 + math.exp(-dot))
            loss += -math.log(1.0 - s + 1e-12)
            g = -lr * s
            for i in range(dim):
                delta[i] += g * w_out[nrow, i]
                w_out[nrow, i] += g * w_in[c, i]
        for i in range(dim):
            w_in[c, i] += delta[i]
    return loss


def build_vocab(lines, min_count: int) -> tuple[list[bytes], np.ndarray]:
    """Frequency-sorted vocabulary (ties lexicographic) and its counts."""
    counts: dict[bytes, int] = {}
    for line in lines:
        for tok in line:
            counts[tok] = counts.get(tok, 0) + 1
    kept = sorted(((c, u) for u, c in counts.items() if c >= min_count),
                  key=lambda x: (-x[0], x[1]))
    units = [u for _, u in kept]
    return units, np.asarray([c for c, _ in kept], dtype=np.int64)


class _Trainer:
    def __init__(self, units: list[bytes], counts: np.ndarray, config: TrainConfig,
                 total_tokens: int):
        self.config = config
        self.index = {u: i for i, u in enumerate(units)}
        rng = np.random.default_rng(config.seed)
        dim = config.dim
        self.w_in = ((rng.random((len(units), dim)) - 0.5) / dim).astype(np.float32)
        self.w_out = np.zeros((len(units), dim), dtype=np.float32)
        self.sampler = _NegativeSampler(counts)
        total = counts.sum()
        if config.subsample > 0:
            freq = counts / total
            ratio = config.subsample / freq
            self.keep_prob = np.minimum(1.0, np.sqrt(ratio) + ratio)
        else:
            self.keep_prob = None
        self.planned = max(1, config.epochs * total_tokens)
        self.processed = 0
        self.processed_lock = threading.Lock()

    def learning_rate(self) -> float:
        lr0 = self.config.learning_rate
        frac = max(self.config.min_lr_fraction, 1.0 - self.processed / self.planned)
        return lr0 * frac

    def _flush(self, centers: list[int], contexts: list[int],
               rng: np.random.Generator, lr: float) -> float:
        c = np.asarray(centers, dtype=np.int64)
        o = np.asarray(contexts, dtype=np.int64)
        neg = self.sampler.draw(rng, (len(c), self.config.negatives))
        if HAVE_NUMBA:
            return float(_sgd_kernel(self.w_in, self.w_out, c, o, neg,
                                     np.float32(lr)))
        # fallback: batched updates with stale in-batch reads
        mask = (neg != o[:, None]).astype(np.float32)
        v = self.w_in[c]
        u = self.w_out[o]
        nvecs = self.w_out[neg]
        loss, g_v, g_u, g_n = batch_loss_and_grads(v, u, nvecs, mask)
        np.add.at(self.w_in, c, (-lr * g_v).astype(np.float32))
        np.add.at(self.w_out, o, (-lr * g_u).astype(np.float32))
        np.add.at(self.w_out, neg.reshape(-1),
                  (-lr * g_n).reshape(-1, self.config.dim).astype(np.float32))
        return float(loss)

    def run_epoch(self, lines, rng: np.random.Generator) -> tuple[float, int]:
        """One pass over the lines; returns (total loss, pair count)."""
        cfg = self.config
        centers: list[int] = []
        contexts: list[int] = []
        loss = 0.0
        pairs = 0

        def flush() -> None:
            nonlocal loss, pairs
            if centers:
                loss += self._flush(centers, contexts, rng, self.learning_rate())
                pairs += len(centers)
                centers.clear()
                contexts.clear()

        for line in lines:
            ids = [self.index[t] for t in line if t in self.index]
            with self.processed_lock:
                self.processed += len(ids)
            if self.keep_prob is not None and ids:
                keep = rng.random(len(ids)) < self.keep_prob[ids]
                ids = [i for i, k in zip(ids, keep.tolist()) if k]
            n = len(ids)
            if n < 2:
                continue
            spans = rng.integers(1, cfg.window + 1, size=n)
            for pos in range(n):
                b = int(spans[pos])
                for ctx in range(max(0, pos - b), min(n, pos + b + 1)):
                    if ctx != pos:
                        centers.append(ids[pos])
                        contexts.append(ids[ctx])
            if len(centers) >= _BATCH_PAIRS:
                flush()
        flush()
        return loss, pairs


def train_sgns(source, config: TrainConfig) -> EmbeddingSpace:
    """Train an embedding space from a pseudocorpus.

    ``source`` is a pseudocorpus path or an in-memory list of token lines.
    Reproducible given the seed when ``workers == 1``; more workers update
    the shared matrices without synchronization (benign races), so exact
    reproducibility then no longer holds.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        make_lines = lambda: iter_token_lines(source)  # noqa: E731
    else:
        lines_list = list(source)
        make_lines = lambda: lines_list  # noqa: E731

    units, counts = build_vocab(make_lines(), config.min_count)
    if not units:
        raise EmptySpaceError("no units survive the min_count filter")
    total_tokens = int(counts.sum())
    trainer = _Trainer(units, counts, config, total_tokens)

    losses: list[float] = []
    for epoch in range(config.epochs):
        if config.workers == 1:
            rng = np.random.default_rng((config.seed, epoch))
            loss, pairs = trainer.run_epoch(make_lines(), rng)
        else:
            loss, pairs = _parallel_epoch(trainer, make_lines(), config, epoch)
        losses.append(loss / max(1, pairs))
        log.debug("epoch %d: %.4f mean pair loss over %d pairs",
                  epoch + 1, losses[-1], pairs)

    space = EmbeddingSpace(units, trainer.w_in.copy(), epoch_losses=losses)
    return space


def _parallel_epoch(trainer: _Trainer, lines, config: TrainConfig, epoch: int
                    ) -> tuple[float, int]:
    """Shard lines round-robin across threads with unsynchronized updates."""
    shards: list[list[list[bytes]]] = [[] for _ in range(config.workers)]
    for i, line in enumerate(lines):
        shards[i % config.workers].append(line)
    results: list[tuple[float, int]] = [(0.0, 0)] * config.workers

    def work(w: int) -> None:
        rng = np.random.default_rng((config.seed, epoch, w))
        results[w] = trainer.run_epoch(shards[w], rng)

    threads = [threading.Thread(target=work, args=(w,)) for w in range(config.workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return sum(r[0] for r in results), sum(r[1] for r in results)


def finite_difference_check(vocab_size: int = 5, dim: int = 8, negatives: int = 3,
                            n_pairs: int = 4, seed: int = 0,
                            tolerance: float = 1e-4, corrupt: bool = False,
                            zero_vectors: bool = False) -> tuple[bool, float]:
    """Compare analytic negative-sampling gradients to central differences.

    Returns (within tolerance, max relative error). ``corrupt`` flips the
    analytic center gradient as a negative control; ``zero_vectors`` checks
    the s(0) case.
    """
    if vocab_size > 20:
        raise ValueError("gradient check is meant for small vocabularies")
    rng = np.random.default_rng(seed)
    if zero_vectors:
        w_in = np.zeros((vocab_size, dim))
        w_out = np.zeros((vocab_size, dim))
    else:
        w_in = rng.normal(scale=0.5, size=(vocab_size, dim))
        w_out = rng.normal(scale=0.5, size=(vocab_size, dim))
    c = rng.integers(0, vocab_size, size=n_pairs)
    o = rng.integers(0, vocab_size, size=n_pairs)
    neg = rng.integers(0, vocab_size, size=(n_pairs, negatives))
    mask = (neg != o[:, None]).astype(np.float64)

    def loss_of(w_in_x: np.ndarray, w_out_x: np.ndarray) -> float:
        loss, _, _, _ = batch_loss_and_grads(w_in_x[c], w_out_x[o], w_out_x[neg], mask)
        return float(loss)

    _, g_v, g_u, g_n = batch_loss_and_grads(w_in[c], w_out[o], w_out[neg], mask)
    grad_in = np.zeros_like(w_in)
    grad_out = np.zeros_like(w_out)
    np.add.at(grad_in, c, g_v)
    np.add.at(grad_out, o, g_u)
    np.add.at(grad_out, neg.reshape(-1), g_n.reshape(-1, dim))
    if corrupt:
        grad_in = -grad_in

    h = 1e-6
    max_err = 0.0
    for mat, grad in ((w_in, grad_in), (w_out, grad_out)):
        it = np.nditer(mat, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = mat[idx]
            mat[idx] = orig + h
            up = loss_of(w_in, w_out)
            mat[idx] = orig - h
            down = loss_of(w_in, w_out)
            mat[idx] = orig
            numeric = (up - down) / (2 * h)
            denom = max(abs(grad[idx]), abs(numeric), 1e-6)
            max_err = max(max_err, abs(grad[idx] - numeric) / denom)
            it.iternext()
    return max_err < tolerance, max_err
