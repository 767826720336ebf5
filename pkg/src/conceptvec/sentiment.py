"""Verse-level sentiment classification over IDF-weighted embedding sums.

Two binary tasks (positive vs non-positive, negative vs non-negative) are
trained on the labeled training verses of one designated edition and applied
to the test verses of every edition; labels attach to verse IDs, so the
aligned verses of all editions share them. The classifier is a linear SVM
trained by stochastic subgradient descent on the hinge loss.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass

import numpy as np

from .corpus import ParallelCorpus
from .embed import EmbeddingSpace

log = logging.getLogger(__name__)

POS = "pos"
NEG = "neg"


class SentimentError(Exception):
    pass


def idf_table(corpus: ParallelCorpus, train_ids) -> dict[bytes, float]:
    """ln(N / df) per unit, document frequencies over the training verses."""
    n = len(train_ids)
    df: dict[bytes, int] = {}
    for eid in sorted(corpus.editions):
        ed = corpus.editions[eid]
        for vid in train_ids:
            if vid not in ed.verses:
                continue
            for u in set(ed.unit_ids(vid)):
                df[u] = df.get(u, 0) + 1
    return {u: math.log(n / c) for u, c in df.items()}


def verse_vector(space: EmbeddingSpace, units, idf: dict[bytes, float]) -> np.ndarray:
    """IDF-weighted sum of the in-vocabulary unit embeddings."""
    vec = np.zeros(space.dim, dtype=np.float64)
    for u in units:
        if u in space:
            vec += idf.get(u, 0.0) * space.vector(u)
    return vec


@dataclass
class LinearClassifier:
    weights: np.ndarray
    bias: float

    def decision(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weights + self.bias

    def predict(self, x: np.ndarray) -> np.ndarray:
        return (self.decision(x) >= 0).astype(np.int64)


def train_linear_svm(x: np.ndarray, y: np.ndarray, *, reg_lambda: float = 1e-3,
                     epochs: int = 20, seed: int = 0,
                     use_bias: bool = True) -> LinearClassifier:
    """Hinge-loss SVM via the projected stochastic subgradient method.

    y holds 0/1 labels; both classes must be present. The bias rides along
    as an appended constant feature (regularized with the rest); disable it
    for exact scale-equivariance of the learned weights.
    """
    y = np.asarray(y)
    if set(np.unique(y).tolist()) != {0, 1}:
        raise SentimentError("training data must contain both classes")
    signs = np.where(y == 1, 1.0, -1.0)
    if use_bias:
        xb = np.hstack([x, np.ones((x.shape[0], 1))])
    else:
        xb = np.hstack([x, np.zeros((x.shape[0], 1))])
    w = np.zeros(xb.shape[1])
    rng = random.Random(seed)
    order = list(range(xb.shape[0]))
    t = 0
    for _ in range(epochs):
        rng.shuffle(order)
        for i in order:
            t += 1
            eta = 1.0 / (reg_lambda * t)
            margin = signs[i] * (xb[i] @ w)
            w *= 1.0 - eta * reg_lambda
            if margin < 1.0:
                w += eta * signs[i] * xb[i]
            # projection onto the ball where the optimum must lie
            norm = np.linalg.norm(w)
            radius = 1.0 / math.sqrt(reg_lambda)
            if norm > radius:
                w *= radius / norm
    return LinearClassifier(weights=w[:-1].copy(), bias=float(w[-1]))


def f1_score(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """F1 of the positive class; 0 when there are no true or predicted
    positives."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    tp = int(((y_true == 1) & (y_pred == 1)).sum())
    fp = int(((y_true == 0) & (y_pred == 1)).sum())
    fn = int(((y_true == 1) & (y_pred == 0)).sum())
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def load_sentiment_labels(path) -> dict[str, tuple[str, str]]:
    """TSV rows ``verse_id<TAB>pos|nonpos<TAB>neg|nonneg``."""
    labels: dict[str, tuple[str, str]] = {}
    with open(path, "rb") as fh:
        for raw in fh:
            line = raw.rstrip(b"\n")
            if not line:
                continue
            vid, pos_label, neg_label = line.decode("ascii").split("\t")
            if pos_label not in ("pos", "nonpos") or neg_label not in ("neg", "nonneg"):
                raise SentimentError(f"bad sentiment labels for verse {vid}")
            labels[vid] = (pos_label, neg_label)
    return labels


def _task_labels(labels: dict[str, tuple[str, str]], task: str, vid: str) -> int | None:
    entry = labels.get(vid)
    if entry is None:
        return None
    if task == POS:
        return 1 if entry[0] == "pos" else 0
    return 1 if entry[1] == "neg" else 0


def evaluate_sentiment(space: EmbeddingSpace, corpus: ParallelCorpus,
                       labels: dict[str, tuple[str, str]], train_edition: str,
                       *, reg_lambda: float = 1e-3, epochs: int = 20,
                       seed: int = 0) -> dict[str, float]:
    """Train both binary tasks on one edition, test pooled over all editions.

    Returns F1 per task. Verses whose vector is all-zero (every unit out of
    vocabulary) still participate; their count is logged.
    """
    idf = idf_table(corpus, corpus.train_ids)
    train_ed = corpus.editions[train_edition]

    def vectors_for(edition, verse_ids) -> tuple[np.ndarray, list[str]]:
        vecs = []
        vids = []
        for vid in sorted(verse_ids):
            if vid not in edition.verses or vid not in labels:
                continue
            vecs.append(verse_vector(space, edition.unit_ids(vid), idf))
            vids.append(vid)
        if not vecs:
            return np.zeros((0, space.dim)), []
        return np.vstack(vecs), vids

    x_train, train_vids = vectors_for(train_ed, corpus.train_ids)
    if not train_vids:
        raise SentimentError("no labeled training verses in the training edition")
    empty = int((np.abs(x_train).sum(axis=1) == 0).sum())
    if empty:
        log.info("%d training verses have no in-vocabulary units", empty)

    results: dict[str, float] = {}
    for task in (POS, NEG):
        y_train = np.asarray([_task_labels(labels, task, v) for v in train_vids])
        model = train_linear_svm(x_train, y_train, reg_lambda=reg_lambda,
                                 epochs=epochs, seed=seed)
        truths: list[int] = []
        preds: list[int] = []
        for eid in sorted(corpus.editions):
            x_test, test_vids = vectors_for(corpus.editions[eid], corpus.test_ids)
            if not test_vids:
                continue
            y = [_task_labels(labels, task, v) for v in test_vids]
            p = model.predict(x_test)
            truths.extend(y)
            preds.extend(p.tolist())
        results[task] = f1_score(np.asarray(truths), np.asarray(preds))
    return results
