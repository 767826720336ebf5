"""Alignment-based dictionary induction for WORD-mode edition pairs.

Lexical translation probabilities are estimated with IBM Model 1 EM over
the shared verses of a pair, decoded to directional argmax alignments, and
symmetrized with grow-diag-final-and. Link pairs seen at least ``min_count``
times across the training verses become dictionary edges.

The E-step is vectorized: verse/source-type/target-type triples are compiled
once into flat index arrays and every iteration is a handful of gather /
scatter-add operations, so EM cost is independent of vocabulary size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import Edition, unit_id

NULL = b"\x00NULL"  # virtual empty-word source; never emitted as an edge

VersePairs = list[tuple[str, list[bytes], list[bytes]]]


class AlignmentError(Exception):
    pass


def build_verse_pairs(ed_a: Edition, ed_b: Edition, verse_ids) -> VersePairs:
    """Tokenized verse pairs for verses present and non-empty in both editions."""
    pairs: VersePairs = []
    for vid in sorted(verse_ids):
        ta = ed_a.units(vid)
        tb = ed_b.units(vid)
        if ta and tb:
            pairs.append((vid, ta, tb))
    return pairs


@dataclass
class TranslationTable:
    """Sparse lexical translation probabilities p(target | source)."""

    probs: dict[bytes, dict[bytes, float]] = field(default_factory=dict)

    def prob(self, source: bytes, target: bytes) -> float:
        return self.probs.get(source, {}).get(target, 0.0)

    def best(self, source: bytes) -> tuple[bytes, float] | None:
        row = self.probs.get(source)
        if not row:
            return None
        # max probability, ties to the lexicographically smallest target
        return min(row.items(), key=lambda kv: (-kv[1], kv[0]))

    def row_sums(self) -> dict[bytes, float]:
        return {s: sum(row.values()) for s, row in self.probs.items()}


class _PairData:
    """Flat index arrays for one translation direction of a verse-pair list.

    Duplicate tokens are collapsed to (type, multiplicity); triples are one
    entry per (verse, source type, target type). Groups index (verse, target
    type) and carry the denominators. The NULL source is appended per verse
    with a sentinel position after all real positions, so argmax ties prefer
    real words and earlier positions.
    """

    def __init__(self, pairs: VersePairs, reverse: bool = False):
        self.reverse = reverse
        src_vocab: dict[bytes, int] = {}
        tgt_vocab: dict[bytes, int] = {}
        pair_index: dict[tuple[int, int], int] = {}
        trip_pair: list[int] = []
        trip_group: list[int] = []
        trip_ms: list[float] = []
        trip_pos: list[int] = []
        group_mt: list[float] = []
        group_verse: list[int] = []
        group_tgt: list[int] = []
        ll_const = 0.0

        for verse_idx, (_, tok_a, tok_b) in enumerate(pairs):
            src, tgt = (tok_b, tok_a) if reverse else (tok_a, tok_b)
            src_types: dict[int, tuple[int, int]] = {}  # id -> (count, first pos)
            for pos, tok in enumerate(src):
                sid = src_vocab.setdefault(tok, len(src_vocab))
                cnt, first = src_types.get(sid, (0, pos))
                src_types[sid] = (cnt + 1, first)
            null_id = src_vocab.setdefault(NULL, len(src_vocab))
            src_types[null_id] = (1, len(src))
            tgt_types: dict[int, int] = {}
            for tok in tgt:
                tid = tgt_vocab.setdefault(tok, len(tgt_vocab))
                tgt_types[tid] = tgt_types.get(tid, 0) + 1
            ll_const += len(tgt) * math.log(len(src) + 1)

            for tid, mt in tgt_types.items():
                gid = len(group_mt)
                group_mt.append(float(mt))
                group_verse.append(verse_idx)
                group_tgt.append(tid)
                for sid, (ms, first) in src_types.items():
                    pid = pair_index.setdefault((sid, tid), len(pair_index))
                    trip_pair.append(pid)
                    trip_group.append(gid)
                    trip_ms.append(float(ms))
                    trip_pos.append(first)

        self.src_vocab = src_vocab
        self.tgt_vocab = tgt_vocab
        self.src_surface = [b"" for _ in src_vocab]
        for tok, sid in src_vocab.items():
            self.src_surface[sid] = tok
        self.tgt_surface = [b"" for _ in tgt_vocab]
        for tok, tid in tgt_vocab.items():
            self.tgt_surface[tid] = tok
        self.pair_src = np.fromiter((k[0] for k in pair_index), dtype=np.int64,
                                    count=len(pair_index))
        self.pair_tgt = np.fromiter((k[1] for k in pair_index), dtype=np.int64,
                                    count=len(pair_index))
        self.trip_pair = np.asarray(trip_pair, dtype=np.int64)
        self.trip_group = np.asarray(trip_group, dtype=np.int64)
        self.trip_ms = np.asarray(trip_ms, dtype=np.float64)
        self.trip_pos = np.asarray(trip_pos, dtype=np.int64)
        self.group_mt = np.asarray(group_mt, dtype=np.float64)
        self.group_verse = np.asarray(group_verse, dtype=np.int64)
        self.group_tgt = np.asarray(group_tgt, dtype=np.int64)
        self.null_id = src_vocab[NULL]
        self.ll_const = ll_const

    def uniform_init(self) -> np.ndarray:
        fanout = np.bincount(self.pair_src, minlength=len(self.src_vocab))
        return 1.0 / fanout[self.pair_src].astype(np.float64)

    def em(self, iterations: int) -> tuple[np.ndarray, list[float]]:
        prob = self.uniform_init()
        n_groups = len(self.group_mt)
        n_pairs = len(self.pair_src)
        history = []
        for _ in range(iterations):
            pt = prob[self.trip_pair] * self.trip_ms
            denom = np.zeros(n_groups)
            np.add.at(denom, self.trip_group, pt)
            history.append(float((self.group_mt * np.log(denom)).sum() - self.ll_const))
            w = pt / denom[self.trip_group] * self.group_mt[self.trip_group]
            cnt = np.zeros(n_pairs)
            np.add.at(cnt, self.trip_pair, w)
            tot = np.bincount(self.pair_src, weights=cnt, minlength=len(self.src_vocab))
            prob = cnt / tot[self.pair_src]
        return prob, history

    def decode(self, prob: np.ndarray, pairs: VersePairs) -> list[set[tuple[int, int]]]:
        """Argmax alignment per target position; NULL links dropped.

        Ties go to the earliest source position (NULL sits past the end, so
        real words always beat NULL on ties).
        """
        pt = prob[self.trip_pair]
        gmax = np.zeros(len(self.group_mt))
        np.maximum.at(gmax, self.trip_group, pt)
        at_max = pt == gmax[self.trip_group]
        best_pos = np.full(len(self.group_mt), np.iinfo(np.int64).max, dtype=np.int64)
        np.minimum.at(best_pos, self.trip_group[at_max], self.trip_pos[at_max])
        winner = at_max & (self.trip_pos == best_pos[self.trip_group])

        # target-type positions per verse, resolved lazily
        links: list[set[tuple[int, int]]] = [set() for _ in pairs]
        win_groups = self.trip_group[winner]
        win_pos = self.trip_pos[winner]
        for gid, src_pos in zip(win_groups.tolist(), win_pos.tolist()):
            verse_idx = int(self.group_verse[gid])
            tid = int(self.group_tgt[gid])
            surface = self.tgt_surface[tid]
            _, tok_a, tok_b = pairs[verse_idx]
            src, tgt = (tok_b, tok_a) if self.reverse else (tok_a, tok_b)
            if src_pos >= len(src):  # NULL
                continue
            for j, tok in enumerate(tgt):
                if tok == surface:
                    link = (src_pos, j) if not self.reverse else (j, src_pos)
                    links[verse_idx].add(link)
        return links

    def table(self, prob: np.ndarray) -> TranslationTable:
        probs: dict[bytes, dict[bytes, float]] = {}
        src = self.pair_src.tolist()
        tgt = self.pair_tgt.tolist()
        for pid, p in enumerate(prob.tolist()):
            s = self.src_surface[src[pid]]
            t = self.tgt_surface[tgt[pid]]
            probs.setdefault(s, {})[t] = p
        return TranslationTable(probs)


def train_ibm1(pairs: VersePairs, iterations: int = 5, reverse: bool = False
               ) -> tuple[TranslationTable, list[float]]:
    """EM-trained translation table for one direction plus the per-iteration
    corpus log-likelihood (evaluated before each update, so it must be
    non-decreasing)."""
    if not pairs:
        raise AlignmentError("no shared verses to train on")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    data = _PairData(pairs, reverse=reverse)
    prob, history = data.em(iterations)
    return data.table(prob), history


def train_translation_model(pairs: VersePairs, iterations: int = 5
                            ) -> tuple[TranslationTable, TranslationTable]:
    """Both directions: forward p(b-token | a-token), reverse p(a | b)."""
    fwd, _ = train_ibm1(pairs, iterations, reverse=False)
    rev, _ = train_ibm1(pairs, iterations, reverse=True)
    return fwd, rev


def viterbi_links(tok_a: list[bytes], tok_b: list[bytes],
                  table: TranslationTable, reverse: bool = False
                  ) -> set[tuple[int, int]]:
    """Per-token argmax alignment from explicit tables (dict path).

    Used for single verses and tests; the pipeline decodes from the compiled
    arrays instead. Returns links as (a-position, b-position).
    """
    src, tgt = (tok_b, tok_a) if reverse else (tok_a, tok_b)
    links: set[tuple[int, int]] = set()
    rows = [table.probs.get(s, {}) for s in src]
    for j, t in enumerate(tgt):
        best_p = 0.0
        best_i = None
        for i, row in enumerate(rows):
            p = row.get(t, 0.0)
            if p > best_p:
                best_p = p
                best_i = i
        null_p = table.prob(NULL, t)
        if best_i is None or null_p > best_p:
            continue
        links.add((best_i, j) if not reverse else (j, best_i))
    return links


_NEIGHBORS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def grow_diag_final_and(fwd: set[tuple[int, int]], rev: set[tuple[int, int]]
                        ) -> set[tuple[int, int]]:
    """Symmetrize directional links: intersection, grow diagonal neighbors
    from the union while both endpoints are unaligned, then a final pass
    adding union links whose endpoints are both still unaligned."""
    union = fwd | rev
    links = fwd & rev
    aligned_a = {i for i, _ in links}
    aligned_b = {j for _, j in links}

    grew = True
    while grew:
        grew = False
        for i, j in sorted(links):
            for di, dj in _NEIGHBORS:
                cand = (i + di, j + dj)
                if cand in union and cand[0] not in aligned_a and cand[1] not in aligned_b:
                    links.add(cand)
                    aligned_a.add(cand[0])
                    aligned_b.add(cand[1])
                    grew = True

    for i, j in sorted(union):
        if i not in aligned_a and j not in aligned_b:
            links.add((i, j))
            aligned_a.add(i)
            aligned_b.add(j)
    return links


def align_and_symmetrize(pairs: VersePairs, fwd: TranslationTable,
                         rev: TranslationTable) -> list[set[tuple[int, int]]]:
    """Symmetrized per-verse link sets from the two directional tables."""
    out = []
    for _, tok_a, tok_b in pairs:
        f = viterbi_links(tok_a, tok_b, fwd, reverse=False)
        r = viterbi_links(tok_a, tok_b, rev, reverse=True)
        out.append(grow_diag_final_and(f, r))
    return out


@dataclass
class AlignmentEdgeSet:
    """Dictionary edges between two editions with verse-level link counts."""

    edition_a: str
    edition_b: str
    counts: dict[tuple[bytes, bytes], int] = field(default_factory=dict)

    def rows(self):
        return [(a, b, c) for (a, b), c in self.counts.items()]


def build_alignment_dictionary(ed_a: Edition, ed_b: Edition, pairs: VersePairs,
                               links: list[set[tuple[int, int]]],
                               min_count: int = 2) -> AlignmentEdgeSet:
    """Keep link surface pairs that occurred at least ``min_count`` times."""
    counts: dict[tuple[bytes, bytes], int] = {}
    for (_, tok_a, tok_b), verse_links in zip(pairs, links):
        for i, j in verse_links:
            key = (unit_id(ed_a.edition_id, tok_a[i]), unit_id(ed_b.edition_id, tok_b[j]))
            counts[key] = counts.get(key, 0) + 1
    kept = {k: c for k, c in counts.items() if c >= min_count}
    return AlignmentEdgeSet(ed_a.edition_id, ed_b.edition_id, kept)


def induce_alignment_dictionary(ed_a: Edition, ed_b: Edition, verse_ids,
                                iterations: int = 5, min_count: int = 2
                                ) -> AlignmentEdgeSet:
    """Full per-pair pipeline: EM both directions, decode, GDFA, threshold.

    The EM-internal compiled arrays are reused for decoding, which is much
    faster than the dict-table path on whole corpora.
    """
    pairs = build_verse_pairs(ed_a, ed_b, verse_ids)
    if not pairs:
        raise AlignmentError(
            f"no shared verses between {ed_a.edition_id} and {ed_b.edition_id}")
    data_f = _PairData(pairs, reverse=False)
    prob_f, _ = data_f.em(iterations)
    data_r = _PairData(pairs, reverse=True)
    prob_r, _ = data_r.em(iterations)
    fwd_links = data_f.decode(prob_f, pairs)
    rev_links = data_r.decode(prob_r, pairs)
    links = [grow_diag_final_and(f, r) for f, r in zip(fwd_links, rev_links)]
    return build_alignment_dictionary(ed_a, ed_b, pairs, links, min_count)
