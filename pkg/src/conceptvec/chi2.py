"""Greedy chi-square dictionary induction for WORD-pivot / CHAR-target pairs.

At every step the active edge with the highest chi-square score for verse
cooccurrence is selected, subject to a frequency band that sweeps from low
to high frequencies and a per-pass degree cap. A selected target n-gram is
extended left/right while the extension also clears the score threshold,
and the whole extended set is removed from the active edges.

Scores never change once computed (frequencies are static), so selection
uses one max-heap per pass with lazy deletion; this is semantically
identical to a brute-force scan over eligible edges.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .corpus import Edition, unit_id

DEFAULT_CHI_MIN = 100.0
DEFAULT_D_MAX = 5
_MAX_EXTENSION_STEPS = 64


class Chi2Error(Exception):
    pass


def chi_square(c_st: int, f_s: int, f_t: int, n: int) -> float:
    """2x2 contingency chi-square over verse-level presence.

    Cells are (c, f_s - c, f_t - c, n - f_s - f_t + c); degenerate marginals
    (0 or n) score 0.
    """
    if not (0 <= c_st <= min(f_s, f_t) and max(f_s, f_t) <= n):
        raise Chi2Error(
            f"inconsistent contingency counts c={c_st} f_s={f_s} f_t={f_t} n={n}")
    if f_s == 0 or f_t == 0 or f_s == n or f_t == n:
        return 0.0
    diff = c_st * (n - f_s - f_t + c_st) - (f_s - c_st) * (f_t - c_st)
    return n * diff * diff / (f_s * f_t * (n - f_s) * (n - f_t))


def f_min_for(f_max: int) -> float:
    """Lower frequency bound for a sweep position: max(min(5, f_max), f_max/10)."""
    return max(min(5, f_max), f_max / 10)


def selection_schedule(n_verses: int, d_max: int):
    """(degree pass, f_max) pairs in selection order: low frequencies first."""
    for d in range(1, d_max + 1):
        for f_max in range(2, n_verses + 1):
            yield d, f_max


@dataclass
class PairCooccurrence:
    """Verse-presence statistics for one pivot/target edition pair."""

    edition_s: str
    edition_t: str
    n_verses: int
    freq_s: dict[bytes, int]
    freq_t: dict[bytes, int]
    cooc: dict[tuple[bytes, bytes], int]

    @classmethod
    def from_editions(cls, ed_s: Edition, ed_t: Edition, verse_ids) -> "PairCooccurrence":
        freq_s: dict[bytes, int] = {}
        freq_t: dict[bytes, int] = {}
        cooc: dict[tuple[bytes, bytes], int] = {}
        n = 0
        for vid in sorted(verse_ids):
            us = set(ed_s.units(vid))
            ut = set(ed_t.units(vid))
            if not us or not ut:
                continue
            n += 1
            for s in us:
                freq_s[s] = freq_s.get(s, 0) + 1
            for t in ut:
                freq_t[t] = freq_t.get(t, 0) + 1
            for s in us:
                for t in ut:
                    key = (s, t)
                    cooc[key] = cooc.get(key, 0) + 1
        return cls(ed_s.edition_id, ed_t.edition_id, n, freq_s, freq_t, cooc)

    def score(self, s: bytes, t: bytes) -> float:
        return chi_square(self.cooc.get((s, t), 0), self.freq_s.get(s, 0),
                          self.freq_t.get(t, 0), self.n_verses)


@dataclass
class SelectionStep:
    """One greedy pick, kept for oracle replay in tests."""

    degree_pass: int
    f_max: int
    source: bytes
    target: bytes
    score: float
    extended: list[tuple[bytes, float]]


@dataclass
class Chi2Dictionary:
    edition_s: str
    edition_t: str
    entries: list[tuple[bytes, list[tuple[bytes, float]]]] = field(default_factory=list)
    trace: list[SelectionStep] = field(default_factory=list)

    def edges(self):
        for s, targets in self.entries:
            for t, score in targets:
                yield s, t, score

    def rows(self):
        """Prefixed-unit TSV rows (source, target, score)."""
        return [
            (unit_id(self.edition_s, s), unit_id(self.edition_t, t), score)
            for s, t, score in self.edges()
        ]


def _extend_ngram(index: PairCooccurrence, adjacency: dict[bytes, list[bytes]],
                  active: set[tuple[bytes, bytes]], degrees: dict[bytes, int],
                  s: bytes, t: bytes, f_min: float, f_max: int, d: int,
                  chi_min: float) -> list[tuple[bytes, float]]:
    """Grow the target n-gram left and right one byte at a time.

    A candidate must be an active in-band edge of the same source whose
    surface overlaps the current frontier by n-1 bytes, clear the score
    threshold and respect the degree cap. Among the candidates the highest
    score wins (ties lexicographic).
    """
    n = len(t)
    members: list[tuple[bytes, float]] = [(t, index.score(s, t))]
    seen = {t}

    def eligible(u: bytes) -> bool:
        if u in seen or (s, u) not in active:
            return False
        f_u = index.freq_t.get(u, 0)
        if not (f_min <= f_u <= f_max) or degrees.get(u, 0) >= d:
            return False
        return True

    for direction in ("right", "left"):
        frontier = t
        for _ in range(_MAX_EXTENSION_STEPS):
            if direction == "right":
                overlap = frontier[1:]
                cands = [u for u in adjacency[s] if eligible(u) and u[: n - 1] == overlap]
            else:
                overlap = frontier[: n - 1]
                cands = [u for u in adjacency[s] if eligible(u) and u[1:] == overlap]
            scored = [(index.score(s, u), u) for u in cands]
            scored = [(sc, u) for sc, u in scored if sc >= chi_min]
            if not scored:
                break
            best_score, best = min(scored, key=lambda x: (-x[0], x[1]))
            members.append((best, best_score))
            seen.add(best)
            frontier = best
    return members


def induce_chi2_dictionary(index: PairCooccurrence, chi_min: float = DEFAULT_CHI_MIN,
                           d_max: int = DEFAULT_D_MAX) -> Chi2Dictionary:
    """Run the full greedy induction over an edition pair's statistics."""
    n = index.n_verses
    result = Chi2Dictionary(index.edition_s, index.edition_t)
    if n == 0 or not index.cooc:
        return result

    pairs = sorted(index.cooc)
    c = np.fromiter((index.cooc[k] for k in pairs), dtype=np.float64, count=len(pairs))
    fs = np.fromiter((index.freq_s[k[0]] for k in pairs), dtype=np.float64, count=len(pairs))
    ft = np.fromiter((index.freq_t[k[1]] for k in pairs), dtype=np.float64, count=len(pairs))
    diff = c * (n - fs - ft + c) - (fs - c) * (ft - c)
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = n * diff * diff / (fs * ft * (n - fs) * (n - ft))
    scores = np.where((fs == 0) | (ft == 0) | (fs == n) | (ft == n), 0.0, scores)

    # heap items sorted by: max score, then lower f_s, lower f_t, lexicographic
    items = {}
    buckets: dict[int, list[tuple]] = {}
    for idx, (s, t) in enumerate(pairs):
        item = (-scores[idx], int(fs[idx]), int(ft[idx]), s, t)
        items[(s, t)] = item
        entry = max(2, int(fs[idx]), int(ft[idx]))
        buckets.setdefault(entry, []).append(item)

    adjacency: dict[bytes, list[bytes]] = {}
    for s, t in pairs:
        adjacency.setdefault(s, []).append(t)

    active = set(pairs)
    degrees: dict[bytes, int] = {}

    for d in range(1, d_max + 1):
        heap: list[tuple] = []
        f_max = 2
        while f_max <= n:
            f_min = f_min_for(f_max)
            for item in buckets.get(f_max, ()):
                if (item[3], item[4]) in active:
                    heapq.heappush(heap, item)
            # drop edges that can never be selected again this pass
            while heap:
                neg_score, e_fs, e_ft, s, t = heap[0]
                if (s, t) not in active:
                    heapq.heappop(heap)
                    continue
                if min(e_fs, e_ft) < f_min:  # f_min only grows within a pass
                    heapq.heappop(heap)
                    continue
                if degrees.get(s, 0) >= d or degrees.get(t, 0) >= d:
                    heapq.heappop(heap)  # degrees only grow within a pass
                    continue
                break
            if not heap or -heap[0][0] < chi_min:
                f_max += 1
                continue
            neg_score, e_fs, e_ft, s, t = heapq.heappop(heap)
            members = _extend_ngram(index, adjacency, active, degrees, s, t,
                                    f_min, f_max, d, chi_min)
            result.entries.append((s, members))
            result.trace.append(SelectionStep(d, f_max, s, t, -neg_score,
                                              members[1:]))
            for u, _ in members:
                active.discard((s, u))
            degrees[s] = degrees.get(s, 0) + 1
            degrees[t] = degrees.get(t, 0) + 1
    return result


def induce_pair(ed_s: Edition, ed_t: Edition, verse_ids,
                chi_min: float = DEFAULT_CHI_MIN, d_max: int = DEFAULT_D_MAX
                ) -> Chi2Dictionary:
    index = PairCooccurrence.from_editions(ed_s, ed_t, verse_ids)
    return induce_chi2_dictionary(index, chi_min=chi_min, d_max=d_max)
