"""Turn concepts (or the baselines) into training text for the embedding
learner.

Concept corpora write each concept's unit set as shuffled space-separated
lines, replicated with a global multiplication factor until the requested
corpus size is reached. The verse-ID baseline writes each (verse, unit) pair
exactly once; the bag-of-words baseline writes each verse once per (pivot
pair, target edition) combination and may exceed the size target by a
bounded factor.

Units are escaped on output (see tsvio) so n-grams containing the pad space
survive whitespace tokenization.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from itertools import combinations

from .corpus import ParallelCorpus
from .tsvio import escape_unit

log = logging.getLogger(__name__)

SID = "S-ID"
BOW = "BOW"


@dataclass
class CorpusSpec:
    target_size: int = 50 * 1024 * 1024  # desk-scale default (full runs used ~1000x)
    max_line_units: int = 1000
    shuffle_seed: int = 0
    hapax_filter: bool = True
    bow_factor: int = 10  # BOW may exceed target_size by up to this factor

    def __post_init__(self) -> None:
        if self.target_size <= 0:
            raise ValueError("target_size must be positive")
        if self.max_line_units < 2:
            raise ValueError("max_line_units must be >= 2")


def unit_frequencies(corpus: ParallelCorpus, verse_ids) -> dict[bytes, int]:
    """Token counts of prefixed units over the given verses."""
    freqs: dict[bytes, int] = {}
    for eid in sorted(corpus.editions):
        ed = corpus.editions[eid]
        for vid in verse_ids:
            for u in ed.unit_ids(vid):
                freqs[u] = freqs.get(u, 0) + 1
    return freqs


def hapax_units(freqs: dict[bytes, int]) -> set[bytes]:
    return {u for u, c in freqs.items() if c == 1}


def apply_hapax_filter(units, hapax: set[bytes]) -> list[bytes]:
    """Drop units whose training frequency is one."""
    return [u for u in units if u not in hapax]


def _chunks(seq: list[bytes], size: int):
    for i in range(0, len(seq), size):
        yield seq[i : i + size]


def emit_concept_corpus(concepts, spec: CorpusSpec, out,
                        hapax: set[bytes] | None = None) -> dict:
    """Write shuffled concept lines replicated to roughly the target size.

    Every concept is written once per copy (the multiplication factor is
    global); large concepts are split into contiguous chunks of at most
    ``max_line_units`` units. Deterministic given ``spec.shuffle_seed``.
    """
    if not concepts:
        raise ValueError("no concepts to emit")
    drop = hapax if (spec.hapax_filter and hapax) else set()
    unit_lists: list[list[bytes]] = []
    per_copy = 0
    for concept in sorted(concepts, key=lambda c: (c.method, c.concept_id)):
        units = [escape_unit(u) for u in concept.units() if u not in drop]
        if len(units) < 2:
            continue
        unit_lists.append(units)
        # per chunk: (k-1) spaces + newline, so a copy costs sum(len)+count
        per_copy += sum(len(u) for u in units) + len(units)
    if not unit_lists:
        raise ValueError("no concepts with >= 2 units after filtering")

    factor = max(1, round(spec.target_size / per_copy))
    rng = random.Random(spec.shuffle_seed)
    written = 0
    lines = 0
    for _ in range(factor):
        for units in unit_lists:
            rng.shuffle(units)
            for chunk in _chunks(units, spec.max_line_units):
                line = b" ".join(chunk) + b"\n"
                out.write(line)
                written += len(line)
                lines += 1
    deviation = abs(written - spec.target_size) / spec.target_size
    if deviation > 0.10:
        log.warning("concept corpus size %d deviates %.0f%% from target %d",
                    written, 100 * deviation, spec.target_size)
    return {"bytes": written, "lines": lines, "factor": factor}


def emit_sid_corpus(corpus: ParallelCorpus, verse_ids, out,
                    hapax: set[bytes] | None = None) -> dict:
    """One ``vSID_<verse> <unit>`` line per distinct (verse, unit) pair."""
    drop = hapax or set()
    written = 0
    lines = 0
    for eid in sorted(corpus.editions):
        ed = corpus.editions[eid]
        for vid in sorted(verse_ids):
            if vid not in ed.verses:
                continue
            seen: set[bytes] = set()
            for u in ed.unit_ids(vid):
                if u in seen or u in drop:
                    continue
                seen.add(u)
                line = b"vSID_" + vid.encode("ascii") + b" " + escape_unit(u) + b"\n"
                out.write(line)
                written += len(line)
                lines += 1
    return {"bytes": written, "lines": lines}


def emit_bow_corpus(corpus: ParallelCorpus, verse_ids, spec: CorpusSpec, out,
                    hapax: set[bytes] | None = None) -> dict:
    """Verse bags over two pivot editions plus one target edition at a time.

    The full cross product (verse x target x pivot pair) can exceed any size
    target; lines are thinned uniformly at random so the corpus stays within
    ``bow_factor`` times the target size.
    """
    drop = hapax if (spec.hapax_filter and hapax) else set()
    pivot_pairs = list(combinations(sorted(corpus.pivot_ids), 2))
    targets = sorted(corpus.editions)

    # tokenize each (verse, edition) once; line assembly just concatenates
    cache: dict[str, dict[str, list[bytes]]] = {}
    for vid in sorted(verse_ids):
        per_edition = {}
        for eid in targets:
            ed = corpus.editions[eid]
            if vid in ed.verses:
                per_edition[eid] = [escape_unit(u) for u in ed.unit_ids(vid)
                                    if u not in drop]
        cache[vid] = per_edition

    def line_sizes():
        for vid in sorted(cache):
            per_edition = cache[vid]
            sizes = {e: (sum(len(t) for t in units) + len(units))
                     for e, units in per_edition.items()}
            for tid in targets:
                if tid not in per_edition:
                    continue
                for pa, pb in pivot_pairs:
                    yield sizes.get(pa, 0) + sizes.get(pb, 0) + sizes[tid]

    total = sum(line_sizes())
    cap = spec.bow_factor * spec.target_size
    keep = min(1.0, cap / total) if total else 1.0
    if keep < 1.0:
        log.info("thinning BOW corpus to %.1f%% of %d bytes", 100 * keep, total)

    rng = random.Random(spec.shuffle_seed)
    written = 0
    lines = 0
    for vid in sorted(cache):
        per_edition = cache[vid]
        for tid in targets:
            if tid not in per_edition:
                continue
            for pa, pb in pivot_pairs:
                if keep < 1.0 and rng.random() >= keep:
                    continue
                tokens = (per_edition.get(pa, []) + per_edition.get(pb, [])
                          + per_edition[tid])
                if not tokens:
                    continue
                rng.shuffle(tokens)
                line = b" ".join(tokens) + b"\n"
                out.write(line)
                written += len(line)
                lines += 1
    return {"bytes": written, "lines": lines, "keep_fraction": keep}
