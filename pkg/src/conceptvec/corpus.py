"""Verse-aligned corpus loading, tokenization and pivot selection.

An edition is one translation of the corpus. Editions are aligned by shared
verse IDs; a verse missing from an edition is simply absent from that
edition's data. All text is handled as raw bytes: tokens and n-grams are
byte strings, and downcasing touches ASCII bytes only.
"""

from __future__ import annotations

import json
import logging
import random
import statistics
from dataclasses import dataclass, field
from pathlib import Path

log = logging.getLogger(__name__)

WORD = "WORD"
CHAR = "CHAR"

NGRAM_ORDERS = (4, 8, 12)

DEFAULT_NUM_PIVOTS = 10
DEFAULT_SAMPLE_SIZE = 5000


class CorpusError(Exception):
    """Malformed corpus input."""


class EmptyEditionError(CorpusError):
    """Edition file contained no parseable verses."""


def unit_id(edition_id: str, surface: bytes) -> bytes:
    """Serialize a unit as ``edition_id:surface``."""
    return edition_id.encode("ascii") + b":" + surface


def edition_of(unit: bytes) -> str:
    """Edition prefix of a serialized unit."""
    head, sep, _ = unit.partition(b":")
    if not sep:
        raise ValueError(f"unit without edition prefix: {unit!r}")
    return head.decode("ascii")


def surface_of(unit: bytes) -> bytes:
    return unit.partition(b":")[2]


def tokenize_word(text: bytes) -> list[bytes]:
    """Lowercased tokens split on whitespace runs.

    Downcasing is ASCII-only (bytes outside A-Z pass through unchanged);
    punctuation stays attached, the corpus is expected to be pre-tokenized
    with spaces around punctuation.
    """
    return text.lower().split()


def ngramize(text: bytes, n: int) -> list[bytes]:
    """Overlapping byte n-grams of the space-padded text.

    The text is padded with one leading and one trailing space byte, then
    every contiguous slice of length ``n`` is emitted, so a text of m bytes
    yields max(0, m - n + 3) n-grams.
    """
    if n < 1:
        raise ValueError(f"ngram order must be >= 1, got {n}")
    padded = b" " + text + b" "
    count = len(padded) - n + 1
    return [padded[i : i + n] for i in range(max(0, count))]


def select_ngram_order(edition_size: int, median_size: int) -> int:
    """n-gram order from the edition-size / median-size ratio."""
    if median_size <= 0:
        raise ValueError("median edition size must be positive")
    rho = edition_size / median_size
    if rho < 2:
        return 4
    if rho < 3:
        return 8
    return 12


@dataclass
class Edition:
    """One translation: ordered verse map plus unit mode."""

    edition_id: str
    verses: dict[str, bytes]
    mode: str = WORD
    ngram_order: int | None = None
    skipped_lines: int = 0

    def __post_init__(self) -> None:
        if self.mode not in (WORD, CHAR):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == CHAR:
            if self.ngram_order not in NGRAM_ORDERS:
                raise ValueError(
                    f"CHAR edition needs ngram_order in {NGRAM_ORDERS}, "
                    f"got {self.ngram_order}"
                )

    @property
    def size_bytes(self) -> int:
        return sum(len(t) for t in self.verses.values())

    def units(self, verse_id: str) -> list[bytes]:
        """Surfaces of one verse under the edition's mode."""
        text = self.verses.get(verse_id)
        if text is None:
            return []
        if self.mode == WORD:
            return tokenize_word(text)
        return ngramize(text, self.ngram_order)

    def unit_ids(self, verse_id: str) -> list[bytes]:
        return [unit_id(self.edition_id, s) for s in self.units(verse_id)]

    def with_mode(self, mode: str, ngram_order: int | None = None) -> "Edition":
        return Edition(self.edition_id, self.verses, mode, ngram_order,
                       self.skipped_lines)


def load_edition(path: str | Path, edition_id: str) -> Edition:
    """Parse one ``verse_id<TAB>text`` file into an Edition (WORD mode).

    Lines without a tab are skipped with a warning; duplicate verse IDs are
    an error; an empty result is an error.
    """
    verses: dict[str, bytes] = {}
    skipped = 0
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip(b"\r\n")
            if not line:
                continue
            vid, sep, text = line.partition(b"\t")
            if not sep:
                log.warning("%s:%d: no tab separator, line skipped", path, lineno)
                skipped += 1
                continue
            vid_str = vid.decode("ascii", "replace")
            if vid_str in verses:
                raise CorpusError(f"{path}:{lineno}: duplicate verse ID {vid_str}")
            verses[vid_str] = text
    if not verses:
        raise EmptyEditionError(f"{path}: no verses parsed")
    return Edition(edition_id, verses, skipped_lines=skipped)


def count_types(edition: Edition, sample: set[str]) -> int:
    """Number of distinct WORD tokens over the sampled verses.

    Verses absent from the edition are tolerated and skipped. Type counting
    always uses WORD tokenization; it runs before n-gram modes are assigned.
    """
    types: set[bytes] = set()
    for vid in sample:
        text = edition.verses.get(vid)
        if text is not None:
            types.update(tokenize_word(text))
    return len(types)


@dataclass
class ParallelCorpus:
    """Editions plus the train/test split and the pivot edition list."""

    editions: dict[str, Edition]
    train_ids: set[str] = field(default_factory=set)
    test_ids: set[str] = field(default_factory=set)
    pivot_ids: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.train_ids & self.test_ids:
            raise ValueError("train and test verse sets overlap")
        unknown = [p for p in self.pivot_ids if p not in self.editions]
        if unknown:
            raise ValueError(f"pivot ids not in corpus: {unknown}")
        for pid in self.pivot_ids:
            if self.editions[pid].mode != WORD:
                raise ValueError(f"pivot edition {pid} must be WORD mode")

    @property
    def all_verse_ids(self) -> set[str]:
        ids: set[str] = set()
        for ed in self.editions.values():
            ids.update(ed.verses)
        return ids

    def shared_verses(self, a: str, b: str, within: set[str] | None = None) -> list[str]:
        """Sorted verse IDs present in both editions (optionally restricted)."""
        ids = self.editions[a].verses.keys() & self.editions[b].verses.keys()
        if within is not None:
            ids &= within
        return sorted(ids)

    def target_ids(self) -> list[str]:
        """All edition IDs; pivot editions are target editions too."""
        return sorted(self.editions)

    def non_pivot_ids(self) -> list[str]:
        return [e for e in sorted(self.editions) if e not in self.pivot_ids]


def select_pivots(
    corpus: ParallelCorpus,
    k: int = DEFAULT_NUM_PIVOTS,
    sample_size: int = DEFAULT_SAMPLE_SIZE,
    seed: int = 0,
) -> list[str]:
    """The k editions with the smallest type count over a shared verse sample.

    One verse sample is drawn for all editions; ties in type count break by
    edition ID. Deterministic given the seed and invariant under edition
    insertion order.
    """
    if len(corpus.editions) < k:
        raise CorpusError(
            f"need at least {k} editions to select pivots, have {len(corpus.editions)}"
        )
    all_ids = sorted(corpus.all_verse_ids)
    rng = random.Random(seed)
    sample = set(rng.sample(all_ids, min(sample_size, len(all_ids))))
    ranked = sorted(
        (count_types(ed, sample), eid) for eid, ed in corpus.editions.items()
    )
    return [eid for _, eid in ranked[:k]]


def split_train_test(
    verse_ids: set[str],
    *,
    test_count: int | None = None,
    test_fraction: float | None = None,
    seed: int = 0,
) -> tuple[set[str], set[str]]:
    """Deterministic disjoint train/test split of the verse IDs."""
    ids = sorted(verse_ids)
    if test_count is None:
        if test_fraction is None:
            raise ValueError("need test_count or test_fraction")
        test_count = int(round(test_fraction * len(ids)))
    if test_count > len(ids):
        raise CorpusError(
            f"requested {test_count} test verses but only {len(ids)} available"
        )
    rng = random.Random(seed)
    rng.shuffle(ids)
    test = set(ids[:test_count])
    train = set(ids[test_count:])
    if not train:
        log.warning("train split is empty (test_count == corpus size)")
    return train, test


@dataclass
class ManifestEntry:
    path: Path
    edition_id: str
    mode: str | None = None        # None: decide by the size-ratio rule
    ngram_order: int | None = None


@dataclass
class CorpusManifest:
    """Config file listing edition files plus split/pivot settings."""

    entries: list[ManifestEntry]
    mode: str = WORD               # default mode for non-pivot editions
    pivots: list[str] | None = None
    num_pivots: int = DEFAULT_NUM_PIVOTS
    seed: int = 0
    sample_size: int = DEFAULT_SAMPLE_SIZE
    test_count: int | None = None
    test_fraction: float | None = None


def read_manifest(path: str | Path) -> CorpusManifest:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    base = path.parent
    entries = []
    for item in raw["editions"]:
        if isinstance(item, str):
            item = {"file": item}
        file = Path(item["file"])
        if not file.is_absolute():
            file = base / file
        entries.append(
            ManifestEntry(
                path=file,
                edition_id=item.get("id", file.stem),
                mode=item.get("mode"),
                ngram_order=item.get("ngram_order"),
            )
        )
    return CorpusManifest(
        entries=entries,
        mode=raw.get("mode", WORD),
        pivots=raw.get("pivots"),
        num_pivots=raw.get("num_pivots", DEFAULT_NUM_PIVOTS),
        seed=raw.get("seed", 0),
        sample_size=raw.get("sample_size", DEFAULT_SAMPLE_SIZE),
        test_count=raw.get("test_count"),
        test_fraction=raw.get("test_fraction"),
    )


def build_corpus(manifest: CorpusManifest) -> ParallelCorpus:
    """Load all editions, pick pivots, assign modes and split verses.

    Pivot editions are always WORD. When the manifest's default mode is CHAR,
    every non-pivot edition is n-gramized with the order given by the
    edition-size ratio rule (unless overridden per edition), and each pivot
    edition additionally contributes a CHAR twin (id suffixed with ``#c``)
    so pivots can serve as target editions in their CHAR representation.
    """
    loaded = {e.edition_id: load_edition(e.path, e.edition_id) for e in manifest.entries}
    if len(loaded) != len(manifest.entries):
        raise CorpusError("duplicate edition IDs in manifest")

    corpus = ParallelCorpus(editions=dict(loaded))
    pivots = manifest.pivots
    if pivots is None:
        pivots = select_pivots(
            corpus, k=manifest.num_pivots,
            sample_size=manifest.sample_size, seed=manifest.seed,
        )
    for pid in pivots:
        if pid not in loaded:
            raise CorpusError(f"pivot edition {pid} not in manifest")

    sizes = [ed.size_bytes for ed in loaded.values()]
    median_size = int(statistics.median(sizes))

    overrides = {e.edition_id: e for e in manifest.entries}
    editions: dict[str, Edition] = {}
    for eid, ed in loaded.items():
        entry = overrides[eid]
        if eid in pivots:
            editions[eid] = ed
            if manifest.mode == CHAR or entry.mode == CHAR:
                order = entry.ngram_order or select_ngram_order(ed.size_bytes, median_size)
                twin = f"{eid}#c"
                editions[twin] = Edition(twin, ed.verses, CHAR, order)
            continue
        mode = entry.mode or manifest.mode
        if mode == CHAR:
            order = entry.ngram_order or select_ngram_order(ed.size_bytes, median_size)
            editions[eid] = ed.with_mode(CHAR, order)
        else:
            editions[eid] = ed

    shared = set()
    for ed in editions.values():
        shared.update(ed.verses)
    test_count = manifest.test_count
    test_fraction = manifest.test_fraction
    if test_count is None and test_fraction is None:
        test_fraction = 0.2
    train, test = split_train_test(
        shared, test_count=test_count, test_fraction=test_fraction,
        seed=manifest.seed,
    )
    return ParallelCorpus(editions=editions, train_ids=train, test_ids=test,
                          pivot_ids=list(pivots))
