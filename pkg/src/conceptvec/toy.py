"""Synthetic desk-scale corpora: a base edition plus bijective token ciphers.

Each cipher edition renames the base vocabulary with a seeded permutation,
so the true translation of every word is known exactly; this gives the
pipeline a gold dictionary to be scored against. Optional per-edition verse
drops and token replacement noise turn the clean corpus into a harder one.

Verses never repeat a token (sampling without replacement), so every word's
corpus frequency equals the number of verses containing it.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def _derive_rng(seed: int, *scope: str) -> random.Random:
    """Process-independent RNG; string hashing would be salted, so derive
    the seed through a digest instead."""
    digest = hashlib.sha256(f"{seed}:{':'.join(scope)}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def make_vocabulary(size: int, rng: random.Random) -> list[bytes]:
    """Distinct pronounceable pseudo-words, two to four syllables."""
    vocab: set[bytes] = set()
    while len(vocab) < size:
        syllables = rng.randint(2, 4)
        word = ""
        for _ in range(syllables):
            word += rng.choice(_CONSONANTS) + rng.choice(_VOWELS)
            if rng.random() < 0.3:
                word += rng.choice(_CONSONANTS)
        vocab.add(word.encode("ascii"))
    return sorted(vocab)


@dataclass
class ToyCorpus:
    directory: Path
    manifest_path: Path
    base_edition: str
    edition_ids: list[str]
    mappings: dict[str, dict[bytes, bytes]]  # base word -> edition word
    base_verses: dict[str, list[bytes]]      # pre-noise token streams
    vocabulary: list[bytes]

    def gold_translation(self, edition_id: str, base_word: bytes) -> bytes:
        return self.mappings[edition_id][base_word]


def make_cipher_corpus(out_dir, *, num_editions: int = 12, num_verses: int = 2000,
                       vocab_size: int = 500, seed: int = 0,
                       drop_fraction: float = 0.0, token_noise: float = 0.0,
                       verse_length: tuple[int, int] = (6, 14),
                       zipf_exponent: float = 1.15,
                       test_count: int | None = None) -> ToyCorpus:
    """Write a cipher-family corpus and its manifest under ``out_dir``.

    Editions are named cip01..cipNN plus the base edition eng0; the base
    sorts last, so the deterministic type-count tie-break picks the first
    ten ciphers as pivots and leaves eng0 available as the query edition.
    """
    if num_editions < 2:
        raise ValueError("need at least the base edition plus one cipher")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    vocab = make_vocabulary(vocab_size, rng)
    weights = [1.0 / (rank ** zipf_exponent) for rank in range(1, vocab_size + 1)]

    base_verses: dict[str, list[bytes]] = {}
    lo, hi = verse_length
    for i in range(num_verses):
        vid = f"{40000000 + i:08d}"
        length = rng.randint(lo, min(hi, vocab_size))
        words: list[bytes] = []
        seen: set[bytes] = set()
        while len(words) < length:
            w = rng.choices(vocab, weights=weights, k=1)[0]
            if w not in seen:
                seen.add(w)
                words.append(w)
        base_verses[vid] = words

    base_id = "eng0"
    cipher_ids = [f"cip{i:02d}" for i in range(1, num_editions)]
    edition_ids = cipher_ids + [base_id]

    mappings: dict[str, dict[bytes, bytes]] = {base_id: {w: w for w in vocab}}
    for eid in cipher_ids:
        permuted = vocab[:]
        _derive_rng(seed, eid, "cipher").shuffle(permuted)
        mappings[eid] = dict(zip(vocab, permuted))

    for eid in edition_ids:
        ed_rng = _derive_rng(seed, eid, "emit")
        mapping = mappings[eid]
        keep_ids = sorted(base_verses)
        if drop_fraction > 0:
            kept = ed_rng.sample(keep_ids, int(round((1 - drop_fraction) * len(keep_ids))))
            keep_ids = sorted(kept)
        lines = []
        for vid in keep_ids:
            tokens = [mapping[w] for w in base_verses[vid]]
            if token_noise > 0:
                # uniform replacement: corruption should not concentrate on
                # frequent words, or repeated false pairs become real edges
                tokens = [
                    ed_rng.choice(vocab) if ed_rng.random() < token_noise else t
                    for t in tokens
                ]
            lines.append(vid.encode("ascii") + b"\t" + b" ".join(tokens) + b"\n")
        with open(out_dir / f"{eid}.txt", "wb") as fh:
            fh.writelines(lines)

    manifest = {
        "editions": [{"file": f"{eid}.txt", "id": eid} for eid in edition_ids],
        "mode": "WORD",
        "num_pivots": 10 if num_editions >= 11 else max(2, num_editions - 2),
        "seed": seed,
        "sample_size": num_verses,
    }
    if test_count is not None:
        manifest["test_count"] = test_count
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)

    return ToyCorpus(out_dir, manifest_path, base_id, edition_ids, mappings,
                     base_verses, vocab)


def frequent_queries(corpus, edition_id: str, verse_ids, *, min_freq: int = 5,
                     limit: int = 70) -> list[bytes]:
    """Query words with at least ``min_freq`` training occurrences.

    Taken evenly across the frequency spectrum of the eligible words so the
    set is not dominated by the very frequent ones.
    """
    ed = corpus.editions[edition_id]
    freq: dict[bytes, int] = {}
    for vid in verse_ids:
        if vid in ed.verses:
            for tok in ed.units(vid):
                freq[tok] = freq.get(tok, 0) + 1
    eligible = sorted((w for w, c in freq.items() if c >= min_freq),
                      key=lambda w: (-freq[w], w))
    if len(eligible) <= limit:
        return eligible
    step = len(eligible) / limit
    return [eligible[int(i * step)] for i in range(limit)]
