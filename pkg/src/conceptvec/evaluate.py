"""Word-level roundtrip translation evaluation and its dictionary baseline.

A query unit is translated to its nearest neighbors in a target edition and
back; the returned query-language units are compared against strict and
relaxed ground-truth sets. Precision for a query averages capped hits over
all intermediate editions; reports aggregate mean and lower median over the
query set, with coverage counting the queries present in the space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .corpus import Edition, unit_id, surface_of, tokenize_word, ngramize
from .embed import EmbeddingSpace

# (ground truth, k_I, k_T) per evaluation setting
SETTINGS: dict[str, tuple[str, int, int]] = {
    "S1": ("s", 1, 1),
    "R1": ("r", 1, 1),
    "S4": ("s", 2, 2),
    "S16": ("s", 2, 8),
}

SIGMA_STRICT = 0.75
SIGMA_RELAXED = 0.5


def load_queries(path) -> list[bytes]:
    out = []
    with open(path, "rb") as fh:
        for raw in fh:
            q = raw.strip()
            if q:
                out.append(q)
    return out


def load_lemma_table(path) -> dict[bytes, frozenset[bytes]]:
    """TSV rows ``lemma<TAB>form form ...``; every form keys the full set."""
    table: dict[bytes, frozenset[bytes]] = {}
    with open(path, "rb") as fh:
        for raw in fh:
            line = raw.rstrip(b"\n")
            if not line:
                continue
            lemma, _, rest = line.partition(b"\t")
            forms = frozenset(rest.split()) | {lemma}
            for form in forms:
                table[form] = forms
    return table


def ground_truth_word(q: bytes, lemma_table: dict[bytes, frozenset[bytes]] | None
                      ) -> tuple[frozenset[bytes], frozenset[bytes]]:
    """Strict set is the query itself; relaxed adds same-lemma forms."""
    strict = frozenset((q,))
    if lemma_table is None:
        return strict, strict
    return strict, lemma_table.get(q, strict) | strict


def char_sequence_counts(editions: list[Edition], ngram_order: int
                         ) -> tuple[dict[bytes, int], dict[bytes, int]]:
    """Token counts of n-grams and of words across query-language editions."""
    ngram_counts: dict[bytes, int] = {}
    word_counts: dict[bytes, int] = {}
    for ed in editions:
        for text in ed.verses.values():
            for g in ngramize(text, ngram_order):
                ngram_counts[g] = ngram_counts.get(g, 0) + 1
            for w in tokenize_word(text):
                word_counts[w] = word_counts.get(w, 0) + 1
    return ngram_counts, word_counts


def ngram_purity(g: bytes, forms: frozenset[bytes], ngram_counts: dict[bytes, int],
                 word_counts: dict[bytes, int]) -> float:
    """Share of the n-gram's occurrences that fall inside the query's forms."""
    c_g = ngram_counts.get(g, 0)
    if c_g == 0:
        return 0.0
    inside = sum(word_counts.get(w, 0) for w in forms if g in b" " + w.lower() + b" ")
    return inside / c_g


def ground_truth_char(q: bytes, lemma_table: dict[bytes, frozenset[bytes]] | None,
                      ngram_counts: dict[bytes, int], word_counts: dict[bytes, int],
                      sigma: float, candidates=None) -> frozenset[bytes]:
    """N-grams corresponding (almost) uniquely to the query's lemma forms.

    A candidate n-gram is kept when the
    frequency-weighted share of lemma forms containing it exceeds sigma.
    Candidate n-grams default to every n-gram seen in the query language.
    """
    forms = frozenset((q,))
    if lemma_table is not None:
        forms = lemma_table.get(q, forms) | forms
    if candidates is None:
        candidates = ngram_counts.keys()
    return frozenset(
        g for g in candidates
        if ngram_purity(g, forms, ngram_counts, word_counts) > sigma
    )


def char_query_anchor(q: bytes, lemma_table, ngram_counts: dict[bytes, int],
                      word_counts: dict[bytes, int],
                      strict: frozenset[bytes]) -> bytes | None:
    """The n-gram unit standing in for a word query in a CHAR space.

    Word queries are not units of an n-gram vocabulary; the best anchor is
    the strict-set n-gram that identifies the query most uniquely, with
    frequency and lexicographic order as tie-breaks.
    """
    if not strict:
        return None
    forms = frozenset((q,))
    if lemma_table is not None:
        forms = lemma_table.get(q, forms) | forms
    return min(strict, key=lambda g: (
        -ngram_purity(g, forms, ngram_counts, word_counts),
        -ngram_counts.get(g, 0), g))


def roundtrip(space: EmbeddingSpace, query_unit: bytes, edition: str,
              k_i: int, k_t: int, query_edition: str) -> set[bytes]:
    """Predictions: k_T back-translations of each of the k_I intermediates."""
    predictions: set[bytes] = set()
    for intermediate, _ in space.nearest_neighbors(query_unit, edition, k_i):
        for unit, _ in space.nearest_neighbors(intermediate, query_edition, k_t):
            predictions.add(unit)
    return predictions


def precision(per_edition_predictions: dict[str, set[bytes]],
              ground_truth: frozenset[bytes]) -> float:
    """Mean over editions of min(1, |predictions intersect ground truth|)."""
    if not per_edition_predictions:
        return 0.0
    hits = sum(
        min(1, len({surface_of(u) for u in preds} & ground_truth))
        for preds in per_edition_predictions.values()
    )
    return hits / len(per_edition_predictions)


def lower_median(values: list[float]) -> float:
    if not values:
        return 0.0
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


@dataclass
class SettingResult:
    mean: float
    median: float
    per_query: dict[bytes, float] = field(default_factory=dict)
    per_edition: dict[str, float] = field(default_factory=dict)


@dataclass
class RoundtripReport:
    coverage: int
    n_queries: int
    settings: dict[str, SettingResult] = field(default_factory=dict)


def evaluate_roundtrip(space: EmbeddingSpace, queries: list[bytes],
                       query_edition: str, editions: list[str],
                       lemma_table: dict[bytes, frozenset[bytes]] | None = None,
                       settings: dict[str, tuple[str, int, int]] | None = None,
                       char_ground_truth: dict[bytes, tuple[frozenset, frozenset]] | None = None,
                       ) -> RoundtripReport:
    """Run all settings for every covered query against every edition.

    ``char_ground_truth`` supplies precomputed (strict, relaxed) n-gram sets
    per query for CHAR spaces; WORD ground truth comes from the lemma table.
    Queries with an empty strict set are dropped from the query set entirely;
    queries whose unit is missing from the space are excluded from coverage.
    """
    settings = settings or SETTINGS
    if char_ground_truth is not None:
        queries = [q for q in queries
                   if char_ground_truth.get(q, (frozenset(),))[0]]
    covered = [q for q in queries if unit_id(query_edition, q) in space]
    report = RoundtripReport(coverage=len(covered), n_queries=len(queries))
    if not covered:
        report.settings = {
            name: SettingResult(0.0, 0.0) for name in settings
        }
        return report

    per_setting_scores: dict[str, dict[bytes, float]] = {n: {} for n in settings}
    per_setting_edition: dict[str, dict[str, list[float]]] = {
        n: {e: [] for e in editions} for n in settings
    }
    combos = sorted({(k_i, k_t) for _, k_i, k_t in settings.values()})
    for q in covered:
        q_unit = unit_id(query_edition, q)
        if char_ground_truth is not None:
            strict, relaxed = char_ground_truth[q]
        else:
            strict, relaxed = ground_truth_word(q, lemma_table)
        preds: dict[tuple[int, int], dict[str, set[bytes]]] = {}
        for k_i, k_t in combos:
            preds[(k_i, k_t)] = {
                e: roundtrip(space, q_unit, e, k_i, k_t, query_edition)
                for e in editions
            }
        for name, (kind, k_i, k_t) in settings.items():
            truth = strict if kind == "s" else relaxed
            by_edition = preds[(k_i, k_t)]
            per_setting_scores[name][q] = precision(by_edition, truth)
            for e, p in by_edition.items():
                hit = min(1, len({surface_of(u) for u in p} & truth))
                per_setting_edition[name][e].append(float(hit))

    for name in settings:
        scores = per_setting_scores[name]
        values = list(scores.values())
        report.settings[name] = SettingResult(
            mean=sum(values) / len(values),
            median=lower_median(values),
            per_query=scores,
            per_edition={
                e: (sum(v) / len(v) if v else 0.0)
                for e, v in per_setting_edition[name].items()
            },
        )
    return report


class DictionaryLookup:
    """Best-edge navigation over a set of pairwise dictionaries.

    ``closest`` means the highest-count edge, ties broken by the
    lexicographically smaller unit.
    """

    def __init__(self):
        self._adj: dict[tuple[str, str], dict[bytes, tuple[float, bytes]]] = {}

    def add_dictionary(self, edition_a: str, edition_b: str, rows) -> None:
        fwd = self._adj.setdefault((edition_a, edition_b), {})
        rev = self._adj.setdefault((edition_b, edition_a), {})
        for u, v, count in rows:
            for table, src, dst in ((fwd, u, v), (rev, v, u)):
                best = table.get(src)
                if best is None or (-count, dst) < (-best[0], best[1]):
                    table[src] = (count, dst)

    def best(self, unit: bytes, from_edition: str, to_edition: str) -> bytes | None:
        entry = self._adj.get((from_edition, to_edition), {}).get(unit)
        return entry[1] if entry else None

    def has_entry(self, unit: bytes, from_edition: str, to_edition: str) -> bool:
        return unit in self._adj.get((from_edition, to_edition), {})


def rtsimple_chain(lookup: DictionaryLookup, q_unit: bytes, query_edition: str,
                   pivot_edition: str, target_edition: str) -> bytes | None:
    """Four dictionary hops: query -> pivot -> target -> pivot -> query.

    Returns the final query-edition unit, or None when any hop has no edge.
    """
    p = lookup.best(q_unit, query_edition, pivot_edition)
    if p is None:
        return None
    t = lookup.best(p, pivot_edition, target_edition)
    if t is None:
        return None
    p2 = lookup.best(t, target_edition, pivot_edition)
    if p2 is None:
        return None
    return lookup.best(p2, pivot_edition, query_edition)


def evaluate_rtsimple(lookup: DictionaryLookup, queries: list[bytes],
                      query_edition: str, pivots: list[str], editions: list[str],
                      lemma_table: dict[bytes, frozenset[bytes]] | None = None,
                      char_ground_truth: dict[bytes, tuple[frozenset, frozenset]] | None = None,
                      ) -> RoundtripReport:
    """Dictionary roundtrip over every (pivot, target edition) combination.

    Strict hits need the exact query (or a strict-set n-gram) back; relaxed
    accepts same-lemma forms. Coverage counts queries with at least one
    first-hop dictionary entry.
    """
    covered = []
    for q in queries:
        q_unit = unit_id(query_edition, q)
        if any(lookup.has_entry(q_unit, query_edition, p) for p in pivots):
            covered.append(q)
    report = RoundtripReport(coverage=len(covered), n_queries=len(queries))
    strict_scores: dict[bytes, float] = {}
    relaxed_scores: dict[bytes, float] = {}
    edition_hits: dict[str, list[float]] = {e: [] for e in editions}
    for q in covered:
        q_unit = unit_id(query_edition, q)
        if char_ground_truth is not None:
            strict, relaxed = char_ground_truth[q]
        else:
            strict, relaxed = ground_truth_word(q, lemma_table)
        s_hits = []
        r_hits = []
        for e in editions:
            # a pivot cannot be its own target: no self dictionaries exist
            usable = [p for p in pivots if p != e]
            if not usable:
                continue
            s_by_pivot = []
            for p in usable:
                result = rtsimple_chain(lookup, q_unit, query_edition, p, e)
                surface = surface_of(result) if result is not None else None
                s_by_pivot.append(1.0 if surface in strict else 0.0)
                r_hits.append(1.0 if surface in relaxed else 0.0)
            edition_mean = sum(s_by_pivot) / len(usable)
            s_hits.append(edition_mean)
            edition_hits[e].append(edition_mean)
        strict_scores[q] = sum(s_hits) / len(s_hits)
        relaxed_scores[q] = sum(r_hits) / len(r_hits)
    if covered:
        report.settings["S1"] = SettingResult(
            mean=sum(strict_scores.values()) / len(strict_scores),
            median=lower_median(list(strict_scores.values())),
            per_query=strict_scores,
            per_edition={e: (sum(v) / len(v) if v else 0.0)
                         for e, v in edition_hits.items()},
        )
        report.settings["R1"] = SettingResult(
            mean=sum(relaxed_scores.values()) / len(relaxed_scores),
            median=lower_median(list(relaxed_scores.values())),
            per_query=relaxed_scores,
        )
    else:
        report.settings["S1"] = SettingResult(0.0, 0.0)
        report.settings["R1"] = SettingResult(0.0, 0.0)
    return report


def delta_report(reference: RoundtripReport, other: RoundtripReport,
                 setting: str = "R1") -> dict[str, float]:
    """Per-edition mean difference (reference minus other) for one setting."""
    ref = reference.settings[setting].per_edition
    oth = other.settings[setting].per_edition
    return {e: ref[e] - oth.get(e, 0.0) for e in ref}
