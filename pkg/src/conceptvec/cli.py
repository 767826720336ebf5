"""Pipeline orchestration: resumable stages driven by one JSON config.

Each stage writes its artifacts atomically under its own directory plus a
stage manifest recording the SHA-256 of every input file and the relevant
config knobs; a rerun with matching hashes is skipped. All randomness flows
from one root seed expanded per stage, so partial reruns stay consistent.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from itertools import combinations
from pathlib import Path

from . import align, chi2, concepts, corpus, embed, evaluate, graph, pseudocorpus
from . import sentiment as senti
from . import toy as toymod
from . import tsvio

log = logging.getLogger("conceptvec")

STAGES = ("ingest", "align", "chi2", "graph", "concepts", "corpus", "train",
          "eval", "report")

# row order of the final report
METHOD_ORDER = ("CLIQUE", "NT", "NT-CC", "NT-CLIQUE", "NT-EDGE", "SAMPLE",
                "BOW", "S-ID", "RTSIMPLE")
CONCEPT_METHODS = ("CLIQUE", "NT", "NT-CC", "NT-CLIQUE", "NT-EDGE", "SAMPLE")
NT_VARIANTS = {"NT-CC": "CC", "NT-CLIQUE": "CLIQUE", "NT-EDGE": "EDGE"}


@dataclass
class PipelineConfig:
    manifest: str
    out_dir: str
    methods: list[str] = field(default_factory=lambda: list(METHOD_ORDER))
    seed: int = 1
    workers: int = 0  # 0: use CONCEPTVEC_WORKERS or 1

    em_iterations: int = 5
    dict_min_count: int = 2

    chi_min: float = 100.0
    d_max: int = 5

    adjacency_denominator: str = "cooccurrence"

    theta: float = 0.4
    nu: float = 0.6
    sample_count: int = 200

    target_size: int = 50 * 1024 * 1024
    max_line_units: int = 1000
    bow_factor: int = 10

    dim: int = 200
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    min_lr_fraction: float = 1e-4
    subsample: float = 1e-3
    vocab_min_count: int = 1
    sid_epochs: int = 100

    query_edition: str | None = None
    query_file: str | None = None
    lemma_file: str | None = None
    query_language_editions: list[str] | None = None
    eval_settings: list[str] = field(default_factory=lambda: list(evaluate.SETTINGS))
    sentiment_labels: str | None = None
    sentiment_train_edition: str | None = None
    sentiment_epochs: int = 20
    sentiment_reg_lambda: float = 1e-3
    delta_reference: str = "NT"

    def resolved_workers(self) -> int:
        if self.workers > 0:
            return self.workers
        return int(os.environ.get("CONCEPTVEC_WORKERS", "1"))

    def stage_seed(self, stage: str) -> int:
        digest = hashlib.sha256(f"{self.seed}:{stage}".encode()).digest()
        return int.from_bytes(digest[:8], "big") % (2**31 - 1)


def load_config(path: str | Path, **overrides) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    raw.update({k: v for k, v in overrides.items() if v is not None})
    known = {f for f in PipelineConfig.__dataclass_fields__}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    cfg = PipelineConfig(**raw)
    base = Path(path).parent
    for attr in ("manifest", "out_dir", "query_file", "lemma_file", "sentiment_labels"):
        value = getattr(cfg, attr)
        if value is not None and not Path(value).is_absolute():
            setattr(cfg, attr, str(base / value))
    return cfg


class StageError(Exception):
    pass


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Runner:
    """Stage bookkeeping: directories, input hashes, skip detection."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)

    def stage_dir(self, stage: str) -> Path:
        return self.out / stage

    def require(self, stage: str, *paths: Path) -> None:
        for p in paths:
            if not p.exists():
                raise StageError(
                    f"missing artifact {p}; run the '{stage}' stage first")

    def _manifest_path(self, stage: str) -> Path:
        return self.stage_dir(stage) / "stage_manifest.json"

    def up_to_date(self, stage: str, inputs: list[Path], config: dict) -> bool:
        mpath = self._manifest_path(stage)
        if not mpath.exists():
            return False
        with open(mpath, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        if manifest.get("config") != _jsonable(config):
            return False
        recorded = manifest.get("inputs", {})
        current = {str(p): _sha256(p) for p in inputs if p.exists()}
        if recorded != current:
            return False
        return all(Path(o).exists() for o in manifest.get("outputs", []))

    def finish(self, stage: str, inputs: list[Path], config: dict,
               outputs: list[Path]) -> None:
        manifest = {
            "inputs": {str(p): _sha256(p) for p in inputs},
            "config": _jsonable(config),
            "outputs": [str(o) for o in outputs],
        }
        with tsvio.atomic_write(self._manifest_path(stage)) as fh:
            fh.write(json.dumps(manifest, indent=2, sort_keys=True).encode())


def _jsonable(obj):
    return json.loads(json.dumps(obj, sort_keys=True))


def _corpus_input_files(cfg: PipelineConfig) -> list[Path]:
    man = corpus.read_manifest(cfg.manifest)
    return [Path(cfg.manifest)] + [e.path for e in man.entries]


def load_pipeline_corpus(cfg: PipelineConfig) -> corpus.ParallelCorpus:
    """Rebuild the corpus with the split/pivots/modes fixed by ingest."""
    runner = Runner(cfg)
    ingest_dir = runner.stage_dir("ingest")
    runner.require("ingest", ingest_dir / "split.json", ingest_dir / "editions.json")
    with open(ingest_dir / "split.json", "r", encoding="utf-8") as fh:
        split = json.load(fh)
    with open(ingest_dir / "editions.json", "r", encoding="utf-8") as fh:
        described = json.load(fh)

    man = corpus.read_manifest(cfg.manifest)
    loaded = {e.edition_id: corpus.load_edition(e.path, e.edition_id)
              for e in man.entries}
    editions: dict[str, corpus.Edition] = {}
    for desc in described["editions"]:
        eid = desc["id"]
        source = desc.get("source", eid)
        base = loaded[source]
        if desc["mode"] == corpus.CHAR:
            editions[eid] = corpus.Edition(eid, base.verses, corpus.CHAR,
                                           desc["ngram_order"])
        else:
            editions[eid] = corpus.Edition(eid, base.verses, corpus.WORD)
    return corpus.ParallelCorpus(
        editions=editions,
        train_ids=set(split["train"]),
        test_ids=set(split["test"]),
        pivot_ids=described["pivots"],
    )


# ---------------------------------------------------------------- stages


def stage_ingest(cfg: PipelineConfig) -> None:
    runner = Runner(cfg)
    inputs = _corpus_input_files(cfg)
    config = {"seed": cfg.seed}
    if runner.up_to_date("ingest", inputs, config):
        log.info("ingest: up to date, skipping")
        return
    man = corpus.read_manifest(cfg.manifest)
    built = corpus.build_corpus(man)
    out = runner.stage_dir("ingest")
    described = {
        "pivots": built.pivot_ids,
        "editions": [
            {
                "id": ed.edition_id,
                "source": ed.edition_id.split("#", 1)[0],
                "mode": ed.mode,
                "ngram_order": ed.ngram_order,
                "verses": len(ed.verses),
                "bytes": ed.size_bytes,
            }
            for ed in built.editions.values()
        ],
    }
    with tsvio.atomic_write(out / "editions.json") as fh:
        fh.write(json.dumps(described, indent=2, sort_keys=True).encode())
    with tsvio.atomic_write(out / "split.json") as fh:
        fh.write(json.dumps({"train": sorted(built.train_ids),
                             "test": sorted(built.test_ids)}).encode())
    runner.finish("ingest", inputs, config,
                  [out / "editions.json", out / "split.json"])
    log.info("ingest: %d editions, %d train / %d test verses, pivots=%s",
             len(built.editions), len(built.train_ids), len(built.test_ids),
             ",".join(built.pivot_ids))


def _alignment_pairs(built: corpus.ParallelCorpus) -> list[tuple[str, str]]:
    pivots = built.pivot_ids
    pairs = [tuple(sorted(p)) for p in combinations(pivots, 2)]
    word_targets = [e for e in built.non_pivot_ids()
                    if built.editions[e].mode == corpus.WORD]
    pairs += [(p, t) for p in pivots for t in word_targets]
    return pairs


def _pair_path(stage_dir: Path, a: str, b: str) -> Path:
    return stage_dir / f"{a}__{b}.tsv"


def stage_align(cfg: PipelineConfig) -> None:
    runner = Runner(cfg)
    built = load_pipeline_corpus(cfg)
    inputs = _corpus_input_files(cfg) + [runner.stage_dir("ingest") / "split.json"]
    config = {"em_iterations": cfg.em_iterations, "min_count": cfg.dict_min_count}
    if runner.up_to_date("align", inputs, config):
        log.info("align: up to date, skipping")
        return
    out = runner.stage_dir("align")
    pairs = _alignment_pairs(built)

    def run_pair(pair: tuple[str, str]) -> Path:
        a, b = pair
        edge_set = align.induce_alignment_dictionary(
            built.editions[a], built.editions[b], built.train_ids,
            iterations=cfg.em_iterations, min_count=cfg.dict_min_count)
        path = _pair_path(out, a, b)
        tsvio.write_edge_tsv(path, edge_set.rows())
        return path

    workers = cfg.resolved_workers()
    outputs: list[Path] = []
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(run_pair, pairs))
    else:
        outputs = [run_pair(p) for p in pairs]
    runner.finish("align", inputs, config, sorted(outputs))
    log.info("align: %d pair dictionaries", len(outputs))


def stage_chi2(cfg: PipelineConfig) -> None:
    runner = Runner(cfg)
    built = load_pipeline_corpus(cfg)
    inputs = _corpus_input_files(cfg) + [runner.stage_dir("ingest") / "split.json"]
    config = {"chi_min": cfg.chi_min, "d_max": cfg.d_max}
    if runner.up_to_date("chi2", inputs, config):
        log.info("chi2: up to date, skipping")
        return
    out = runner.stage_dir("chi2")
    char_targets = [e for e, ed in sorted(built.editions.items())
                    if ed.mode == corpus.CHAR]
    pairs = [(p, t) for p in built.pivot_ids for t in char_targets]

    def run_pair(pair: tuple[str, str]) -> Path:
        p, t = pair
        result = chi2.induce_pair(built.editions[p], built.editions[t],
                                  built.train_ids, chi_min=cfg.chi_min,
                                  d_max=cfg.d_max)
        path = _pair_path(out, p, t)
        tsvio.write_edge_tsv(path, result.rows())
        return path

    workers = cfg.resolved_workers()
    if workers > 1 and pairs:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(run_pair, pairs))
    else:
        outputs = [run_pair(p) for p in pairs]
    out.mkdir(parents=True, exist_ok=True)
    runner.finish("chi2", inputs, config, sorted(outputs))
    log.info("chi2: %d pair dictionaries", len(outputs))


def _read_alignment_sets(built, align_dir: Path) -> list[align.AlignmentEdgeSet]:
    sets = []
    for a, b in _alignment_pairs(built):
        path = _pair_path(align_dir, a, b)
        if not path.exists():
            raise StageError(f"missing dictionary {path}; run the 'align' stage first")
        rows = tsvio.read_edge_tsv(path, value_type=int)
        sets.append(align.AlignmentEdgeSet(a, b, {(u, v): c for u, v, c in rows}))
    return sets


def _read_chi2_dicts(built, chi2_dir: Path) -> list[chi2.Chi2Dictionary]:
    dicts = []
    char_targets = [e for e, ed in sorted(built.editions.items())
                    if ed.mode == corpus.CHAR]
    for p in built.pivot_ids:
        for t in char_targets:
            path = _pair_path(chi2_dir, p, t)
            if not path.exists():
                raise StageError(f"missing dictionary {path}; run the 'chi2' stage first")
            result = chi2.Chi2Dictionary(p, t)
            prefix_p = (p + ":").encode()
            prefix_t = (t + ":").encode()
            for u, v, score in tsvio.read_edge_tsv(path, value_type=float):
                result.entries.append((u[len(prefix_p):], [(v[len(prefix_t):], score)]))
            dicts.append(result)
    return dicts


def stage_graph(cfg: PipelineConfig) -> None:
    runner = Runner(cfg)
    built = load_pipeline_corpus(cfg)
    align_dir = runner.stage_dir("align")
    chi2_dir = runner.stage_dir("chi2")
    align_inputs = [_pair_path(align_dir, a, b) for a, b in _alignment_pairs(built)]
    char_targets = [e for e, ed in sorted(built.editions.items())
                    if ed.mode == corpus.CHAR]
    chi2_inputs = [_pair_path(chi2_dir, p, t)
                   for p in built.pivot_ids for t in char_targets]
    inputs = align_inputs + chi2_inputs + [runner.stage_dir("ingest") / "split.json"]
    config = {"denominator": cfg.adjacency_denominator}
    if runner.up_to_date("graph", inputs, config):
        log.info("graph: up to date, skipping")
        return
    runner.require("align", *align_inputs)
    if chi2_inputs:
        runner.require("chi2", *chi2_inputs)

    sets = _read_alignment_sets(built, align_dir)
    dicts = _read_chi2_dicts(built, chi2_dir) if chi2_inputs else []
    g = graph.assemble(built.pivot_ids, set(built.editions), sets, dicts)
    cooc = graph.pivot_cooccurrence_counts(built, g, built.train_ids)
    freqs = None
    if cfg.adjacency_denominator == "minfreq":
        freqs = {}
        for pid in built.pivot_ids:
            for u, verses in graph.unit_verse_sets(
                    built.editions[pid], built.train_ids).items():
                freqs[u] = len(verses)
    adjacency = graph.normalize(g, cooc, freqs, cfg.adjacency_denominator)

    out = runner.stage_dir("graph")
    graph.write_graph(out / "graph.tsv", g)
    tsvio.write_edge_tsv(out / "adjacency.tsv",
                         [(u, v, i) for (u, v), i in adjacency.values.items()])
    runner.finish("graph", inputs, config,
                  [out / "graph.tsv", out / "adjacency.tsv"])
    log.info("graph: %d units, %d normalized pivot edges",
             len(list(g.units())), len(adjacency.values))


def stage_concepts(cfg: PipelineConfig) -> None:
    runner = Runner(cfg)
    wanted = [m for m in cfg.methods if m in CONCEPT_METHODS]
    if not wanted:
        log.info("concepts: no concept methods configured")
        return
    graph_path = runner.stage_dir("graph") / "graph.tsv"
    adj_path = runner.stage_dir("graph") / "adjacency.tsv"
    inputs = [graph_path, adj_path, runner.stage_dir("ingest") / "split.json"]
    config = {"theta": cfg.theta, "nu": cfg.nu, "sample_count": cfg.sample_count,
              "methods": sorted(wanted), "seed": cfg.stage_seed("concepts")}
    if runner.up_to_date("concepts", inputs, config):
        log.info("concepts: up to date, skipping")
        return
    runner.require("graph", graph_path, adj_path)
    g = graph.read_graph(graph_path)
    adjacency = graph.NormalizedAdjacency(
        {(u, v): s for u, v, s in tsvio.read_edge_tsv(adj_path, value_type=float)})

    out = runner.stage_dir("concepts")
    outputs = []
    nt_concepts = None
    for method in wanted:
        if method == "CLIQUE":
            found = concepts.induce_clique_concepts(adjacency, cfg.theta, cfg.nu)
            found = concepts.project_concepts(found, g, cfg.nu)
        elif method == "NT" or method in NT_VARIANTS:
            if nt_concepts is None:
                nt_concepts = concepts.induce_target_neighborhoods(g)
            if method == "NT":
                found = nt_concepts
            else:
                found = concepts.filter_nt(nt_concepts, g, NT_VARIANTS[method])
        elif method == "SAMPLE":
            built = load_pipeline_corpus(cfg)
            found = concepts.induce_sample_concepts(
                built, cfg.sample_count, seed=cfg.stage_seed("concepts"))
        path = out / f"{method}.tsv"
        concepts.write_concepts(path, found)
        outputs.append(path)
        log.info("concepts: %s -> %d concepts", method, len(found))
    runner.finish("concepts", inputs, config, outputs)


def stage_corpus(cfg: PipelineConfig) -> None:
    runner = Runner(cfg)
    built = load_pipeline_corpus(cfg)
    concept_methods = [m for m in cfg.methods if m in CONCEPT_METHODS]
    inputs = [runner.stage_dir("ingest") / "split.json"]
    inputs += [runner.stage_dir("concepts") / f"{m}.tsv" for m in concept_methods]
    spec_seed = cfg.stage_seed("corpus")
    config = {"target_size": cfg.target_size, "max_line_units": cfg.max_line_units,
              "bow_factor": cfg.bow_factor, "seed": spec_seed,
              "methods": sorted(cfg.methods)}
    if runner.up_to_date("corpus", inputs, config):
        log.info("corpus: up to date, skipping")
        return
    for m in concept_methods:
        runner.require("concepts", runner.stage_dir("concepts") / f"{m}.tsv")

    freqs = pseudocorpus.unit_frequencies(built, sorted(built.train_ids))
    hapax = pseudocorpus.hapax_units(freqs)
    out = runner.stage_dir("corpus")
    outputs = []
    for method in cfg.methods:
        if method == "RTSIMPLE":
            continue
        path = out / f"{method}.txt"
        spec = pseudocorpus.CorpusSpec(
            target_size=cfg.target_size, max_line_units=cfg.max_line_units,
            shuffle_seed=spec_seed, bow_factor=cfg.bow_factor,
            hapax_filter=method not in ("SAMPLE", "CLIQUE"))
        with tsvio.atomic_write(path) as fh:
            if method in CONCEPT_METHODS:
                found = concepts.read_concepts(runner.stage_dir("concepts") / f"{method}.tsv")
                stats = pseudocorpus.emit_concept_corpus(found, spec, fh, hapax)
            elif method == "S-ID":
                stats = pseudocorpus.emit_sid_corpus(built, sorted(built.train_ids),
                                                     fh, hapax)
            elif method == "BOW":
                stats = pseudocorpus.emit_bow_corpus(built, sorted(built.train_ids),
                                                     spec, fh, hapax)
            else:
                raise StageError(f"unknown method {method}")
        outputs.append(path)
        log.info("corpus: %s -> %s", method, stats)
    runner.finish("corpus", inputs, config, outputs)


def stage_train(cfg: PipelineConfig) -> None:
    runner = Runner(cfg)
    methods = [m for m in cfg.methods if m != "RTSIMPLE"]
    corpus_dir = runner.stage_dir("corpus")
    inputs = [corpus_dir / f"{m}.txt" for m in methods]
    seed = cfg.stage_seed("train")
    config = {"dim": cfg.dim, "window": cfg.window, "negatives": cfg.negatives,
              "epochs": cfg.epochs, "sid_epochs": cfg.sid_epochs,
              "learning_rate": cfg.learning_rate, "subsample": cfg.subsample,
              "min_count": cfg.vocab_min_count, "seed": seed}
    if runner.up_to_date("train", inputs, config):
        log.info("train: up to date, skipping")
        return
    runner.require("corpus", *inputs)
    out = runner.stage_dir("train")
    outputs = []
    for method, source in zip(methods, inputs):
        train_cfg = embed.TrainConfig(
            dim=cfg.dim, window=cfg.window, negatives=cfg.negatives,
            epochs=cfg.sid_epochs if method == "S-ID" else cfg.epochs,
            learning_rate=cfg.learning_rate,
            min_lr_fraction=cfg.min_lr_fraction, subsample=cfg.subsample,
            min_count=cfg.vocab_min_count, seed=seed,
            workers=cfg.resolved_workers())
        space = embed.train_sgns(source, train_cfg)
        path = out / f"{method}.vec"
        space.save(path)
        outputs.append(path)
        log.info("train: %s -> %d units, final loss %.4f", method,
                 len(space.units), space.epoch_losses[-1])
    runner.finish("train", inputs, config, outputs)


def _resolve_query_edition(cfg: PipelineConfig, built) -> str:
    if cfg.query_edition:
        return cfg.query_edition
    non_pivot = built.non_pivot_ids()
    if not non_pivot:
        raise StageError("no non-pivot edition available as query edition")
    return non_pivot[0]


def _load_queries(cfg: PipelineConfig) -> list[bytes]:
    if cfg.query_file:
        return evaluate.load_queries(cfg.query_file)
    ref = resources.files("conceptvec").joinpath("data/queries_english.txt")
    return [line.strip().encode() for line in
            ref.read_text(encoding="utf-8").splitlines() if line.strip()]


def _char_eval_inputs(cfg: PipelineConfig, built, query_edition: str,
                      queries: list[bytes], lemma_table):
    """Anchor word queries to n-gram units and build their ground truths."""
    ed = built.editions[query_edition]
    language_ids = cfg.query_language_editions or [query_edition]
    eds = [built.editions[e] for e in language_ids]
    ngram_counts, word_counts = evaluate.char_sequence_counts(eds, ed.ngram_order)
    anchors: list[bytes] = []
    truths = {}
    for q in queries:
        strict = evaluate.ground_truth_char(q, lemma_table, ngram_counts,
                                            word_counts, evaluate.SIGMA_STRICT)
        relaxed = evaluate.ground_truth_char(q, lemma_table, ngram_counts,
                                             word_counts, evaluate.SIGMA_RELAXED)
        anchor = evaluate.char_query_anchor(q, lemma_table, ngram_counts,
                                            word_counts, strict)
        if anchor is None or anchor in truths:
            continue
        anchors.append(anchor)
        truths[anchor] = (strict, relaxed)
    return anchors, truths


def stage_eval(cfg: PipelineConfig) -> None:
    runner = Runner(cfg)
    built = load_pipeline_corpus(cfg)
    trained = [m for m in cfg.methods if m != "RTSIMPLE"]
    train_dir = runner.stage_dir("train")
    inputs = [train_dir / f"{m}.vec" for m in trained]
    if "RTSIMPLE" in cfg.methods:
        inputs += [_pair_path(runner.stage_dir("align"), a, b)
                   for a, b in _alignment_pairs(built)]
    for extra in (cfg.query_file, cfg.lemma_file, cfg.sentiment_labels):
        if extra:
            inputs.append(Path(extra))
    config = {"settings": cfg.eval_settings, "query_edition": cfg.query_edition,
              "sentiment": bool(cfg.sentiment_labels),
              "seed": cfg.stage_seed("eval")}
    if runner.up_to_date("eval", inputs, config):
        log.info("eval: up to date, skipping")
        return
    if trained:
        runner.require("train", *[train_dir / f"{m}.vec" for m in trained])

    query_edition = _resolve_query_edition(cfg, built)
    queries = _load_queries(cfg)
    lemma_table = (evaluate.load_lemma_table(cfg.lemma_file)
                   if cfg.lemma_file else None)
    editions = sorted(built.editions)
    settings = {name: evaluate.SETTINGS[name] for name in cfg.eval_settings}
    labels = (senti.load_sentiment_labels(cfg.sentiment_labels)
              if cfg.sentiment_labels else None)

    out = runner.stage_dir("eval")
    outputs = []
    for method in cfg.methods:
        if method == "RTSIMPLE":
            lookup = evaluate.DictionaryLookup()
            for a, b in _alignment_pairs(built):
                rows = tsvio.read_edge_tsv(
                    _pair_path(runner.stage_dir("align"), a, b), value_type=int)
                lookup.add_dictionary(a, b, rows)
            char_targets = [e for e, ed in sorted(built.editions.items())
                            if ed.mode == corpus.CHAR]
            for p in built.pivot_ids:
                for t in char_targets:
                    path = _pair_path(runner.stage_dir("chi2"), p, t)
                    if path.exists():
                        lookup.add_dictionary(
                            p, t, tsvio.read_edge_tsv(path, value_type=float))
            rt_queries = queries
            char_truth = None
            if built.editions[query_edition].mode == corpus.CHAR:
                rt_queries, char_truth = _char_eval_inputs(
                    cfg, built, query_edition, queries, lemma_table)
            report = evaluate.evaluate_rtsimple(
                lookup, rt_queries, query_edition, built.pivot_ids, editions,
                lemma_table, char_truth)
            senti_result = None
        else:
            space = embed.load_space(train_dir / f"{method}.vec")
            char_truth = None
            method_queries = queries
            if built.editions[query_edition].mode == corpus.CHAR:
                method_queries, char_truth = _char_eval_inputs(
                    cfg, built, query_edition, queries, lemma_table)
            report = evaluate.evaluate_roundtrip(
                space, method_queries, query_edition, editions, lemma_table,
                settings, char_truth)
            senti_result = None
            if labels:
                train_edition = cfg.sentiment_train_edition or query_edition
                senti_result = senti.evaluate_sentiment(
                    space, built, labels, train_edition,
                    reg_lambda=cfg.sentiment_reg_lambda,
                    epochs=cfg.sentiment_epochs, seed=cfg.stage_seed("eval"))
        summary = {
            "method": method,
            "coverage": report.coverage,
            "n_queries": report.n_queries,
            "settings": {
                name: {"mean": r.mean, "median": r.median}
                for name, r in report.settings.items()
            },
            "sentiment": senti_result,
        }
        path = out / f"{method}.json"
        with tsvio.atomic_write(path) as fh:
            fh.write(json.dumps(summary, indent=2, sort_keys=True).encode())
        outputs.append(path)
        per_edition_path = out / f"{method}_per_edition.tsv"
        rows = []
        for name, r in report.settings.items():
            for e, value in r.per_edition.items():
                rows.append((name.encode(), e.encode(), value))
        tsvio.write_edge_tsv(per_edition_path, rows)
        outputs.append(per_edition_path)
        log.info("eval: %s %s", method, summary["settings"])
    runner.finish("eval", inputs, config, outputs)


def _format_cell(value) -> str:
    if value is None:
        return "n/a"
    return f"{100 * value:.0f}"


def stage_report(cfg: PipelineConfig) -> None:
    runner = Runner(cfg)
    eval_dir = runner.stage_dir("eval")
    inputs = [eval_dir / f"{m}.json" for m in cfg.methods]
    config = {"methods": sorted(cfg.methods)}
    if runner.up_to_date("report", inputs, config):
        log.info("report: up to date, skipping")
        return
    runner.require("eval", *inputs)
    summaries = []
    for method in sorted(cfg.methods, key=METHOD_ORDER.index):
        with open(eval_dir / f"{method}.json", "r", encoding="utf-8") as fh:
            summaries.append(json.load(fh))

    setting_names = list(cfg.eval_settings)
    header = ["method"]
    for name in setting_names:
        header += [f"{name}_mean", f"{name}_median"]
    header += ["N", "sent_pos", "sent_neg"]

    rows = []
    for summary in summaries:
        row = [summary["method"]]
        for name in setting_names:
            entry = summary["settings"].get(name)
            row.append(_format_cell(entry["mean"]) if entry else "n/a")
            row.append(_format_cell(entry["median"]) if entry else "n/a")
        row.append(str(summary["coverage"]))
        sent = summary.get("sentiment")
        row.append(_format_cell(sent["pos"]) if sent else "n/a")
        row.append(_format_cell(sent["neg"]) if sent else "n/a")
        rows.append(row)

    out = runner.stage_dir("report")
    tsv_path = out / "report.tsv"
    with tsvio.atomic_write(tsv_path) as fh:
        fh.write(("\t".join(header) + "\n").encode())
        for row in rows:
            fh.write(("\t".join(row) + "\n").encode())

    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) if rows else len(header[i])
              for i in range(len(header))]
    txt_path = out / "report.txt"
    with tsvio.atomic_write(txt_path) as fh:
        fh.write((" ".join(h.rjust(w) for h, w in zip(header, widths)) + "\n").encode())
        for row in rows:
            fh.write((" ".join(c.rjust(w) for c, w in zip(row, widths)) + "\n").encode())

    outputs = [tsv_path, txt_path]
    outputs += _delta_reports(cfg, out)
    runner.finish("report", inputs, config, outputs)
    with open(txt_path, "rb") as fh:
        sys.stdout.write(fh.read().decode())


def _delta_reports(cfg: PipelineConfig, out: Path) -> list[Path]:
    """Per-edition mean differences of the reference method vs the others."""
    runner = Runner(cfg)
    eval_dir = runner.stage_dir("eval")
    ref = cfg.delta_reference
    ref_path = eval_dir / f"{ref}_per_edition.tsv"
    if ref not in cfg.methods or not ref_path.exists():
        return []
    setting = b"R1" if "R1" in cfg.eval_settings else cfg.eval_settings[0].encode()
    ref_rows = {e: v for s, e, v in tsvio.read_edge_tsv(ref_path, value_type=float)
                if s == setting}
    outputs = []
    for method in cfg.methods:
        if method == ref:
            continue
        path = eval_dir / f"{method}_per_edition.tsv"
        if not path.exists():
            continue
        other = {e: v for s, e, v in tsvio.read_edge_tsv(path, value_type=float)
                 if s == setting}
        rows = [(e, method.encode(), ref_rows[e] - other.get(e, 0.0))
                for e in ref_rows]
        delta_path = out / f"delta_{ref}_vs_{method}.tsv"
        tsvio.write_edge_tsv(delta_path, rows)
        outputs.append(delta_path)
    return outputs


STAGE_FUNCS = {
    "ingest": stage_ingest,
    "align": stage_align,
    "chi2": stage_chi2,
    "graph": stage_graph,
    "concepts": stage_concepts,
    "corpus": stage_corpus,
    "train": stage_train,
    "eval": stage_eval,
    "report": stage_report,
}


def run_stage(stage: str, cfg: PipelineConfig) -> None:
    if stage not in STAGE_FUNCS:
        raise StageError(f"unknown stage {stage!r}")
    STAGE_FUNCS[stage](cfg)


def run_pipeline(cfg: PipelineConfig) -> None:
    for stage in STAGES:
        run_stage(stage, cfg)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="conceptvec",
        description="Concept-based multilingual embedding pipeline")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in STAGES + ("pipeline",):
        p = sub.add_parser(name, help=f"run the {name} stage"
                           if name != "pipeline" else "run all stages")
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument("--out-dir", default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="override any config field (repeatable)")

    toy_parser = sub.add_parser("make-toy", help="write a synthetic cipher corpus")
    toy_parser.add_argument("out_dir")
    toy_parser.add_argument("--editions", type=int, default=12)
    toy_parser.add_argument("--verses", type=int, default=2000)
    toy_parser.add_argument("--vocab", type=int, default=500)
    toy_parser.add_argument("--seed", type=int, default=0)
    toy_parser.add_argument("--drop-fraction", type=float, default=0.0)
    toy_parser.add_argument("--token-noise", type=float, default=0.0)

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "make-toy":
        tc = toymod.make_cipher_corpus(
            args.out_dir, num_editions=args.editions, num_verses=args.verses,
            vocab_size=args.vocab, seed=args.seed,
            drop_fraction=args.drop_fraction, token_noise=args.token_noise)
        print(f"wrote {len(tc.edition_ids)} editions to {tc.directory}")
        print(f"manifest: {tc.manifest_path}")
        return 0

    overrides = {}
    for item in args.overrides:
        key, sep, value = item.partition("=")
        if not sep:
            parser.error(f"--set needs KEY=VALUE, got {item!r}")
        try:
            overrides[key] = json.loads(value)
        except json.JSONDecodeError:
            overrides[key] = value
    cfg = load_config(args.config, out_dir=args.out_dir, workers=args.workers,
                      seed=args.seed, **overrides)
    try:
        if args.command == "pipeline":
            run_pipeline(cfg)
        else:
            run_stage(args.command, cfg)
    except StageError as exc:
        parser.exit(2, f"error: {exc}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
