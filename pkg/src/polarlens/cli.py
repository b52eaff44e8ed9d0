"""`polarlens` command line: orchestrates harvesting, splitting, knowledge
acquisition, encoding, training, and evaluation from one config file.

Exit codes: 0 success, 1 config/validation, 2 partial data failures, 3 runtime.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import corpus as corpus_mod
from . import evaluation as eval_mod
from . import harvest as harvest_mod
from . import knowledge as knowledge_mod
from . import model as model_mod
from .config import ConfigError, PipelineConfig
from .corpus import Split, load_corpus, save_corpus
from .embed import EmbeddingStore, MockEncoder
from .knowledge import RELATION_ORDER, KnowledgeCache

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2
EXIT_RUNTIME = 3

logger = logging.getLogger("polarlens")


class _JsonLogHandler(logging.StreamHandler):
    def emit(self, record):
        payload = {"level": record.levelname.lower(), "logger": record.name, "msg": record.getMessage()}
        self.stream.write(json.dumps(payload, ensure_ascii=False) + "\n")


def _setup_logging():
    root = logging.getLogger()
    if not any(isinstance(h, _JsonLogHandler) for h in root.handlers):
        handler = _JsonLogHandler(sys.stderr)
        root.addHandler(handler)
        root.setLevel(logging.INFO)


def _fail(code: int, message: str):
    logger.error(message)
    sys.exit(code)


def _load_config(config_path, seed) -> PipelineConfig:
    try:
        return PipelineConfig.load(config_path, seed_override=seed)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, f"config error: {exc}")


@click.group()
def main():
    """Political-polarity prediction pipeline for multilingual headlines."""
    _setup_logging()


_config_opt = click.option("--config", "config_path", required=True, type=click.Path())
_seed_opt = click.option("--seed", type=int, default=None, help="Override the config seed.")
_dry_run_opt = click.option("--dry-run", is_flag=True, help="Validate inputs without side effects.")


def _build_news_client(cfg: PipelineConfig):
    fixture_dir = cfg.harvest.get("fixture_dir")
    if fixture_dir:
        root = Path(fixture_dir)
        root = root if root.is_absolute() else cfg.base_dir / root
        return harvest_mod.FixtureNewsClient(root)
    url = cfg.harvest.get("provider_url")
    if url:
        return harvest_mod.HttpNewsClient(url)
    raise ConfigError("harvest needs fixture_dir or provider_url")


def _harvest_window(cfg: PipelineConfig):
    from datetime import date

    try:
        start = date.fromisoformat(str(cfg.harvest["start"]))
        end = date.fromisoformat(str(cfg.harvest["end"]))
    except KeyError as exc:
        raise ConfigError(f"harvest window requires start and end dates (missing {exc})") from None
    return start, end


@main.command()
@_config_opt
@_seed_opt
@_dry_run_opt
def harvest(config_path, seed, dry_run):
    """Crawl headline fixtures/providers and write the labeled corpus."""
    cfg = _load_config(config_path, seed)
    try:
        ratings_path = cfg.path("ratings")
        corpus_path = cfg.path("corpus")
        start, end = _harvest_window(cfg)
        ratings = harvest_mod.load_ratings(ratings_path)
        client = _build_news_client(cfg)
    except (ConfigError, harvest_mod.HarvestError) as exc:
        _fail(EXIT_CONFIG, f"harvest validation failed: {exc}")
    if dry_run:
        logger.info("harvest dry-run ok (%d ratings)", len(ratings))
        return
    records = []
    failures = 0
    for rating in harvest_mod.filter_questionable(ratings):
        try:
            query = harvest_mod.build_temporal_query(
                rating.outlet, rating.language, cfg.harvest.get("categories"), start, end
            )
            payloads = harvest_mod.fetch_headlines(client, query)
            records.extend(harvest_mod.label_headlines(payloads, rating))
        except harvest_mod.HarvestError as exc:
            logger.error("harvest failed for outlet %s: %s", rating.outlet, exc)
            failures += 1
    try:
        out = corpus_mod.Corpus(records=records, provenance=f"harvest:{ratings_path.name}")
    except corpus_mod.CorpusError as exc:
        _fail(EXIT_RUNTIME, f"harvest produced an invalid corpus: {exc}")
    save_corpus(out, corpus_path)
    logger.info("wrote %d records to %s", len(out), corpus_path)
    if failures:
        sys.exit(EXIT_PARTIAL)


@main.command()
@_config_opt
@_seed_opt
@_dry_run_opt
def split(config_path, seed, dry_run):
    """Assign stratified train/valid/test splits."""
    cfg = _load_config(config_path, seed)
    try:
        corpus = load_corpus(cfg.path("corpus"))
        ratios = cfg.split_ratios()
        key = cfg.split_key()
    except (ConfigError, corpus_mod.CorpusError) as exc:
        _fail(EXIT_CONFIG, f"split validation failed: {exc}")
    if dry_run:
        logger.info("split dry-run ok (%d records)", len(corpus))
        return
    try:
        out = corpus_mod.stratified_split(corpus, ratios=ratios, seed=cfg.seed, key=key)
    except corpus_mod.CorpusError as exc:
        _fail(EXIT_RUNTIME, f"split failed: {exc}")
    save_corpus(out, cfg.path("corpus"))
    logger.info("assigned splits for %d records", len(out))


@main.command()
@_config_opt
@_seed_opt
@_dry_run_opt
def stats(config_path, seed, dry_run):
    """Print corpus statistics; write the JSON mirror when configured."""
    cfg = _load_config(config_path, seed)
    try:
        corpus = load_corpus(cfg.path("corpus"))
    except (ConfigError, corpus_mod.CorpusError) as exc:
        _fail(EXIT_CONFIG, f"stats validation failed: {exc}")
    result = corpus_mod.corpus_stats(corpus)
    click.echo(result.to_table())
    stats_path = cfg.path("stats", required=False)
    if stats_path and not dry_run:
        stats_path.write_text(json.dumps(result.to_json_obj(), indent=2) + "\n", encoding="utf-8")
        logger.info("wrote stats to %s", stats_path)


def _build_translation_client(cfg: PipelineConfig):
    spec = cfg.clients.get("translation", "identity")
    if spec == "identity":
        return knowledge_mod.IdentityTranslationClient()
    if spec.startswith("tsv:"):
        p = Path(spec[4:])
        return knowledge_mod.TsvFixtureTranslationClient(p if p.is_absolute() else cfg.base_dir / p)
    if spec.startswith("http:") or spec.startswith("https:"):
        return knowledge_mod.HttpTranslationClient(spec)
    raise ConfigError(f"unknown translation client spec: {spec!r}")


def _build_comet_client(cfg: PipelineConfig):
    spec = cfg.clients.get("comet")
    if spec is None:
        raise ConfigError("clients.comet is required")
    if spec.startswith("fixture:"):
        p = Path(spec[8:])
        return knowledge_mod.JsonFixtureCometClient(p if p.is_absolute() else cfg.base_dir / p)
    if spec.startswith("http:") or spec.startswith("https:"):
        return knowledge_mod.HttpCometClient(spec)
    raise ConfigError(f"unknown comet client spec: {spec!r}")


@main.command()
@_config_opt
@_seed_opt
@_dry_run_opt
@click.option("--parallelism", type=int, default=1)
def knowledge(config_path, seed, dry_run, parallelism):
    """Acquire commonsense knowledge for every corpus record (TRT)."""
    cfg = _load_config(config_path, seed)
    try:
        corpus = load_corpus(cfg.path("corpus"))
        tr = _build_translation_client(cfg)
        kg = _build_comet_client(cfg)
        store_path = cfg.path("knowledge_store")
        cache_path = cfg.path("knowledge_cache", required=False)
    except (ConfigError, corpus_mod.CorpusError, knowledge_mod.KnowledgeError) as exc:
        _fail(EXIT_CONFIG, f"knowledge validation failed: {exc}")
    if dry_run:
        logger.info("knowledge dry-run ok (%d records)", len(corpus))
        return
    cache = KnowledgeCache(cache_path)
    result = knowledge_mod.batch_acquire(corpus, tr, kg, cache=cache, parallelism=parallelism)
    knowledge_mod.save_knowledge_store(store_path, result.entries, model_id=kg.model_id)
    logger.info("wrote %d knowledge entries to %s", len(result.entries), store_path)
    if result.failures:
        logger.error("%d record(s) failed knowledge acquisition", len(result.failures))
        sys.exit(EXIT_PARTIAL)


@main.command()
@_config_opt
@_seed_opt
@_dry_run_opt
@click.option("--source", type=click.Choice(["mock", "import"]), default="mock")
@click.option("--import-path", type=click.Path(), default=None, help="EMB1/JSONL file for --source import.")
def encode(config_path, seed, dry_run, source, import_path):
    """Encode headlines and knowledge into embedding stores."""
    cfg = _load_config(config_path, seed)
    try:
        corpus = load_corpus(cfg.path("corpus"))
        head_path = cfg.path("headline_embeddings")
        knwl_path = cfg.path("knowledge_embeddings", required=False)
        cache_path = cfg.path("knowledge_cache", required=False)
    except (ConfigError, corpus_mod.CorpusError) as exc:
        _fail(EXIT_CONFIG, f"encode validation failed: {exc}")
    if dry_run:
        logger.info("encode dry-run ok")
        return
    if source == "import":
        if not import_path:
            _fail(EXIT_CONFIG, "--source import requires --import-path")
        store = EmbeddingStore.load(import_path)
        store.save(head_path)
        logger.info("imported %d vectors (dim %d)", len(store), store.dim)
        return
    dim = int(cfg.provider.get("dim", 16))
    encoder = MockEncoder(dim=dim, seed=cfg.seed)
    head_store = EmbeddingStore(dim)
    for rec in corpus:
        head_store.put(rec.id, encoder.encode(rec.text))
    head_store.save(head_path)
    logger.info("wrote %d headline vectors to %s", len(head_store), head_path)
    if knwl_path and cache_path and Path(cache_path).exists():
        cache = KnowledgeCache(cache_path)
        knwl_store = EmbeddingStore(dim)
        model_id = cfg.clients.get("comet_model_id", "comet-fixture")
        for rec in corpus:
            entry = cache.get(rec.id, model_id)
            if entry is None:
                continue
            bundle = entry.bundle()
            for relation in RELATION_ORDER:
                knwl_store.put(f"{rec.id}#{relation.value}", encoder.encode(bundle.slot(relation)))
        knwl_store.save(knwl_path)
        logger.info("wrote %d knowledge vectors to %s", len(knwl_store), knwl_path)


def _dataset_for(cfg, corpus, splits, head_store, knwl_store, dim):
    """Assemble (H, K, y, ids) arrays for records in the given splits."""
    H, K, y, ids = [], [], [], []
    for rec in corpus:
        if rec.split not in splits:
            continue
        H.append(head_store.lookup(rec.id))
        rows = []
        for relation in RELATION_ORDER:
            key = f"{rec.id}#{relation.value}"
            rows.append(knwl_store.lookup(key) if (knwl_store and key in knwl_store) else np.zeros(dim, dtype=np.float32))
        K.append(np.stack(rows))
        y.append(rec.label.value)
        ids.append(rec.id)
    if not y:
        raise ConfigError(f"no records in splits {[s.value for s in splits]}")
    return np.array(H), np.array(K), np.array(y), ids


def _train_config(cfg: PipelineConfig, mode) -> model_mod.TrainConfig:
    params = dict(cfg.train)
    params.pop("modes", None)
    params["mode"] = mode
    params.setdefault("seed", cfg.seed)
    return model_mod.TrainConfig(**params)


def _run_mode(cfg, mode, corpus, head_store, knwl_store, dim):
    train_cfg = _train_config(cfg, mode)
    train_data = _dataset_for(cfg, corpus, {Split.TRAIN}, head_store, knwl_store, dim)
    valid_data = None
    if any(rec.split is Split.VALID for rec in corpus):
        valid_data = _dataset_for(cfg, corpus, {Split.VALID}, head_store, knwl_store, dim)
    trained = model_mod.train(
        (train_data[0], train_data[1], train_data[2]),
        train_cfg,
        valid=(valid_data[0], valid_data[1], valid_data[2]) if valid_data else None,
    )
    return trained


def _evaluate_model(trained, corpus, head_store, knwl_store, dim):
    th, tk, ty, ids = _dataset_for(None, corpus, {Split.TEST}, head_store, knwl_store, dim)
    probs = trained.model.predict_proba(th, tk)
    preds = np.argmax(probs, axis=1)
    return ty, preds, probs, ids


def _load_stores(cfg):
    head_store = EmbeddingStore.load(cfg.path("headline_embeddings"))
    knwl_path = cfg.path("knowledge_embeddings", required=False)
    knwl_store = EmbeddingStore.load(knwl_path) if knwl_path and Path(knwl_path).exists() else None
    return head_store, knwl_store


@main.command()
@_config_opt
@_seed_opt
@_dry_run_opt
@click.option("--mode", type=click.Choice([m.value for m in model_mod.TrainMode]), default=None)
def train(config_path, seed, dry_run, mode):
    """Train one mode and write its checkpoint."""
    cfg = _load_config(config_path, seed)
    try:
        corpus = load_corpus(cfg.path("corpus"))
        head_store, knwl_store = _load_stores(cfg)
        checkpoint_dir = cfg.path("checkpoints")
        mode = model_mod.TrainMode(mode or cfg.train.get("mode", "headline_plus_attended_knowledge"))
    except (ConfigError, corpus_mod.CorpusError, Exception) as exc:
        _fail(EXIT_CONFIG, f"train validation failed: {exc}")
    if dry_run:
        logger.info("train dry-run ok")
        return
    checkpoint_dir.mkdir(parents=True, exist_ok=True)
    try:
        trained = _run_mode(cfg, mode, corpus, head_store, knwl_store, head_store.dim)
    except model_mod.TrainingError as exc:
        _fail(EXIT_RUNTIME, f"training failed: {exc}")
    out_path = checkpoint_dir / f"{mode.value}.plm1"
    model_mod.save_checkpoint(trained, out_path)
    logger.info("wrote checkpoint %s (final loss %.4f)", out_path, trained.train_losses[-1] if trained.train_losses else float("nan"))


@main.command("eval")
@_config_opt
@_seed_opt
@_dry_run_opt
@click.option("--mode", type=click.Choice([m.value for m in model_mod.TrainMode]), required=True)
def eval_cmd(config_path, seed, dry_run, mode):
    """Evaluate a trained checkpoint on the test split."""
    cfg = _load_config(config_path, seed)
    try:
        corpus = load_corpus(cfg.path("corpus"))
        head_store, knwl_store = _load_stores(cfg)
        checkpoint = cfg.path("checkpoints") / f"{mode}.plm1"
        reports_dir = cfg.path("reports")
        if not checkpoint.exists():
            raise ConfigError(f"missing checkpoint: {checkpoint}")
    except (ConfigError, corpus_mod.CorpusError) as exc:
        _fail(EXIT_CONFIG, f"eval validation failed: {exc}")
    if dry_run:
        logger.info("eval dry-run ok")
        return
    reports_dir.mkdir(parents=True, exist_ok=True)
    trained = model_mod.load_checkpoint(checkpoint)
    ty, preds, probs, ids = _evaluate_model(trained, corpus, head_store, knwl_store, head_store.dim)
    eval_mod.save_predictions(reports_dir / f"{mode}.predictions.jsonl", zip(ids, preds, probs))
    report = eval_mod.metric_report(ty, preds)
    (reports_dir / f"{mode}.report.json").write_text(
        json.dumps(report.to_json_obj(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    click.echo(eval_mod.report_table({mode: report}))


@main.command()
@_config_opt
@_seed_opt
@_dry_run_opt
def experiment(config_path, seed, dry_run):
    """Train and evaluate all four modes; emit overall and per-language reports."""
    cfg = _load_config(config_path, seed)
    try:
        corpus = load_corpus(cfg.path("corpus"))
        head_store, knwl_store = _load_stores(cfg)
        checkpoint_dir = cfg.path("checkpoints")
        reports_dir = cfg.path("reports")
    except (ConfigError, corpus_mod.CorpusError) as exc:
        _fail(EXIT_CONFIG, f"experiment validation failed: {exc}")
    if dry_run:
        logger.info("experiment dry-run ok")
        return
    checkpoint_dir.mkdir(parents=True, exist_ok=True)
    reports_dir.mkdir(parents=True, exist_ok=True)
    overall = {}
    runs = {}
    for mode in model_mod.TrainMode:
        stage = f"train/{mode.value}"
        try:
            trained = _run_mode(cfg, mode, corpus, head_store, knwl_store, head_store.dim)
            model_mod.save_checkpoint(trained, checkpoint_dir / f"{mode.value}.plm1")
            stage = f"eval/{mode.value}"
            ty, preds, probs, ids = _evaluate_model(trained, corpus, head_store, knwl_store, head_store.dim)
        except Exception as exc:
            _fail(EXIT_RUNTIME, f"experiment stage {stage} failed: {exc}")
        eval_mod.save_predictions(reports_dir / f"{mode.value}.predictions.jsonl", zip(ids, preds, probs))
        overall[mode.value] = eval_mod.metric_report(ty, preds)
        runs[mode.value] = dict(zip(ids, (int(p) for p in preds)))
    overall_obj = {name: rep.to_json_obj() for name, rep in overall.items()}
    (reports_dir / "overall.json").write_text(
        json.dumps(overall_obj, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (reports_dir / "overall.txt").write_text(eval_mod.report_table(overall) + "\n", encoding="utf-8")
    test_records = [rec for rec in corpus if rec.split is Split.TEST]
    per_language = eval_mod.breakdown_with_rp(
        test_records, runs, baseline=model_mod.TrainMode.HEADLINE_ONLY.value
    )
    (reports_dir / "per_language.json").write_text(
        json.dumps(per_language, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    click.echo(eval_mod.report_table(overall))


@main.command()
@_config_opt
@_seed_opt
@_dry_run_opt
@click.option("--headline-id", default=None)
@click.option("--category", type=click.Choice([c.value for c in corpus_mod.TranslationErrorCategory]), default=None)
@click.option("--comment", default="")
@click.option("--list", "list_all", is_flag=True)
def annotate(config_path, seed, dry_run, headline_id, category, comment, list_all):
    """Record or list translation-error annotations."""
    cfg = _load_config(config_path, seed)
    try:
        corpus = load_corpus(cfg.path("corpus"))
        ann_path = cfg.path("annotations")
    except (ConfigError, corpus_mod.CorpusError) as exc:
        _fail(EXIT_CONFIG, f"annotate validation failed: {exc}")
    store = corpus_mod.AnnotationStore(ann_path, corpus_ids=corpus.ids())
    if list_all:
        for ann in store.annotations:
            click.echo(json.dumps(ann.to_json_obj(), ensure_ascii=False))
        return
    if not (headline_id and category):
        _fail(EXIT_CONFIG, "annotate requires --headline-id and --category (or --list)")
    if dry_run:
        logger.info("annotate dry-run ok")
        return
    try:
        store.annotate(
            corpus_mod.TranslationErrorAnnotation(
                headline_id=headline_id,
                category=corpus_mod.TranslationErrorCategory(category),
                comment=comment,
            )
        )
    except corpus_mod.CorpusError as exc:
        _fail(EXIT_RUNTIME, f"annotation failed: {exc}")
    logger.info("annotated %s as %s", headline_id, category)


if __name__ == "__main__":
    main()
