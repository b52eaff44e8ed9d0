"""One-shot exporters writing the core's interchange files.

Each exporter reads a corpus JSONL, runs the manifest's model over it, and
writes a file the core parses back: an EMB1 embedding store, a nested JSON
of commonsense inferences, or a translation TSV covering both directions of
the translate-retrieve-translate round trip.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from polarlens.corpus import load_corpus
from polarlens.embed import EmbeddingStore
from polarlens.knowledge import RELATION_ORDER, PIVOT_LANGUAGE

from . import backends
from .manifest import BridgeError

logger = logging.getLogger(__name__)


@dataclass
class ExportResult:
    written: int
    failures: list = field(default_factory=list)


def _load_manifest_corpus(manifest):
    if not manifest.corpus_path.exists():
        raise BridgeError(f"corpus not found: {manifest.corpus_path}")
    return load_corpus(manifest.corpus_path)


def export_embeddings(manifest, encoder=None, batch_size=64) -> ExportResult:
    """Encode every headline and write an EMB1 store keyed by record id.

    `encoder` maps a list of texts to an (n, dim) array; when omitted the
    manifest's real model is loaded. On memory exhaustion the batch size is
    halved down to single items before giving up.
    """
    if manifest.dim is None:
        raise BridgeError(f"provider {manifest.provider!r} is not an encoder")
    corpus = _load_manifest_corpus(manifest)
    if encoder is None:
        encoder = backends.load_encoder(manifest)
    store = EmbeddingStore(manifest.dim)
    records = list(corpus)
    pos = 0
    while pos < len(records):
        batch = records[pos:pos + batch_size]
        try:
            vectors = np.asarray(encoder([rec.text for rec in batch]))
        except MemoryError:
            if batch_size == 1:
                raise
            batch_size = max(1, batch_size // 2)
            logger.warning("encoder ran out of memory; retrying with batch size %d", batch_size)
            continue
        if vectors.shape != (len(batch), manifest.dim):
            raise BridgeError(
                f"encoder returned shape {vectors.shape}, expected ({len(batch)}, {manifest.dim})"
            )
        for rec, vec in zip(batch, vectors):
            store.put(rec.id, np.asarray(vec, dtype=np.float32))
        pos += len(batch)
    store.save(manifest.output_path)
    logger.info("wrote %d vectors (dim %d) to %s", len(store), store.dim, manifest.output_path)
    return ExportResult(written=len(store))


def export_inferences(manifest, generator=None, timeout_errors=(TimeoutError,)) -> ExportResult:
    """Generate all nine relation inferences per headline into fixture JSON.

    The output is the nested {text: {relation: inference}} mapping the core's
    fixture client reads. A generation failure leaves that slot empty rather
    than aborting the export. Keys are sorted so reruns are byte-identical.
    """
    corpus = _load_manifest_corpus(manifest)
    if generator is None:
        generator = backends.load_comet_generator(manifest)
    table = {}
    failures = []
    for rec in corpus:
        slots = {}
        for relation in RELATION_ORDER:
            try:
                slots[relation.value] = str(generator(rec.text, relation.value)).strip()
            except timeout_errors:
                slots[relation.value] = ""
                failures.append((rec.id, relation.value))
        table[rec.text] = slots
    manifest.output_path.write_text(
        json.dumps(table, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    logger.info("wrote %d inference sets to %s", len(table), manifest.output_path)
    return ExportResult(written=len(table), failures=failures)


def _tsv_safe(text):
    return text.replace("\t", " ").replace("\n", " ").replace("\r", " ")


def export_translations(manifest, translator=None, retries=3, sleep=None) -> ExportResult:
    """Translate each headline to the pivot language and back, writing a TSV.

    Rows are (source text, target language, translation); every headline
    yields a pivot row and a back-translation row so both directions of the
    round trip are covered. Throttling is retried with exponential backoff;
    rows that still fail are listed in a `.failed` sidecar, keeping the TSV
    itself parseable by the core.
    """
    corpus = _load_manifest_corpus(manifest)
    if translator is None:
        translator = backends.load_translator(manifest)
    kwargs = {"retries": retries}
    if sleep is not None:
        kwargs["sleep"] = sleep
    translate = backends.with_backoff(translator, **kwargs)
    rows = []
    failures = []
    for rec in corpus:
        try:
            pivot = translate(rec.text, rec.language, PIVOT_LANGUAGE)
            back = translate(pivot, PIVOT_LANGUAGE, rec.language)
        except Exception as exc:
            failures.append((rec.id, str(exc)))
            continue
        rows.append((_tsv_safe(rec.text), PIVOT_LANGUAGE, _tsv_safe(pivot)))
        rows.append((_tsv_safe(pivot), rec.language, _tsv_safe(back)))
    with manifest.output_path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write("\t".join(row) + "\n")
    if failures:
        sidecar = manifest.output_path.with_suffix(manifest.output_path.suffix + ".failed")
        with sidecar.open("w", encoding="utf-8") as fh:
            for rec_id, reason in failures:
                fh.write(json.dumps({"id": rec_id, "reason": reason}) + "\n")
        logger.error("%d headline(s) failed translation; see %s", len(failures), sidecar)
    logger.info("wrote %d translation rows to %s", len(rows), manifest.output_path)
    return ExportResult(written=len(rows), failures=failures)
