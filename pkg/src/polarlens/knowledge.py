"""Inferential commonsense knowledge: nine social-interaction relations,
translate-retrieve-translate acquisition, template rendering, and caching."""

from __future__ import annotations

import json
import logging
import threading
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

logger = logging.getLogger(__name__)

TEMPLATE_VERSION = "1"
PIVOT_LANGUAGE = "en"  # knowledge base is English-only; retrieval always pivots


class KnowledgeError(Exception):
    pass


class RelationType(Enum):
    """Nine social-interaction relation types, in canonical order."""

    X_ATTR = "xAttr"
    X_EFFECT = "xEffect"
    X_INTENT = "xIntent"
    X_NEED = "xNeed"
    X_REACT = "xReact"
    X_WANT = "xWant"
    O_EFFECT = "oEffect"
    O_REACT = "oReact"
    O_WANT = "oWant"


RELATION_ORDER = tuple(RelationType)
NUM_RELATIONS = len(RELATION_ORDER)


@dataclass(frozen=True)
class InferenceBundle:
    """One inference string per relation (k=1); empty string marks a failed slot."""

    headline_id: str
    source_text_en: str
    inferences: dict  # RelationType -> str

    def __post_init__(self):
        missing = set(RELATION_ORDER) - self.inferences.keys()
        if missing:
            raise KnowledgeError(f"bundle missing relation slots: {sorted(r.value for r in missing)}")

    def slot(self, relation: RelationType) -> str:
        return self.inferences[relation]

    def slots_in_order(self) -> list:
        return [self.inferences[r] for r in RELATION_ORDER]


@dataclass(frozen=True)
class ProcessedKnowledge:
    headline_id: str
    language: str
    text: str

    def to_json_obj(self, model_id: str, template_version: str = TEMPLATE_VERSION) -> dict:
        return {
            "headline_id": self.headline_id,
            "language": self.language,
            "text": self.text,
            "model_id": model_id,
            "template_version": template_version,
        }


class TranslationClient(ABC):
    @abstractmethod
    def translate(self, text: str, src: str, tgt: str) -> str:
        ...


class IdentityTranslationClient(TranslationClient):
    def translate(self, text, src, tgt):
        return text


class TsvFixtureTranslationClient(TranslationClient):
    """Lookup table from a TSV of (source text, target language, translation)."""

    def __init__(self, path):
        self.table = {}
        with Path(path).open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 3:
                    raise KnowledgeError(f"{path}:{lineno}: expected 3 tab-separated fields")
                src_text, tgt_lang, translation = parts
                self.table[(src_text, tgt_lang)] = translation

    def translate(self, text, src, tgt):
        try:
            return self.table[(text, tgt)]
        except KeyError:
            raise KnowledgeError(f"no fixture translation for {text!r} -> {tgt}") from None


class HttpTranslationClient(TranslationClient):
    def __init__(self, url: str, session=None):
        import requests

        self.url = url
        self.session = session or requests.Session()

    def translate(self, text, src, tgt):
        resp = self.session.post(self.url, json={"text": text, "src": src, "tgt": tgt}, timeout=60)
        resp.raise_for_status()
        return resp.json()["text"]


class CometClient(ABC):
    model_id: str = "comet"

    @abstractmethod
    def generate(self, headline_en: str, relation: RelationType, k: int = 1) -> list:
        """Return up to k inference strings for the relation."""


class JsonFixtureCometClient(CometClient):
    """Fixture generations keyed by (headline text, relation name)."""

    def __init__(self, path, model_id: str = "comet-fixture"):
        self.model_id = model_id
        with Path(path).open(encoding="utf-8") as fh:
            self.table = json.load(fh)

    def generate(self, headline_en, relation, k=1):
        slots = self.table.get(headline_en, {})
        value = slots.get(relation.value, "")
        if isinstance(value, str):
            value = [value] if value else []
        return value[:k]


class HttpCometClient(CometClient):
    def __init__(self, url: str, model_id: str = "comet-service", session=None):
        import requests

        self.url = url
        self.model_id = model_id
        self.session = session or requests.Session()

    def generate(self, headline_en, relation, k=1):
        resp = self.session.post(
            self.url, json={"text": headline_en, "relation": relation.value, "k": k}, timeout=60
        )
        resp.raise_for_status()
        return resp.json().get("inferences", [])


def retrieve_inferences(client: CometClient, headline_en: str, headline_id: str = "", k: int = 1) -> InferenceBundle:
    """Query the knowledge model once per relation, canonical order, keeping the
    top generation. A failed or empty relation yields an empty slot."""
    if not headline_en.strip():
        raise KnowledgeError("headline text must be non-empty")
    inferences = {}
    for relation in RELATION_ORDER:
        try:
            results = client.generate(headline_en, relation, k)
        except Exception as exc:
            logger.warning("generation failed for %s / %s: %s", headline_en, relation.value, exc)
            results = []
        inferences[relation] = results[0].strip() if results else ""
    return InferenceBundle(headline_id=headline_id, source_text_en=headline_en, inferences=inferences)


# Rendering clauses for the processed-knowledge paragraph. Each entry is
# (relation, connector); empty slots drop the clause and its connector.
_PERSON_X_CLAUSES = (
    (RelationType.X_ATTR, "is "),
    (RelationType.X_NEED, "needed "),
    (RelationType.X_INTENT, "intended "),
    (RelationType.X_EFFECT, ""),
    (RelationType.X_WANT, "wants "),
    (RelationType.X_REACT, "feels "),
)
_OTHERS_CLAUSES = (
    (RelationType.O_WANT, "want "),
    (RelationType.O_EFFECT, ""),
    (RelationType.O_REACT, "feel "),
)


def _render_sentence(subject: str, clauses, bundle: InferenceBundle) -> str:
    parts = [
        f"{connector}{bundle.slot(rel)}" for rel, connector in clauses if bundle.slot(rel)
    ]
    if not parts:
        return ""
    return f"{subject} " + ", ".join(parts) + "."


def process_inferences(bundle: InferenceBundle) -> ProcessedKnowledge:
    """Render a bundle as the fixed natural-language paragraph (English)."""
    sentences = [
        _render_sentence("PersonX", _PERSON_X_CLAUSES, bundle),
        _render_sentence("Others", _OTHERS_CLAUSES, bundle),
    ]
    text = " ".join(s for s in sentences if s)
    return ProcessedKnowledge(headline_id=bundle.headline_id, language=PIVOT_LANGUAGE, text=text)


@dataclass
class CacheEntry:
    headline_id: str
    language: str
    model_id: str
    template_version: str
    source_text_en: str
    inferences: dict          # relation name -> str
    processed_en: str
    processed_target: str

    def bundle(self) -> InferenceBundle:
        return InferenceBundle(
            headline_id=self.headline_id,
            source_text_en=self.source_text_en,
            inferences={RelationType(name): text for name, text in self.inferences.items()},
        )

    def processed(self) -> ProcessedKnowledge:
        return ProcessedKnowledge(self.headline_id, self.language, self.processed_target)


class KnowledgeCache:
    """JSONL cache keyed by (headline_id, model_id, template_version).

    Concurrent reads are lock-free once loaded; writes are serialized.
    """

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self._entries: dict = {}
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    obj = json.loads(line)
                    entry = CacheEntry(**obj)
                    self._entries[self._key(entry.headline_id, entry.model_id, entry.template_version)] = entry

    @staticmethod
    def _key(headline_id, model_id, template_version):
        return (headline_id, model_id, template_version)

    def get(self, headline_id, model_id, template_version=TEMPLATE_VERSION) -> Optional[CacheEntry]:
        return self._entries.get(self._key(headline_id, model_id, template_version))

    def put(self, entry: CacheEntry) -> None:
        with self._lock:
            self._entries[self._key(entry.headline_id, entry.model_id, entry.template_version)] = entry
            if self.path:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry.__dict__, ensure_ascii=False) + "\n")

    def __len__(self):
        return len(self._entries)


def acquire_knowledge_trt(
    headline,
    tr: TranslationClient,
    kg: CometClient,
    cache: Optional[KnowledgeCache] = None,
    k: int = 1,
    template_version: str = TEMPLATE_VERSION,
) -> ProcessedKnowledge:
    """Translate-Retrieve-Translate: headline -> English pivot -> knowledge
    generation -> rendered paragraph -> back to the headline language.

    Results are cached; a cache hit performs no client calls.
    """
    if cache is not None:
        hit = cache.get(headline.id, kg.model_id, template_version)
        if hit is not None:
            return hit.processed()
    text_en = tr.translate(headline.text, headline.language, PIVOT_LANGUAGE)
    bundle = retrieve_inferences(kg, text_en, headline_id=headline.id, k=k)
    processed_en = process_inferences(bundle)
    text_target = (
        tr.translate(processed_en.text, PIVOT_LANGUAGE, headline.language)
        if processed_en.text
        else ""
    )
    result = ProcessedKnowledge(headline.id, headline.language, text_target)
    if cache is not None:
        cache.put(
            CacheEntry(
                headline_id=headline.id,
                language=headline.language,
                model_id=kg.model_id,
                template_version=template_version,
                source_text_en=bundle.source_text_en,
                inferences={r.value: t for r, t in bundle.inferences.items()},
                processed_en=processed_en.text,
                processed_target=text_target,
            )
        )
    return result


@dataclass
class BatchResult:
    entries: dict = field(default_factory=dict)   # headline_id -> ProcessedKnowledge
    failures: dict = field(default_factory=dict)  # headline_id -> error message


def batch_acquire(corpus, tr, kg, cache: Optional[KnowledgeCache] = None, parallelism: int = 1) -> BatchResult:
    """Acquire knowledge for every record; per-record failures are collected,
    never fatal. Cached records are skipped, making the batch resumable."""
    result = BatchResult()

    def work(record):
        try:
            return record.id, acquire_knowledge_trt(record, tr, kg, cache), None
        except Exception as exc:
            logger.error("knowledge acquisition failed for %s: %s", record.id, exc)
            return record.id, None, str(exc)

    if parallelism <= 1:
        outcomes = [work(rec) for rec in corpus]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(work, list(corpus)))
    for rec_id, processed, error in outcomes:
        if error is None:
            result.entries[rec_id] = processed
        else:
            result.failures[rec_id] = error
    return result


def save_knowledge_store(path, entries, model_id: str, template_version: str = TEMPLATE_VERSION) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for headline_id in sorted(entries):
            fh.write(
                json.dumps(entries[headline_id].to_json_obj(model_id, template_version), ensure_ascii=False)
                + "\n"
            )


def load_knowledge_store(path) -> dict:
    path = Path(path)
    out = {}
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out[obj["headline_id"]] = ProcessedKnowledge(
                headline_id=obj["headline_id"], language=obj["language"], text=obj["text"]
            )
    return out
