"""Multilingual headline corpus: records, loading, stats, stratified splitting."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

logger = logging.getLogger(__name__)


class CorpusError(Exception):
    """Raised on malformed corpus input; carries file location where known."""


class BiasLabel(Enum):
    """Three-way political bias label; ordinal index is fixed."""

    LEFT_CENTER = 0
    LEAST_BIASED = 1
    RIGHT_CENTER = 2

    @property
    def canonical(self) -> str:
        return _LABEL_STRINGS[self]

    @classmethod
    def parse(cls, raw: str) -> "BiasLabel":
        key = raw.strip().lower().replace("_", "-").replace(" ", "-")
        try:
            return _LABEL_BY_STRING[key]
        except KeyError:
            raise CorpusError(f"unknown bias label: {raw!r}") from None


_LABEL_STRINGS = {
    BiasLabel.LEFT_CENTER: "left-center",
    BiasLabel.LEAST_BIASED: "least-biased",
    BiasLabel.RIGHT_CENTER: "right-center",
}
_LABEL_BY_STRING = {v: k for k, v in _LABEL_STRINGS.items()}

# Lowercase ISO-639-1 codes accepted by default; extendable at runtime.
DEFAULT_LANGUAGES = ("cs", "fi", "ro", "sl", "sv")
_known_languages = set(DEFAULT_LANGUAGES)

LANGUAGE_NAMES = {
    "cs": "Czech",
    "fi": "Finnish",
    "ro": "Romanian",
    "sl": "Slovenian",
    "sv": "Swedish",
}


def register_language(code: str) -> str:
    """Add a new language code to the accepted set. Returns the code."""
    if len(code) != 2 or not code.isalpha() or not code.islower():
        raise CorpusError(f"invalid language code (want lowercase ISO-639-1): {code!r}")
    _known_languages.add(code)
    return code


def parse_language(raw: str) -> str:
    code = raw.strip()
    if code not in _known_languages:
        raise CorpusError(f"unknown language code: {raw!r}")
    return code


def known_languages() -> frozenset:
    return frozenset(_known_languages)


class Split(Enum):
    TRAIN = "train"
    VALID = "valid"
    TEST = "test"
    UNASSIGNED = "unassigned"


@dataclass(frozen=True)
class HeadlineRecord:
    id: str
    outlet: str
    language: str
    text: str
    label: BiasLabel
    split: Split = Split.UNASSIGNED
    published_at: Optional[datetime] = None

    def __post_init__(self):
        if not self.text.strip():
            raise CorpusError(f"record {self.id!r}: empty headline text")

    def word_count(self) -> int:
        return len(self.text.split())

    def to_json_obj(self) -> dict:
        obj = {
            "id": self.id,
            "outlet": self.outlet,
            "language": self.language,
            "text": self.text,
            "label": self.label.canonical,
        }
        if self.split is not Split.UNASSIGNED:
            obj["split"] = self.split.value
        if self.published_at is not None:
            obj["published_at"] = self.published_at.isoformat()
        return obj


_RECORD_KEYS = {"id", "outlet", "language", "text", "label", "split", "published_at"}


def _record_from_obj(obj: dict, where: str) -> HeadlineRecord:
    try:
        missing = {"id", "outlet", "language", "text", "label"} - obj.keys()
        if missing:
            raise CorpusError(f"missing keys {sorted(missing)}")
        split_raw = obj.get("split")
        published_raw = obj.get("published_at")
        published = None
        if published_raw not in (None, ""):
            published = datetime.fromisoformat(str(published_raw))
            if published.tzinfo is None:
                published = published.replace(tzinfo=timezone.utc)
        return HeadlineRecord(
            id=str(obj["id"]),
            outlet=str(obj["outlet"]),
            language=parse_language(str(obj["language"])),
            text=str(obj["text"]),
            label=BiasLabel.parse(str(obj["label"])),
            split=Split(split_raw) if split_raw not in (None, "") else Split.UNASSIGNED,
            published_at=published,
        )
    except CorpusError as exc:
        raise CorpusError(f"{where}: {exc}") from None
    except (ValueError, TypeError) as exc:
        raise CorpusError(f"{where}: {exc}") from None


@dataclass
class Corpus:
    records: list = field(default_factory=list)
    provenance: str = ""

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.id in seen:
                raise CorpusError(f"duplicate record id: {rec.id!r}")
            seen.add(rec.id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def ids(self) -> set:
        return {rec.id for rec in self.records}

    def languages(self) -> list:
        return sorted({rec.language for rec in self.records})

    def strata(self, key=("language", "label")) -> dict:
        """Group records by the stratification key, preserving corpus order."""
        out: dict = {}
        for rec in self.records:
            k = tuple(getattr(rec, f) for f in key)
            out.setdefault(k, []).append(rec)
        return out


def load_corpus(path, format: Optional[str] = None) -> Corpus:
    """Load a corpus from JSONL or CSV. Format inferred from suffix if omitted."""
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus file not found: {path}")
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    records = []
    if format == "jsonl":
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"{path}:{lineno}: invalid JSON: {exc}") from None
                records.append(_record_from_obj(obj, f"{path}:{lineno}"))
    elif format == "csv":
        with path.open(encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            for lineno, row in enumerate(reader, start=2):
                row = {k: v for k, v in row.items() if k in _RECORD_KEYS and v is not None}
                records.append(_record_from_obj(row, f"{path}:{lineno}"))
    else:
        raise CorpusError(f"unknown corpus format: {format!r}")
    return Corpus(records=records, provenance=str(path))


def save_corpus(corpus: Corpus, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in corpus.records:
            fh.write(json.dumps(rec.to_json_obj(), ensure_ascii=False) + "\n")


@dataclass
class CorpusStats:
    """Per-language split counts and average headline word lengths."""

    counts: dict            # language -> {train, valid, test, total}
    totals: dict            # overall {train, valid, test, total}
    avg_len: dict           # language -> float or None
    avg_len_overall: Optional[float]

    def to_json_obj(self) -> dict:
        rnd = lambda v: None if v is None else round(v, 1)
        return {
            "totals": self.totals,
            "avg_len_overall": rnd(self.avg_len_overall),
            "languages": {
                lang: {**self.counts[lang], "avg_len": rnd(self.avg_len.get(lang))}
                for lang in sorted(self.counts)
            },
        }

    def to_table(self) -> str:
        langs = sorted(self.counts)
        headers = ["", "All"] + [LANGUAGE_NAMES.get(l, l) for l in langs]
        rows = []
        for split in ("train", "test", "valid", "total"):
            rows.append(
                [split.capitalize(), f"{self.totals[split]:,}"]
                + [f"{self.counts[l][split]:,}" for l in langs]
            )
        fmt_len = lambda v: "-" if v is None else f"{v:.1f}"
        rows.append(
            ["Len.", fmt_len(self.avg_len_overall)]
            + [fmt_len(self.avg_len.get(l)) for l in langs]
        )
        widths = [max(len(r[i]) for r in [headers] + rows) for i in range(len(headers))]
        lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
        for row in rows:
            lines.append("  ".join(c.rjust(w) for c, w in zip(row, widths)))
        return "\n".join(lines)


def corpus_stats(corpus: Corpus) -> CorpusStats:
    counts: dict = {}
    words: dict = {}
    for rec in corpus:
        per = counts.setdefault(rec.language, {"train": 0, "valid": 0, "test": 0, "total": 0})
        if rec.split in (Split.TRAIN, Split.VALID, Split.TEST):
            per[rec.split.value] += 1
        per["total"] += 1
        words[rec.language] = words.get(rec.language, 0) + rec.word_count()
    totals = {k: sum(per[k] for per in counts.values()) for k in ("train", "valid", "test", "total")}
    avg_len = {
        lang: (words[lang] / per["total"]) if per["total"] else None
        for lang, per in counts.items()
    }
    total_words = sum(words.values())
    avg_overall = (total_words / totals["total"]) if totals["total"] else None
    return CorpusStats(counts=counts, totals=totals, avg_len=avg_len, avg_len_overall=avg_overall)


def largest_remainder(total: int, ratios) -> list:
    """Apportion `total` items over `ratios` minimizing deviation; sums to total."""
    exact = [total * r for r in ratios]
    base = [int(e) for e in exact]
    shortfall = total - sum(base)
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:shortfall]:
        base[i] += 1
    return base


def _stratum_rng_seed(seed: int, key) -> int:
    payload = json.dumps([seed, [str(k) for k in key]], sort_keys=True).encode()
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")


def stratified_split(
    corpus: Corpus,
    ratios=(0.8, 0.1, 0.1),
    seed: int = 0,
    key=("language", "label"),
) -> Corpus:
    """Assign train/valid/test splits stratified by `key`, deterministic in `seed`.

    Within every stratum the split sizes follow the largest-remainder
    apportionment of `ratios`. Strata smaller than 3 (with all three ratios
    nonzero) go entirely to train, with a warning.
    """
    import random as _random

    if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise CorpusError(f"split ratios must be non-negative and sum to 1: {ratios}")
    assigned: dict = {}
    for skey, members in corpus.strata(key=key).items():
        if len(members) < 3 and all(r > 0 for r in ratios):
            logger.warning(
                "stratum %s has %d record(s); assigning all to train", skey, len(members)
            )
            for rec in members:
                assigned[rec.id] = Split.TRAIN
            continue
        n_train, n_valid, n_test = largest_remainder(len(members), ratios)
        order = list(range(len(members)))
        _random.Random(_stratum_rng_seed(seed, skey)).shuffle(order)
        for pos, idx in enumerate(order):
            if pos < n_train:
                split = Split.TRAIN
            elif pos < n_train + n_valid:
                split = Split.VALID
            else:
                split = Split.TEST
            assigned[members[idx].id] = split
    records = [replace(rec, split=assigned[rec.id]) for rec in corpus.records]
    return Corpus(records=records, provenance=corpus.provenance)


class TranslationErrorCategory(Enum):
    ENTITY_DETECTION = "entity-detection"
    COMPREHENSION = "comprehension"
    IMPROPER_SENTENCE_FORMATION = "improper-sentence-formation"
    INVERSION_OF_MEANING = "inversion-of-meaning"
    MISCELLANEOUS = "miscellaneous"


@dataclass(frozen=True)
class TranslationErrorAnnotation:
    headline_id: str
    category: TranslationErrorCategory
    comment: str = ""

    def to_json_obj(self) -> dict:
        return {
            "headline_id": self.headline_id,
            "category": self.category.value,
            "comment": self.comment,
        }


class AnnotationStore:
    """JSONL-backed store of translation-error annotations.

    Multiple annotations per headline are allowed; writes must be exclusive.
    """

    def __init__(self, path, corpus_ids: Optional[set] = None):
        self.path = Path(path)
        self.corpus_ids = corpus_ids
        self.annotations: list = []
        if self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    obj = json.loads(line)
                    self.annotations.append(
                        TranslationErrorAnnotation(
                            headline_id=obj["headline_id"],
                            category=TranslationErrorCategory(obj["category"]),
                            comment=obj.get("comment", ""),
                        )
                    )

    def annotate(self, ann: TranslationErrorAnnotation) -> None:
        if self.corpus_ids is not None and ann.headline_id not in self.corpus_ids:
            raise CorpusError(f"annotation references unknown headline: {ann.headline_id!r}")
        self.annotations.append(ann)
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(ann.to_json_obj(), ensure_ascii=False) + "\n")

    def by_headline(self, headline_id: str) -> list:
        return [a for a in self.annotations if a.headline_id == headline_id]

    def histogram(self) -> dict:
        out = {cat: 0 for cat in TranslationErrorCategory}
        for ann in self.annotations:
            out[ann.category] += 1
        return out
