"""Headline harvesting: outlet ratings, temporal queries, paginated crawling,
and distant-supervision labeling."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Optional

from .corpus import BiasLabel, CorpusError, HeadlineRecord, parse_language

logger = logging.getLogger(__name__)

DEFAULT_CATEGORIES = ("news",)


class HarvestError(Exception):
    pass


class TransientProviderError(HarvestError):
    """Retryable transport failure from a news provider."""


@dataclass(frozen=True)
class OutletRating:
    outlet: str
    language: str
    bias: BiasLabel
    questionable: bool


def load_ratings(path) -> list:
    """Read a JSON list of outlet ratings; (outlet, language) must be unique."""
    path = Path(path)
    if not path.exists():
        raise HarvestError(f"ratings file not found: {path}")
    with path.open(encoding="utf-8") as fh:
        raw = json.load(fh)
    ratings = []
    seen = set()
    for obj in raw:
        rating = OutletRating(
            outlet=str(obj["outlet"]),
            language=parse_language(str(obj["language"])),
            bias=BiasLabel.parse(str(obj["bias"])),
            questionable=bool(obj["questionable"]),
        )
        pair = (rating.outlet, rating.language)
        if pair in seen:
            raise HarvestError(f"duplicate rating for {pair}")
        seen.add(pair)
        ratings.append(rating)
    return ratings


def filter_questionable(ratings) -> list:
    """Drop outlets flagged as questionable sources; order preserved."""
    return [r for r in ratings if not r.questionable]


@dataclass(frozen=True)
class TemporalQuery:
    outlet: str
    language: str
    categories: tuple
    start_date: date
    end_date: date

    def canonical_json(self) -> str:
        return json.dumps(
            {
                "outlet": self.outlet,
                "language": self.language,
                "categories": list(self.categories),
                "start": self.start_date.isoformat(),
                "end": self.end_date.isoformat(),
            },
            sort_keys=True,
        )

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


def build_temporal_query(
    outlet: str,
    language: str,
    categories=None,
    start_date: date = None,
    end_date: date = None,
) -> TemporalQuery:
    if not outlet:
        raise HarvestError("outlet must be non-empty")
    if start_date is None or end_date is None:
        raise HarvestError("start and end dates are required")
    if start_date > end_date:
        raise HarvestError(f"start date {start_date} after end date {end_date}")
    cats = tuple(categories) if categories else DEFAULT_CATEGORIES
    return TemporalQuery(
        outlet=outlet,
        language=parse_language(language),
        categories=cats,
        start_date=start_date,
        end_date=end_date,
    )


class NewsProviderClient(ABC):
    """Paginated headline source. Implementations must be share-safe."""

    @abstractmethod
    def fetch_page(self, query: TemporalQuery, page_token: Optional[str] = None):
        """Return (payloads, next_page_token). Payloads are raw dicts."""


class FixtureNewsClient(NewsProviderClient):
    """Reads pages from `<root>/<query digest>/<n>.json`; idempotent per token."""

    def __init__(self, root):
        self.root = Path(root)

    def fetch_page(self, query, page_token=None):
        page = int(page_token) if page_token else 0
        page_path = self.root / query.digest() / f"{page}.json"
        if not page_path.exists():
            if page == 0:
                return [], None
            raise HarvestError(f"fixture page not found: {page_path}")
        with page_path.open(encoding="utf-8") as fh:
            items = json.load(fh)
        next_path = self.root / query.digest() / f"{page + 1}.json"
        next_token = str(page + 1) if next_path.exists() else None
        return items, next_token


class HttpNewsClient(NewsProviderClient):
    """Live adapter for the provider HTTP contract."""

    def __init__(self, url: str, session=None):
        import requests

        self.url = url
        self.session = session or requests.Session()

    def fetch_page(self, query, page_token=None):
        import requests

        body = json.loads(query.canonical_json())
        body["page_token"] = page_token
        try:
            resp = self.session.request("GET", self.url, json=body, timeout=30)
            resp.raise_for_status()
        except requests.RequestException as exc:
            raise TransientProviderError(str(exc)) from exc
        data = resp.json()
        return data.get("items", []), data.get("next_page_token")


@dataclass
class RetryPolicy:
    retries: int = 3
    backoff_base: float = 0.5
    sleep: object = time.sleep

    def run(self, fn):
        last = None
        for attempt in range(self.retries + 1):
            try:
                return fn()
            except TransientProviderError as exc:
                last = exc
                if attempt < self.retries:
                    delay = self.backoff_base * (2 ** attempt)
                    logger.warning("transient provider failure (%s); retrying in %.1fs", exc, delay)
                    self.sleep(delay)
        raise HarvestError(f"retries exhausted: {last}") from last


def _payload_key(payload: dict, outlet: str) -> str:
    pid = payload.get("id")
    if pid is not None:
        return str(pid)
    digest = hashlib.sha256(f"{outlet}\x00{payload.get('title', '')}".encode()).hexdigest()
    return f"hash:{digest[:16]}"


def fetch_headlines(client: NewsProviderClient, query: TemporalQuery, retry: RetryPolicy = None) -> list:
    """Fetch all pages for a query, de-duplicated by provider id, page order kept."""
    retry = retry or RetryPolicy()
    payloads = []
    seen = set()
    token = None
    while True:
        items, next_token = retry.run(lambda: client.fetch_page(query, token))
        for payload in items:
            if not isinstance(payload, dict) or "title" not in payload:
                logger.warning("skipping malformed payload: %r", payload)
                continue
            key = _payload_key(payload, query.outlet)
            if key in seen:
                continue
            seen.add(key)
            payloads.append(payload)
        if next_token is None:
            break
        token = next_token
    return payloads


def label_headlines(payloads, rating: OutletRating, query_language: Optional[str] = None) -> list:
    """Distant supervision: stamp every payload with the outlet's bias rating."""
    if rating.questionable:
        raise HarvestError(f"refusing to label headlines from questionable outlet {rating.outlet!r}")
    language = query_language or rating.language
    records = []
    for payload in payloads:
        if payload.get("language") not in (None, language):
            logger.warning(
                "payload %r reports language %r, keeping query language %r",
                payload.get("id"), payload.get("language"), language,
            )
        records.append(
            HeadlineRecord(
                id=_payload_key(payload, rating.outlet),
                outlet=rating.outlet,
                language=language,
                text=str(payload["title"]),
                label=rating.bias,
                published_at=_parse_published(payload.get("published_at")),
            )
        )
    return records


def _parse_published(raw):
    from datetime import datetime, timezone

    if raw in (None, ""):
        return None
    try:
        ts = datetime.fromisoformat(str(raw))
    except ValueError:
        logger.warning("unparseable published_at %r; dropping", raw)
        return None
    return ts if ts.tzinfo else ts.replace(tzinfo=timezone.utc)
