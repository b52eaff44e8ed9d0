"""Embedding providers and stores: deterministic mock encoder, binary EMB1
key-value store, and per-relation knowledge matrices."""

from __future__ import annotations

import hashlib
import json
import struct
from abc import ABC, abstractmethod
from pathlib import Path

import numpy as np

from .knowledge import NUM_RELATIONS, InferenceBundle, ProcessedKnowledge

EMB1_MAGIC = b"EMB1"


class EmbeddingError(Exception):
    pass


class EmbeddingNotFound(EmbeddingError):
    pass


def _check_vector(values: np.ndarray, dim: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.float32)
    if values.shape != (dim,):
        raise EmbeddingError(f"expected vector of dim {dim}, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise EmbeddingError("vector contains non-finite entries")
    return values


class EmbeddingProvider(ABC):
    """Deterministic text -> dense vector encoder of fixed dimension."""

    dim: int

    @abstractmethod
    def encode(self, text: str) -> np.ndarray:
        ...

    def encode_relations(self, texts) -> np.ndarray:
        """Encode nine relation texts into a (9, dim) matrix, canonical order."""
        if len(texts) != NUM_RELATIONS:
            raise EmbeddingError(f"expected {NUM_RELATIONS} relation texts, got {len(texts)}")
        return np.stack([self.encode(t) for t in texts])


class MockEncoder(EmbeddingProvider):
    """Seeded hash-based encoder: per-word Gaussian vectors summed and
    L2-normalized. Stable across processes and platforms; empty text -> zeros."""

    def __init__(self, dim: int = 16, seed: int = 0):
        if dim <= 0:
            raise EmbeddingError("dim must be positive")
        self.dim = dim
        self.seed = seed

    def _word_vector(self, word: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self.seed}\x00{word}".encode()).digest()
        rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest[:8], "little")))
        return rng.standard_normal(self.dim)

    def encode(self, text: str) -> np.ndarray:
        words = text.split()
        if not words:
            return np.zeros(self.dim, dtype=np.float32)
        acc = np.zeros(self.dim)
        for word in words:
            acc += self._word_vector(word)
        norm = np.linalg.norm(acc)
        if norm == 0.0:
            return np.zeros(self.dim, dtype=np.float32)
        return (acc / norm).astype(np.float32)


class EmbeddingStore:
    """In-memory key -> vector map with a binary file format.

    EMB1 layout: magic "EMB1", u32 dim, u64 count, then per entry a u16 key
    length, UTF-8 key bytes, and dim little-endian f32 values.
    """

    def __init__(self, dim: int):
        if dim <= 0:
            raise EmbeddingError("dim must be positive")
        self.dim = dim
        self.vectors: dict = {}

    def put(self, key: str, values) -> None:
        self.vectors[key] = _check_vector(values, self.dim)

    def lookup(self, key: str) -> np.ndarray:
        try:
            return self.vectors[key]
        except KeyError:
            raise EmbeddingNotFound(f"no embedding stored for key {key!r}") from None

    def __contains__(self, key):
        return key in self.vectors

    def __len__(self):
        return len(self.vectors)

    def save(self, path) -> None:
        path = Path(path)
        with path.open("wb") as fh:
            fh.write(EMB1_MAGIC)
            fh.write(struct.pack("<IQ", self.dim, len(self.vectors)))
            for key, values in self.vectors.items():
                key_bytes = key.encode("utf-8")
                if len(key_bytes) > 0xFFFF:
                    raise EmbeddingError(f"key too long for store format: {key[:40]!r}...")
                fh.write(struct.pack("<H", len(key_bytes)))
                fh.write(key_bytes)
                fh.write(values.astype("<f4").tobytes())

    @classmethod
    def load(cls, path) -> "EmbeddingStore":
        path = Path(path)
        with path.open("rb") as fh:
            head = fh.read(4)
            if head != EMB1_MAGIC:
                fh.seek(0)
                return cls._load_jsonl(path)
            dim, count = struct.unpack("<IQ", fh.read(12))
            store = cls(dim)
            for _ in range(count):
                (key_len,) = struct.unpack("<H", fh.read(2))
                key = fh.read(key_len).decode("utf-8")
                values = np.frombuffer(fh.read(4 * dim), dtype="<f4").copy()
                store.vectors[key] = values
            return store

    @classmethod
    def _load_jsonl(cls, path) -> "EmbeddingStore":
        store = None
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise EmbeddingError(f"{path}:{lineno}: not EMB1 and not JSON lines: {exc}") from None
                values = np.asarray(obj["values"], dtype=np.float32)
                if store is None:
                    store = cls(len(values))
                store.put(obj["key"], values)
        if store is None:
            raise EmbeddingError(f"{path}: empty JSON-lines embedding store has no dimension")
        return store


class StoreProvider(EmbeddingProvider):
    """Provider backed by precomputed vectors; raises on unknown text."""

    def __init__(self, store: EmbeddingStore):
        self.store = store
        self.dim = store.dim

    def encode(self, text: str) -> np.ndarray:
        if text == "":
            return np.zeros(self.dim, dtype=np.float32)
        return self.store.lookup(text)


def encode_knowledge(provider: EmbeddingProvider, knowledge, mode: str = "per_relation") -> np.ndarray:
    """Build the (9, dim) knowledge matrix.

    per_relation: each relation slot of an InferenceBundle encoded into its own
    row (empty slot -> zero row). whole_text: the processed paragraph's single
    vector broadcast to all nine rows.
    """
    if mode == "per_relation":
        if not isinstance(knowledge, InferenceBundle):
            raise EmbeddingError("per_relation mode requires an InferenceBundle")
        return provider.encode_relations(knowledge.slots_in_order())
    if mode == "whole_text":
        if isinstance(knowledge, InferenceBundle):
            from .knowledge import process_inferences

            knowledge = process_inferences(knowledge)
        if not isinstance(knowledge, ProcessedKnowledge):
            raise EmbeddingError("whole_text mode requires ProcessedKnowledge")
        vector = provider.encode(knowledge.text)
        return np.broadcast_to(vector, (NUM_RELATIONS, provider.dim)).copy()
    raise EmbeddingError(f"unknown knowledge encoding mode: {mode!r}")
