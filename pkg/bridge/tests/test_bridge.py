import json
import struct

import numpy as np
import pytest

from polarlens.corpus import BiasLabel, Corpus, HeadlineRecord, load_corpus, save_corpus
from polarlens.embed import EmbeddingStore, MockEncoder
from polarlens.knowledge import (
    RELATION_ORDER,
    JsonFixtureCometClient,
    RelationType,
    TsvFixtureTranslationClient,
    retrieve_inferences,
)
from polarlens_bridge import BridgeError, ExportManifest, PROVIDER_DIMS
from polarlens_bridge.backends import RateLimitError, with_backoff
from polarlens_bridge.exporters import export_embeddings, export_inferences, export_translations


def make_corpus(path, n=10, language="sl"):
    records = [
        HeadlineRecord(
            id=f"h{i}",
            outlet="Delo",
            language=language,
            text=f"naslov {i} o politiki",
            label=BiasLabel(i % 3),
        )
        for i in range(n)
    ]
    save_corpus(Corpus(records=records), path)
    return records


def batch_encoder(dim, seed=0):
    enc = MockEncoder(dim=dim, seed=seed)
    return lambda texts: np.stack([enc.encode(t) for t in texts])


def fake_generator(text, relation):
    return f"{relation} inference for {text}"


def fake_translator(text, src, tgt):
    return text if src == tgt else f"[{tgt}] {text}"


class TestManifest:
    def test_dim_defaults_to_published(self, tmp_path):
        m = ExportManifest("distil-muse", tmp_path / "c.jsonl", tmp_path / "o.emb1")
        assert m.dim == 512

    def test_dim_mismatch_rejected(self, tmp_path):
        with pytest.raises(BridgeError, match="384"):
            ExportManifest("ml-minilm", tmp_path / "c.jsonl", tmp_path / "o.emb1", dim=512)

    def test_unknown_provider(self, tmp_path):
        with pytest.raises(BridgeError, match="unknown provider"):
            ExportManifest("gpt-17", tmp_path / "c.jsonl", tmp_path / "o.emb1")

    def test_non_encoder_takes_no_dim(self, tmp_path):
        with pytest.raises(BridgeError, match="no dimension"):
            ExportManifest("comet", tmp_path / "c.jsonl", tmp_path / "o.json", dim=384)

    def test_load_round_trip(self, tmp_path):
        m = ExportManifest("labse", tmp_path / "c.jsonl", tmp_path / "o.emb1")
        p = tmp_path / "manifest.json"
        p.write_text(json.dumps(m.to_json_obj()))
        loaded = ExportManifest.load(p)
        assert loaded == m
        assert loaded.revision == "LaBSE/2"

    def test_load_rejects_unknown_keys(self, tmp_path):
        p = tmp_path / "manifest.json"
        p.write_text(json.dumps({"provider": "labse", "corpus_path": "c", "output_path": "o",
                                 "api_key": "hunter2"}))
        with pytest.raises(BridgeError, match="unknown manifest keys"):
            ExportManifest.load(p)


class TestExportEmbeddings:
    def test_ten_headlines_minilm_dims(self, tmp_path):
        corpus_path = tmp_path / "c.jsonl"
        make_corpus(corpus_path)
        m = ExportManifest("ml-minilm", corpus_path, tmp_path / "o.emb1")
        result = export_embeddings(m, encoder=batch_encoder(m.dim))
        assert result.written == 10
        store = EmbeddingStore.load(m.output_path)
        assert store.dim == 384 and len(store) == 10

    def test_empty_corpus_header_only_file(self, tmp_path):
        corpus_path = tmp_path / "c.jsonl"
        corpus_path.write_text("")
        m = ExportManifest("ml-minilm", corpus_path, tmp_path / "o.emb1")
        export_embeddings(m, encoder=batch_encoder(m.dim))
        raw = m.output_path.read_bytes()
        assert raw[:4] == b"EMB1"
        assert struct.unpack("<I", raw[4:8])[0] == 384
        assert len(EmbeddingStore.load(m.output_path)) == 0

    def test_batch_fallback_on_memory_error(self, tmp_path):
        corpus_path = tmp_path / "c.jsonl"
        make_corpus(corpus_path)
        inner = batch_encoder(384)
        calls = []

        def flaky(texts):
            calls.append(len(texts))
            if len(texts) > 2:
                raise MemoryError
            return inner(texts)

        m = ExportManifest("ml-minilm", corpus_path, tmp_path / "o.emb1")
        result = export_embeddings(m, encoder=flaky, batch_size=8)
        assert result.written == 10
        assert max(c for c in calls if c <= 2) <= 2

    def test_wrong_encoder_dim_rejected(self, tmp_path):
        corpus_path = tmp_path / "c.jsonl"
        make_corpus(corpus_path)
        m = ExportManifest("ml-mpnet", corpus_path, tmp_path / "o.emb1")
        with pytest.raises(BridgeError, match="expected"):
            export_embeddings(m, encoder=batch_encoder(64))


class TestExportInferences:
    def test_three_headlines_27_keys(self, tmp_path):
        corpus_path = tmp_path / "c.jsonl"
        make_corpus(corpus_path, n=3)
        m = ExportManifest("comet", corpus_path, tmp_path / "o.json")
        result = export_inferences(m, generator=fake_generator)
        assert result.written == 3
        table = json.loads(m.output_path.read_text())
        assert sum(len(slots) for slots in table.values()) == 27

    def test_rerun_byte_identical(self, tmp_path):
        corpus_path = tmp_path / "c.jsonl"
        make_corpus(corpus_path, n=5)
        m = ExportManifest("comet", corpus_path, tmp_path / "o.json")
        export_inferences(m, generator=fake_generator)
        first = m.output_path.read_bytes()
        export_inferences(m, generator=fake_generator)
        assert m.output_path.read_bytes() == first

    def test_timeout_leaves_empty_slot(self, tmp_path):
        corpus_path = tmp_path / "c.jsonl"
        make_corpus(corpus_path, n=2)

        def sometimes(text, relation):
            if relation == "xReact":
                raise TimeoutError
            return fake_generator(text, relation)

        m = ExportManifest("comet", corpus_path, tmp_path / "o.json")
        result = export_inferences(m, generator=sometimes)
        table = json.loads(m.output_path.read_text())
        assert all(slots["xReact"] == "" for slots in table.values())
        assert len(result.failures) == 2


class TestExportTranslations:
    def test_five_headlines_ten_rows(self, tmp_path):
        corpus_path = tmp_path / "c.jsonl"
        make_corpus(corpus_path, n=5)
        m = ExportManifest("translator", corpus_path, tmp_path / "o.tsv")
        result = export_translations(m, translator=fake_translator)
        assert result.written == 10
        lines = m.output_path.read_text().strip().splitlines()
        assert len(lines) == 10
        assert sum(1 for l in lines if l.split("\t")[1] == "en") == 5
        assert sum(1 for l in lines if l.split("\t")[1] == "sl") == 5

    def test_identity_pair(self, tmp_path):
        from polarlens.corpus import register_language

        register_language("en")
        corpus_path = tmp_path / "c.jsonl"
        make_corpus(corpus_path, n=1, language="en")
        m = ExportManifest("translator", corpus_path, tmp_path / "o.tsv")
        export_translations(m, translator=fake_translator)
        src, tgt, translation = m.output_path.read_text().strip().splitlines()[0].split("\t")
        assert tgt == "en" and translation == src

    def test_rate_limit_retried(self, tmp_path):
        corpus_path = tmp_path / "c.jsonl"
        make_corpus(corpus_path, n=1)
        attempts = []

        def throttled(text, src, tgt):
            attempts.append(1)
            if len(attempts) < 3:
                raise RateLimitError("slow down")
            return fake_translator(text, src, tgt)

        m = ExportManifest("translator", corpus_path, tmp_path / "o.tsv")
        sleeps = []
        result = export_translations(m, translator=throttled, sleep=sleeps.append)
        assert result.written == 2
        assert sleeps == [0.5, 1.0]

    def test_hard_failure_flagged_in_sidecar(self, tmp_path):
        corpus_path = tmp_path / "c.jsonl"
        make_corpus(corpus_path, n=3)

        def broken(text, src, tgt):
            if "1" in text:
                raise RuntimeError("boom")
            return fake_translator(text, src, tgt)

        m = ExportManifest("translator", corpus_path, tmp_path / "o.tsv")
        result = export_translations(m, translator=broken)
        assert result.written == 4
        assert [rec_id for rec_id, _ in result.failures] == ["h1"]
        sidecar = json.loads((tmp_path / "o.tsv.failed").read_text().strip())
        assert sidecar["id"] == "h1"


def test_with_backoff_gives_up_after_retries():
    def always(*args):
        raise RateLimitError

    wrapped = with_backoff(always, retries=2, sleep=lambda _: None)
    with pytest.raises(RateLimitError):
        wrapped()


class TestCoreContract:
    """Every exported file must parse in the core, key for key."""

    @pytest.mark.parametrize("provider", ["ml-minilm", "distil-muse", "ml-mpnet", "labse", "cmlm-ml"])
    def test_embeddings_round_trip(self, tmp_path, provider):
        corpus_path = tmp_path / "c.jsonl"
        records = make_corpus(corpus_path)
        m = ExportManifest(provider, corpus_path, tmp_path / "o.emb1")
        encoder = batch_encoder(m.dim)
        export_embeddings(m, encoder=encoder)
        store = EmbeddingStore.load(m.output_path)
        assert store.dim == PROVIDER_DIMS[provider]
        raw = m.output_path.read_bytes()
        assert struct.unpack("<I", raw[4:8])[0] == store.dim
        expected = encoder([rec.text for rec in records])
        for rec, vec in zip(records, expected):
            assert store.lookup(rec.id).tobytes() == vec.astype(np.float32).tobytes()

    def test_inferences_round_trip(self, tmp_path):
        corpus_path = tmp_path / "c.jsonl"
        records = make_corpus(corpus_path)
        m = ExportManifest("comet", corpus_path, tmp_path / "o.json")
        export_inferences(m, generator=fake_generator)
        client = JsonFixtureCometClient(m.output_path)
        for rec in records:
            bundle = retrieve_inferences(client, rec.text, headline_id=rec.id)
            assert bundle.slot(RelationType.X_ATTR) == f"xAttr inference for {rec.text}"
            assert all(bundle.slot(r) for r in RELATION_ORDER)

    def test_translations_round_trip(self, tmp_path):
        corpus_path = tmp_path / "c.jsonl"
        records = make_corpus(corpus_path)
        m = ExportManifest("translator", corpus_path, tmp_path / "o.tsv")
        export_translations(m, translator=fake_translator)
        client = TsvFixtureTranslationClient(m.output_path)
        for rec in records:
            forward = client.translate(rec.text, rec.language, "en")
            assert forward == fake_translator(rec.text, rec.language, "en")
            assert client.translate(forward, "en", rec.language) == fake_translator(forward, "en", "sl")

    def test_corpus_reader_is_the_core_reader(self, tmp_path):
        corpus_path = tmp_path / "c.jsonl"
        make_corpus(corpus_path)
        assert len(load_corpus(corpus_path)) == 10
