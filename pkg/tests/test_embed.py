import numpy as np
import pytest

from polarlens.embed import (
    EmbeddingError,
    EmbeddingNotFound,
    EmbeddingStore,
    MockEncoder,
    StoreProvider,
    encode_knowledge,
)
from polarlens.knowledge import RELATION_ORDER, InferenceBundle, ProcessedKnowledge


def bundle(slots=None, rid="h1"):
    inferences = {r: "" for r in RELATION_ORDER}
    if slots:
        inferences.update(slots)
    return InferenceBundle(headline_id=rid, source_text_en="t", inferences=inferences)


class TestMockEncoder:
    def test_determinism(self):
        enc = MockEncoder(dim=16, seed=0)
        a = enc.encode("abc")
        b = enc.encode("abc")
        assert np.array_equal(a, b)

    def test_cross_instance_determinism(self):
        assert np.array_equal(MockEncoder(dim=8, seed=5).encode("x y z"),
                              MockEncoder(dim=8, seed=5).encode("x y z"))

    def test_unit_norm(self):
        enc = MockEncoder(dim=32, seed=1)
        for text in ("one", "two words", "a much longer headline about politics"):
            assert np.linalg.norm(enc.encode(text)) == pytest.approx(1.0, abs=1e-5)

    def test_distinct_words_low_cosine(self):
        # sampled over 1000 random word pairs
        enc = MockEncoder(dim=64, seed=2)
        rng = np.random.default_rng(0)
        for _ in range(1000):
            w1, w2 = f"w{rng.integers(1e9)}", f"v{rng.integers(1e9)}"
            a, b = enc.encode(w1), enc.encode(w2)
            assert float(a @ b) < 0.99

    def test_empty_text_zero_vector(self):
        assert np.array_equal(MockEncoder(dim=4).encode("  "), np.zeros(4, dtype=np.float32))

    def test_declared_dim(self):
        enc = MockEncoder(dim=12, seed=0)
        assert enc.encode("hello world").shape == (12,)

    def test_seed_changes_output(self):
        assert not np.array_equal(MockEncoder(dim=16, seed=0).encode("a"),
                                  MockEncoder(dim=16, seed=1).encode("a"))

    def test_bad_dim(self):
        with pytest.raises(EmbeddingError):
            MockEncoder(dim=0)


class TestEmbeddingStore:
    def test_write_read_identity(self):
        store = EmbeddingStore(4)
        v = np.array([1.5, -2.0, 0.0, 3.25], dtype=np.float32)
        store.put("k", v)
        assert np.array_equal(store.lookup("k"), v)

    def test_missing_key_raises(self):
        with pytest.raises(EmbeddingNotFound, match="no embedding"):
            EmbeddingStore(4).lookup("ghost")

    def test_file_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(3)
        store = EmbeddingStore(16)
        originals = {}
        for i in range(1000):
            key = f"key-{i}-č"  # non-ASCII keys must survive
            v = rng.standard_normal(16).astype(np.float32)
            store.put(key, v)
            originals[key] = v
        path = tmp_path / "store.emb1"
        store.save(path)
        loaded = EmbeddingStore.load(path)
        assert len(loaded) == 1000
        for key, v in originals.items():
            assert loaded.lookup(key).tobytes() == v.tobytes()

    def test_magic_bytes(self, tmp_path):
        store = EmbeddingStore(2)
        store.put("a", np.zeros(2, dtype=np.float32))
        path = tmp_path / "s.emb1"
        store.save(path)
        assert path.read_bytes()[:4] == b"EMB1"

    def test_jsonl_fallback(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text('{"key": "a", "values": [1.0, 2.0]}\n{"key": "b", "values": [3.0, 4.0]}\n')
        store = EmbeddingStore.load(path)
        assert store.dim == 2
        assert np.array_equal(store.lookup("b"), np.array([3.0, 4.0], dtype=np.float32))

    def test_dim_enforced(self):
        store = EmbeddingStore(3)
        with pytest.raises(EmbeddingError, match="dim"):
            store.put("k", np.zeros(4))

    def test_nonfinite_rejected(self):
        store = EmbeddingStore(2)
        with pytest.raises(EmbeddingError, match="finite"):
            store.put("k", np.array([np.nan, 1.0]))


class TestEncodeKnowledge:
    def test_all_empty_bundle_zero_matrix(self):
        enc = MockEncoder(dim=8, seed=0)
        K = encode_knowledge(enc, bundle())
        assert K.shape == (9, 8)
        assert np.array_equal(K, np.zeros((9, 8), dtype=np.float32))

    def test_distinct_clauses_distinct_rows(self):
        enc = MockEncoder(dim=16, seed=0)
        slots = {r: f"inference {r.value}" for r in RELATION_ORDER}
        K = encode_knowledge(enc, bundle(slots))
        for i in range(9):
            for j in range(i + 1, 9):
                assert not np.array_equal(K[i], K[j])

    def test_whole_text_broadcast(self):
        enc = MockEncoder(dim=8, seed=0)
        pk = ProcessedKnowledge("h1", "en", "PersonX is calm.")
        K = encode_knowledge(enc, pk, mode="whole_text")
        assert K.shape == (9, 8)
        assert all(np.array_equal(K[0], K[i]) for i in range(9))

    def test_whole_text_accepts_bundle(self):
        enc = MockEncoder(dim=8, seed=0)
        K = encode_knowledge(enc, bundle({RELATION_ORDER[0]: "calm"}), mode="whole_text")
        assert np.array_equal(K[0], enc.encode("PersonX is calm."))

    def test_unknown_mode(self):
        with pytest.raises(EmbeddingError):
            encode_knowledge(MockEncoder(dim=4), bundle(), mode="other")


class TestStoreProvider:
    def test_lookup_by_text(self):
        store = EmbeddingStore(4)
        v = np.arange(4, dtype=np.float32)
        store.put("some headline", v)
        provider = StoreProvider(store)
        assert np.array_equal(provider.encode("some headline"), v)

    def test_empty_text_is_zero(self):
        provider = StoreProvider(EmbeddingStore(4))
        assert np.array_equal(provider.encode(""), np.zeros(4, dtype=np.float32))

    def test_unknown_text_raises(self):
        with pytest.raises(EmbeddingNotFound):
            StoreProvider(EmbeddingStore(4)).encode("ghost")
