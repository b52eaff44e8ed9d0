import pytest

from polarlens.corpus import BiasLabel, HeadlineRecord
from polarlens.knowledge import (
    NUM_RELATIONS,
    RELATION_ORDER,
    CometClient,
    IdentityTranslationClient,
    InferenceBundle,
    JsonFixtureCometClient,
    KnowledgeCache,
    KnowledgeError,
    RelationType,
    TsvFixtureTranslationClient,
    acquire_knowledge_trt,
    batch_acquire,
    load_knowledge_store,
    process_inferences,
    retrieve_inferences,
    save_knowledge_store,
)

GRIT_WON_PROCESSED = (
    "PersonX is lucky, needed to train hard, intended to win, wins the game, "
    "wants to celebrate, feels happy. Others want to congratulate X, "
    "looses the game, feel disappointed."
)


def bundle_from(slots, headline_id="h1", source="Grit Won"):
    inferences = {r: "" for r in RELATION_ORDER}
    inferences.update(slots)
    return InferenceBundle(headline_id=headline_id, source_text_en=source, inferences=inferences)


class CountingComet(CometClient):
    """Maps every relation to a tagged string; counts calls."""

    model_id = "counting"

    def __init__(self, table=None, fail_on=()):
        self.table = table
        self.fail_on = set(fail_on)
        self.calls = 0

    def generate(self, headline_en, relation, k=1):
        self.calls += 1
        if relation in self.fail_on or headline_en in self.fail_on:
            raise RuntimeError("poisoned")
        if self.table is not None:
            value = self.table.get(relation, "")
            return [value] if value else []
        return [f"r:{relation.value}"]


class CountingTranslator(IdentityTranslationClient):
    def __init__(self):
        self.calls = 0

    def translate(self, text, src, tgt):
        self.calls += 1
        return text


class TestRelations:
    def test_nine_relations_canonical_order(self):
        assert NUM_RELATIONS == 9
        assert [r.value for r in RELATION_ORDER] == [
            "xAttr", "xEffect", "xIntent", "xNeed", "xReact", "xWant",
            "oEffect", "oReact", "oWant",
        ]

    def test_bundle_requires_all_slots(self):
        with pytest.raises(KnowledgeError, match="missing relation"):
            InferenceBundle("h", "t", {RelationType.X_ATTR: "calm"})


class TestRetrieveInferences:
    def test_grit_won_fixture(self, fixtures_dir):
        client = JsonFixtureCometClient(fixtures_dir / "comet_fixture.json")
        bundle = retrieve_inferences(client, "Grit Won")
        assert bundle.slot(RelationType.X_ATTR) == "lucky"
        assert bundle.slot(RelationType.X_INTENT) == "to win"
        assert bundle.slot(RelationType.X_EFFECT) == "wins the game"
        assert bundle.slot(RelationType.X_REACT) == "happy"
        assert bundle.slot(RelationType.O_REACT) == "disappointed"

    def test_empty_output_client(self):
        bundle = retrieve_inferences(CountingComet(table={}), "anything")
        assert bundle.slots_in_order() == [""] * 9

    def test_fixture_client_nine_distinct_slots(self):
        bundle = retrieve_inferences(CountingComet(), "anything")
        slots = bundle.slots_in_order()
        assert len(set(slots)) == 9
        assert slots == [f"r:{r.value}" for r in RELATION_ORDER]

    def test_failed_relation_yields_empty_slot(self):
        client = CountingComet(fail_on={RelationType.X_REACT})
        bundle = retrieve_inferences(client, "anything")
        assert bundle.slot(RelationType.X_REACT) == ""
        assert bundle.slot(RelationType.X_ATTR) == "r:xAttr"

    def test_empty_headline_rejected(self):
        with pytest.raises(KnowledgeError):
            retrieve_inferences(CountingComet(), "  ")


class TestProcessInferences:
    def test_grit_won_rendering(self, fixtures_dir):
        client = JsonFixtureCometClient(fixtures_dir / "comet_fixture.json")
        bundle = retrieve_inferences(client, "Grit Won")
        assert process_inferences(bundle).text == GRIT_WON_PROCESSED

    def test_all_empty(self):
        assert process_inferences(bundle_from({})).text == ""

    def test_single_slot_elision(self):
        out = process_inferences(bundle_from({RelationType.X_ATTR: "calm"}))
        assert out.text == "PersonX is calm."

    def test_others_only(self):
        out = process_inferences(bundle_from({RelationType.O_REACT: "sad"}))
        assert out.text == "Others feel sad."

    def test_idempotence(self):
        b = bundle_from({RelationType.X_WANT: "to win", RelationType.O_EFFECT: "loses"})
        assert process_inferences(b).text == process_inferences(b).text


def record(text="Grit Won", language="sl", rid="h1"):
    return HeadlineRecord(id=rid, outlet="Delo", language=language, text=text,
                          label=BiasLabel.LEFT_CENTER)


class TestTrt:
    def test_identity_translation_equals_process(self, fixtures_dir):
        client = JsonFixtureCometClient(fixtures_dir / "comet_fixture.json")
        rec = record()
        out = acquire_knowledge_trt(rec, IdentityTranslationClient(), client)
        expected = process_inferences(retrieve_inferences(client, "Grit Won", headline_id="h1"))
        assert out.text == expected.text == GRIT_WON_PROCESSED
        assert out.language == "sl"

    def test_slovenian_fixture_pair(self, fixtures_dir):
        tr = TsvFixtureTranslationClient(fixtures_dir / "translations.tsv")
        kg = JsonFixtureCometClient(fixtures_dir / "comet_fixture.json")
        rec = record(
            text="Hekerska skupina Anonymous trdi, da je vdrla v rusko centralno banko",
            rid="sl-anon",
        )
        out = acquire_knowledge_trt(rec, tr, kg)
        assert "zlonamerne" in out.text

    def test_cache_hit_makes_zero_client_calls(self, tmp_path):
        cache = KnowledgeCache(tmp_path / "cache.jsonl")
        tr = CountingTranslator()
        kg = CountingComet()
        rec = record(language="cs")
        first = acquire_knowledge_trt(rec, tr, kg, cache=cache)
        tr_calls, kg_calls = tr.calls, kg.calls
        second = acquire_knowledge_trt(rec, tr, kg, cache=cache)
        assert second == first
        assert (tr.calls, kg.calls) == (tr_calls, kg_calls)

    def test_cache_survives_reload(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        rec = record(language="cs")
        first = acquire_knowledge_trt(rec, CountingTranslator(), CountingComet(), cache=KnowledgeCache(path))
        kg = CountingComet()
        second = acquire_knowledge_trt(rec, CountingTranslator(), kg, cache=KnowledgeCache(path))
        assert second == first
        assert kg.calls == 0

    def test_cached_result_matches_fresh_recomputation(self, tmp_path):
        cache = KnowledgeCache(tmp_path / "cache.jsonl")
        rec = record(language="cs")
        cached = acquire_knowledge_trt(rec, CountingTranslator(), CountingComet(), cache=cache)
        fresh = acquire_knowledge_trt(rec, CountingTranslator(), CountingComet(), cache=None)
        assert cached == fresh


class TestBatchAcquire:
    def corpus(self, n=10):
        return [record(text=f"headline {i}", language="cs", rid=f"h{i}") for i in range(n)]

    def test_full_batch(self, tmp_path):
        result = batch_acquire(self.corpus(), CountingTranslator(), CountingComet(),
                               cache=KnowledgeCache(tmp_path / "c.jsonl"))
        assert len(result.entries) == 10
        assert not result.failures

    def test_resume_serves_from_cache(self, tmp_path):
        path = tmp_path / "c.jsonl"
        corpus = self.corpus()
        batch_acquire(corpus[:5], CountingTranslator(), CountingComet(), cache=KnowledgeCache(path))
        kg = CountingComet()
        result = batch_acquire(corpus, CountingTranslator(), kg, cache=KnowledgeCache(path))
        assert len(result.entries) == 10
        assert kg.calls == 5 * 9  # only the 5 uncached records hit the client

    def test_poisoned_record_collected(self):
        corpus = self.corpus()
        poisoned = CountingTranslator()
        orig = poisoned.translate

        def translate(text, src, tgt):
            if text == "headline 3":
                raise RuntimeError("boom")
            return orig(text, src, tgt)

        poisoned.translate = translate
        result = batch_acquire(corpus, poisoned, CountingComet())
        assert len(result.entries) == 9
        assert set(result.failures) == {"h3"}

    def test_parallel_matches_serial(self, tmp_path):
        corpus = self.corpus()
        serial = batch_acquire(corpus, CountingTranslator(), CountingComet())
        parallel = batch_acquire(corpus, CountingTranslator(), CountingComet(), parallelism=4)
        assert serial.entries == parallel.entries


class TestKnowledgeStore:
    def test_round_trip(self, tmp_path):
        result = batch_acquire([record(rid="a", language="cs"), record(rid="b", language="cs")],
                               CountingTranslator(), CountingComet())
        path = tmp_path / "store.jsonl"
        save_knowledge_store(path, result.entries, model_id="counting")
        loaded = load_knowledge_store(path)
        assert loaded == result.entries
