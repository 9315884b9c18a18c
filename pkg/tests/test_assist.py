"""Suggestions and relevance indicators over the fixture corpus."""

import numpy as np
import pytest

from conftest import make_gateway
from doubles import CountingProvider, DownProvider
from scout.assist import (
    RelevanceCache,
    RelevanceIndicator,
    _rank_clusters,
    _sanitize_label,
    _top_tags,
    eager_indicators,
    relevance_for,
    suggest_concepts,
    suggest_granularity,
    suggest_reformulations,
)
from scout.catalog import TEMPORAL_GRANULARITIES
from scout.gateway import LlmGateway, ProviderConfig
from scout.search import FilterSet, SearchQuery, make_state

COVID_QUERY = "quality of life during COVID"


@pytest.fixture(scope="module")
def covid_state():
    return make_state(SearchQuery(text=COVID_QUERY), FilterSet())


@pytest.fixture(scope="module")
def covid_results(fixture_catalog, mock_gateway):
    from scout.search import embed_schemas, generate_schemas, score_and_rank
    embeddings = embed_schemas(
        generate_schemas(SearchQuery(text=COVID_QUERY), mock_gateway),
        mock_gateway)
    return score_and_rank(embeddings, fixture_catalog, top_n=100)


class TestReformulations:
    def test_covid_query_yields_three_grounded_suggestions(
            self, covid_state, covid_results, fixture_catalog, mock_gateway):
        suggestions = suggest_reformulations(
            covid_state, covid_results, fixture_catalog, mock_gateway, seed=17)
        assert len(suggestions) == 3
        assert sorted(s.matching_count for s in suggestions) == [2, 6, 8]
        for suggestion in suggestions:
            assert suggestion.query
            assert suggestion.reason
            assert suggestion.matching_count == len(suggestion.dataset_ids)
            for dataset_id in suggestion.dataset_ids:
                assert fixture_catalog.get(dataset_id) is not None

    def test_membership_within_current_results(self, covid_state, covid_results,
                                               fixture_catalog, mock_gateway):
        result_ids = {r.dataset_id for r in covid_results}
        for suggestion in suggest_reformulations(
                covid_state, covid_results, fixture_catalog, mock_gateway,
                seed=17):
            assert set(suggestion.dataset_ids) <= result_ids

    def test_limit_respected(self, covid_state, covid_results,
                             fixture_catalog, mock_gateway):
        suggestions = suggest_reformulations(
            covid_state, covid_results, fixture_catalog, mock_gateway,
            seed=17, limit=1)
        assert len(suggestions) == 1

    def test_provider_outage_degrades_to_empty(self, covid_state,
                                               covid_results, fixture_catalog):
        gateway = LlmGateway(DownProvider(), ProviderConfig(max_retries=0),
                             sleeper=lambda s: None)
        assert suggest_reformulations(covid_state, covid_results,
                                      fixture_catalog, gateway, seed=17) == []

    def test_no_results_gives_no_suggestions(self, covid_state,
                                             fixture_catalog, mock_gateway):
        assert suggest_reformulations(covid_state, [], fixture_catalog,
                                      mock_gateway, seed=17) == []

    def test_deterministic(self, covid_state, covid_results, fixture_catalog,
                           mock_gateway):
        first = suggest_reformulations(covid_state, covid_results,
                                       fixture_catalog, mock_gateway, seed=17)
        second = suggest_reformulations(covid_state, covid_results,
                                        fixture_catalog, mock_gateway, seed=17)
        assert first == second


class TestConcepts:
    def test_covid_query_concept_labels_and_sizes(
            self, covid_state, covid_results, fixture_catalog, mock_gateway):
        concepts = suggest_concepts(covid_state, covid_results,
                                    fixture_catalog, mock_gateway, seed=17)
        assert [(c.label, len(c.members)) for c in concepts] == [
            ("year", 24), ("hour", 80), ("date", 41),
            ("share", 36), ("rating", 20),
        ]

    def test_members_reference_real_attributes(self, covid_state, covid_results,
                                               fixture_catalog, mock_gateway):
        for concept in suggest_concepts(covid_state, covid_results,
                                        fixture_catalog, mock_gateway, seed=17):
            for dataset_id, column_name in concept.members:
                dataset = fixture_catalog.get(dataset_id)
                assert dataset is not None
                assert column_name in {c.name for c in dataset.record.columns}

    def test_centroid_attached_with_embedding_width(self, covid_state,
                                                    covid_results,
                                                    fixture_catalog,
                                                    mock_gateway):
        concepts = suggest_concepts(covid_state, covid_results,
                                    fixture_catalog, mock_gateway, seed=17)
        for concept in concepts:
            assert concept.centroid is not None
            assert len(concept.centroid) == fixture_catalog.embedding_dim

    def test_labels_are_at_most_two_lowercase_words(self, covid_state,
                                                    covid_results,
                                                    fixture_catalog,
                                                    mock_gateway):
        for concept in suggest_concepts(covid_state, covid_results,
                                        fixture_catalog, mock_gateway, seed=17):
            words = concept.label.split()
            assert 1 <= len(words) <= 2
            assert concept.label == concept.label.lower()

    def test_provider_outage_degrades_to_empty(self, covid_state,
                                               covid_results, fixture_catalog):
        gateway = LlmGateway(DownProvider(), ProviderConfig(max_retries=0),
                             sleeper=lambda s: None)
        assert suggest_concepts(covid_state, covid_results, fixture_catalog,
                                gateway, seed=17) == []


class TestGranularity:
    def test_covid_query_granularity_suggestions(self, covid_results,
                                                 fixture_catalog):
        suggestions = suggest_granularity(covid_results, fixture_catalog)
        assert suggestions.temporal == ("Day", "Year", "Hour")
        assert suggestions.spatial == ("Country", "City", "Neighborhood/Region")

    def test_frequency_ties_prefer_finer_tags(self):
        # Year and Month tie at 2; Month is finer so it leads.
        tags = ["Year", "Year", "Month", "Month", "Day"]
        assert _top_tags(tags, TEMPORAL_GRANULARITIES, limit=3) == \
            ("Month", "Year", "Day")

    def test_untagged_datasets_ignored(self):
        assert _top_tags([None, None, "Week"], TEMPORAL_GRANULARITIES, 3) == \
            ("Week",)

    def test_limit_caps_output(self):
        tags = list(TEMPORAL_GRANULARITIES)
        assert len(_top_tags(tags, TEMPORAL_GRANULARITIES, 3)) == 3


class TestLabelSanitizer:
    def test_lowercases_and_strips_punctuation(self):
        assert _sanitize_label("Per-Capita GDP!", ["x"]) == "per capita"

    def test_caps_at_two_words(self):
        assert _sanitize_label("one two three", ["x"]) == "one two"

    def test_empty_falls_back_to_frequent_token(self):
        assert _sanitize_label("##", ["year", "year_built", "tax"]) == "year"

    def test_no_tokens_falls_back_to_misc(self):
        assert _sanitize_label("##", []) == "misc"


class TestClusterRanking:
    def test_modes_order_clusters_by_relevance(self):
        centroids = np.array([[1.0, 0.0], [0.0, 1.0]])
        vectors = np.array([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0]])
        members_of = [[0, 1], [2]]
        query = np.array([1.0, 0.0])
        assert _rank_clusters(centroids, members_of, vectors, query,
                              "centroid") == [0, 1]
        assert _rank_clusters(centroids, members_of, vectors, query,
                              "max_member") == [0, 1]

    def test_max_member_uses_best_member_not_centroid(self):
        # Cluster 0's centroid points away, but one member matches exactly.
        centroids = np.array([[0.0, 1.0], [0.7, 0.7]])
        vectors = np.array([[1.0, 0.0], [-1.0, 0.0], [0.7, 0.7]])
        members_of = [[0, 1], [2]]
        query = np.array([1.0, 0.0])
        assert _rank_clusters(centroids, members_of, vectors, query,
                              "max_member")[0] == 0
        assert _rank_clusters(centroids, members_of, vectors, query,
                              "centroid")[0] == 1

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError, match="mode"):
            _rank_clusters(np.ones((1, 2)), [[0]], np.ones((1, 2)),
                           np.ones(2), "median")

    def test_empty_clusters_skipped(self):
        centroids = np.array([[1.0, 0.0], [0.0, 1.0]])
        vectors = np.array([[1.0, 0.0]])
        assert _rank_clusters(centroids, [[0], []], vectors,
                              np.array([1.0, 0.0]), "centroid") == [0]


class TestRelevanceCache:
    def indicator(self, digest: str, dataset_id: str) -> RelevanceIndicator:
        return RelevanceIndicator(dataset_id=dataset_id, utilities="u",
                                  limitations="l", state_digest=digest)

    def test_put_get_round_trip(self):
        cache = RelevanceCache(4)
        cache.put(self.indicator("d1", "x"))
        assert cache.get("d1", "x").utilities == "u"
        assert cache.get("d1", "other") is None
        assert cache.get("d2", "x") is None

    def test_lru_evicts_oldest(self):
        cache = RelevanceCache(2)
        cache.put(self.indicator("d", "a"))
        cache.put(self.indicator("d", "b"))
        cache.get("d", "a")                    # refresh a
        cache.put(self.indicator("d", "c"))    # evicts b
        assert cache.get("d", "a") is not None
        assert cache.get("d", "b") is None
        assert cache.get("d", "c") is not None

    def test_capacity_must_be_positive(self):
        with pytest.raises(ValueError):
            RelevanceCache(0)

    def test_json_round_trip(self):
        cache = RelevanceCache(8)
        cache.put(self.indicator("deadbeef", "ds-1"))
        restored = RelevanceCache.from_json(cache.to_json())
        assert restored.get("deadbeef", "ds-1").limitations == "l"
        assert len(restored) == 1

    def test_from_json_skips_malformed_keys(self):
        restored = RelevanceCache.from_json({
            "nocolon": {"utilities": "u", "limitations": "l"},
            "ok:id": "not a dict",
            "good:id": {"utilities": "u", "limitations": "l"},
        })
        assert len(restored) == 1


class TestRelevanceFor:
    def test_cache_hit_skips_provider(self, covid_state, fixture_catalog):
        provider = CountingProvider()
        gateway = LlmGateway(provider, ProviderConfig())
        cache = RelevanceCache(16)
        dataset = fixture_catalog.get("world-happiness-2019")
        first = relevance_for(covid_state, dataset, gateway, cache)
        assert provider.calls("relevance_indicators") == 1
        second = relevance_for(covid_state, dataset, gateway, cache)
        assert provider.calls("relevance_indicators") == 1
        assert first == second

    def test_indicator_carries_state_digest(self, covid_state,
                                            fixture_catalog, mock_gateway):
        dataset = fixture_catalog.get("world-happiness-2019")
        indicator = relevance_for(covid_state, dataset, mock_gateway,
                                  RelevanceCache(4))
        assert indicator.state_digest == covid_state.digest
        assert indicator.dataset_id == "world-happiness-2019"
        assert indicator.utilities
        assert indicator.limitations

    def test_failure_placeholder_is_not_cached(self, covid_state,
                                               fixture_catalog):
        down = LlmGateway(DownProvider(), ProviderConfig(max_retries=0),
                          sleeper=lambda s: None)
        cache = RelevanceCache(4)
        dataset = fixture_catalog.get("world-happiness-2019")
        placeholder = relevance_for(covid_state, dataset, down, cache)
        assert "unavailable" in placeholder.utilities
        assert len(cache) == 0
        # A later attempt with a healthy provider succeeds and caches.
        healthy = make_gateway()
        recovered = relevance_for(covid_state, dataset, healthy, cache)
        assert "unavailable" not in recovered.utilities
        assert len(cache) == 1

    def test_task_type_feeds_the_indicator(self, fixture_catalog, mock_gateway):
        dataset = fixture_catalog.get("world-happiness-2019")
        plain = make_state(SearchQuery(text="happiness data"))
        typed = make_state(SearchQuery(text="happiness data",
                                       task_type="regression"))
        a = relevance_for(plain, dataset, mock_gateway, RelevanceCache(4))
        b = relevance_for(typed, dataset, mock_gateway, RelevanceCache(4))
        assert a.state_digest != b.state_digest


class TestEagerIndicators:
    def test_exactly_top_five_generated(self, covid_state, covid_results,
                                        fixture_catalog):
        provider = CountingProvider()
        gateway = LlmGateway(provider, ProviderConfig())
        indicators = eager_indicators(covid_state, covid_results,
                                      fixture_catalog, gateway,
                                      RelevanceCache(16))
        assert len(indicators) == 5
        assert provider.calls("relevance_indicators") == 5
        assert [i.dataset_id for i in indicators] == \
            [r.dataset_id for r in covid_results[:5]]

    def test_fewer_results_generate_fewer(self, covid_state, covid_results,
                                          fixture_catalog):
        provider = CountingProvider()
        gateway = LlmGateway(provider, ProviderConfig())
        indicators = eager_indicators(covid_state, covid_results[:2],
                                      fixture_catalog, gateway,
                                      RelevanceCache(16))
        assert len(indicators) == 2
        assert provider.calls("relevance_indicators") == 2

    def test_cache_makes_repeat_free(self, covid_state, covid_results,
                                     fixture_catalog):
        provider = CountingProvider()
        gateway = LlmGateway(provider, ProviderConfig())
        cache = RelevanceCache(16)
        eager_indicators(covid_state, covid_results, fixture_catalog,
                         gateway, cache)
        eager_indicators(covid_state, covid_results, fixture_catalog,
                         gateway, cache)
        assert provider.calls("relevance_indicators") == 5
