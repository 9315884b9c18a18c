"""Top-level guarantees of the engine, one test class per contract:
index recall, the aggregate scoring law, suggestion grounding, clustering
determinism, indicator-cache discipline, filter algebra, the latency
envelope, and a byte-reproducible pipeline run.
"""

import contextlib
import io
import json
import time
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from conftest import FIXTURE_CORPUS, make_gateway
from doubles import CountingProvider
from scout.api import create_app
from scout.catalog import SPATIAL_GRANULARITIES, TEMPORAL_GRANULARITIES
from scout.cli import main as cli_main
from scout.engine import SearchEngine
from scout.gateway import LlmGateway, ProviderConfig
from scout.index import HnswIndex, HnswParams, brute_force_knn
from scout.kmeans import kmeans
from scout.search import (
    ConceptFilter,
    ExactFilters,
    FilterSet,
    SearchQuery,
    apply_filters,
)
from synthutil import synthetic_catalog

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="module")
def fixture_results(fixture_catalog, mock_gateway):
    from scout.search import embed_schemas, generate_schemas, score_and_rank
    embeddings = embed_schemas(
        generate_schemas(SearchQuery(text="quality of life during COVID"),
                         mock_gateway),
        mock_gateway)
    return score_and_rank(embeddings, fixture_catalog, top_n=100)


@pytest.fixture(scope="module")
def synth_client():
    catalog = synthetic_catalog(6500)
    engine = SearchEngine(catalog, make_gateway())
    return TestClient(create_app(engine))


PROBE_QUERIES = [
    SearchQuery(text="quality of life during COVID"),
    SearchQuery(text="movie box office revenue", task_type="regression"),
    SearchQuery(text="hourly electricity demand", task_type="temporal_analysis"),
    SearchQuery(text="student exam outcomes", task_type="classification"),
    SearchQuery(text="city air pollution levels", task_type="visualization"),
]


class TestIndexFidelity:
    def test_recall_on_thousand_vectors_within_time_budget(self):
        rng = np.random.default_rng(4242)
        vectors = rng.normal(size=(1000, 64)).astype(np.float32)
        queries = rng.normal(size=(50, 64)).astype(np.float32)

        started = time.perf_counter()
        index = HnswIndex(64, HnswParams(m=16, ef_construction=64,
                                         ef_search=100, seed=42))
        for i, vector in enumerate(vectors):
            index.insert(f"v{i:04d}", vector)
        hits = 0
        for query in queries:
            approx = {id_ for id_, _ in index.knn(query, 10)}
            exact = {id_ for id_, _ in brute_force_knn(index.entries, query, 10)}
            hits += len(approx & exact)
        elapsed = time.perf_counter() - started

        recall = hits / (10 * len(queries))
        assert recall >= 0.95, f"recall@10 {recall:.4f}"
        assert elapsed < 5.0, f"took {elapsed:.2f}s"

    @pytest.mark.parametrize("n", [64, 200, 256])
    def test_small_sets_with_wide_beam_are_exact(self, n):
        rng = np.random.default_rng(n)
        vectors = rng.normal(size=(n, 64)).astype(np.float32)
        index = HnswIndex(64, HnswParams(m=16, ef_construction=64, seed=42))
        for i, vector in enumerate(vectors):
            index.insert(f"v{i:04d}", vector)
        for query in rng.normal(size=(10, 64)).astype(np.float32):
            approx = [id_ for id_, _ in index.knn(query, 10, ef_search=2 * n)]
            exact = [id_ for id_, _ in brute_force_knn(index.entries, query, 10)]
            recall = len(set(approx) & set(exact)) / 10
            assert recall == 1.0


class TestScoringLaw:
    def test_aggregate_is_mean_of_three_cosines(self, make_engine):
        engine = make_engine()
        for query in PROBE_QUERIES:
            outcome = engine.search(query, defer_suggestions=True)
            assert outcome.results
            for result in outcome.results:
                assert len(result.per_schema_scores) == 3
                mean = sum(result.per_schema_scores) / 3.0
                assert abs(result.aggregate_score - mean) <= 1e-9, \
                    f"{result.dataset_id}: {result.aggregate_score} vs {mean}"


class TestSuggestionGrounding:
    def test_every_search_bounded_and_grounded(self, make_engine):
        engine = make_engine()
        for query in PROBE_QUERIES:
            outcome = engine.search(query)
            bundle = outcome.suggestions
            assert bundle is not None
            assert len(bundle.reformulations) <= 3
            assert len(bundle.concepts) <= 5
            assert len(bundle.granularity.temporal) <= 3
            assert len(bundle.granularity.spatial) <= 3
            result_ids = {r.dataset_id for r in outcome.results}
            for suggestion in bundle.reformulations:
                assert suggestion.matching_count >= 1
                assert suggestion.matching_count == len(suggestion.dataset_ids)
                assert set(suggestion.dataset_ids) <= result_ids


class TestClusteringContract:
    def test_fixed_seed_identical_across_ten_runs(self):
        rng = np.random.default_rng(31)
        data = rng.normal(size=(80, 12))
        first = kmeans(data, k=15, seed=7)
        for _ in range(9):
            run = kmeans(data, k=15, seed=7)
            assert np.array_equal(run.assignments, first.assignments)
            assert np.array_equal(run.centroids, first.centroids)
            assert run.inertia == first.inertia

    def test_inertia_non_increasing_per_iteration(self):
        rng = np.random.default_rng(32)
        data = rng.normal(size=(120, 8))
        result = kmeans(data, k=15, seed=7)
        history = result.inertia_history
        assert history
        for earlier, later in zip(history, history[1:]):
            assert later <= earlier + 1e-12

    @pytest.mark.parametrize("n", [1, 5, 14, 40])
    def test_k_effective_clamps_on_degenerate_inputs(self, n):
        rng = np.random.default_rng(n)
        data = rng.normal(size=(n, 4))
        result = kmeans(data, k=15, seed=7)
        assert result.k_effective == min(15, n)
        assert set(result.assignments) == set(range(result.k_effective))


class TestIndicatorDiscipline:
    @pytest.fixture()
    def counted(self, fixture_catalog, dataset_index, attribute_index):
        provider = CountingProvider()
        gateway = LlmGateway(provider, ProviderConfig())
        engine = SearchEngine(fixture_catalog, gateway, dataset_index,
                              attribute_index)
        return provider, TestClient(create_app(engine))

    def test_eager_repeat_and_change_counts(self, counted):
        provider, client = counted

        body = client.post("/api/search",
                           json={"query": "climate data"}).json()
        assert body["total_results"] >= 5
        assert provider.calls("relevance_indicators") == 5

        client.post("/api/search", json={"query": "climate data"})
        assert provider.calls("relevance_indicators") == 5

        client.post("/api/search", json={"query": "climate data trends"})
        assert provider.calls("relevance_indicators") == 10

        client.post("/api/search", json={"query": "climate data",
                                         "filters": {"temporal": "Year"}})
        assert provider.calls("relevance_indicators") == 15


def _optional(data, value):
    return value if data.draw(st.booleans()) else None


def _pools(catalog):
    tags = sorted({t for d in catalog for t in d.record.tags})
    words = sorted({w for d in catalog for w in d.record.title.lower().split()})
    attrs = sorted((d.record.id, c.name)
                   for d in catalog for c in d.record.columns)
    return tags, words + ["zzz-no-such-word"], attrs


def _draw_concepts(data, attrs, label):
    if not data.draw(st.booleans()):
        return ()
    members = data.draw(st.lists(st.sampled_from(attrs), min_size=1,
                                 max_size=6, unique=True))
    return (ConceptFilter(label=label, members=tuple(sorted(members))),)


def _draw_filters(data, tags, words, attrs, rows, cols, sizes, scalars):
    exact = ExactFilters(
        title_contains=_optional(data, data.draw(st.sampled_from(words))),
        description_contains=_optional(data, data.draw(st.sampled_from(words))),
        tags_any=tuple(data.draw(st.lists(st.sampled_from(tags),
                                          max_size=2, unique=True))),
        min_rows=_optional(data, rows[0]),
        max_rows=_optional(data, rows[1]),
        min_cols=_optional(data, cols[0]),
        max_cols=_optional(data, cols[1]),
        max_size_bytes=_optional(data, sizes),
    ) if scalars else ExactFilters(
        min_rows=_optional(data, rows[0]),
        max_rows=_optional(data, rows[1]),
        min_cols=_optional(data, cols[0]),
        max_cols=_optional(data, cols[1]),
        max_size_bytes=_optional(data, sizes),
    )
    return FilterSet(
        exact=exact,
        concepts=_draw_concepts(data, attrs, "grp a" if scalars else "grp b"),
        temporal=_optional(data, data.draw(
            st.sampled_from(TEMPORAL_GRANULARITIES))) if scalars else None,
        spatial=_optional(data, data.draw(
            st.sampled_from(SPATIAL_GRANULARITIES))) if scalars else None,
    )


def _merge_bound(a, b, pick):
    if a is None:
        return b
    if b is None:
        return a
    return pick(a, b)


def _conjoin(f1: FilterSet, f2: FilterSet) -> FilterSet:
    return FilterSet(
        exact=ExactFilters(
            title_contains=f1.exact.title_contains,
            description_contains=f1.exact.description_contains,
            tags_any=f1.exact.tags_any,
            min_rows=_merge_bound(f1.exact.min_rows, f2.exact.min_rows, max),
            max_rows=_merge_bound(f1.exact.max_rows, f2.exact.max_rows, min),
            min_cols=_merge_bound(f1.exact.min_cols, f2.exact.min_cols, max),
            max_cols=_merge_bound(f1.exact.max_cols, f2.exact.max_cols, min),
            max_size_bytes=_merge_bound(f1.exact.max_size_bytes,
                                        f2.exact.max_size_bytes, min),
        ),
        concepts=f1.concepts + f2.concepts,
        temporal=f1.temporal,
        spatial=f2.spatial or f1.spatial,
    )


class TestFilterAlgebra:
    @settings(max_examples=1000, deadline=None, derandomize=True,
              database=None,
              suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(data=st.data())
    def test_subset_and_order_preservation(self, data, fixture_results,
                                           fixture_catalog):
        tags, words, attrs = _pools(fixture_catalog)
        quad_r = sorted(data.draw(st.lists(st.integers(0, 2_000_000),
                                           min_size=2, max_size=2)))
        quad_c = sorted(data.draw(st.lists(st.integers(0, 12),
                                           min_size=2, max_size=2)))
        size = data.draw(st.integers(0, 3_000_000_000))
        filters = _draw_filters(data, tags, words, attrs, quad_r, quad_c,
                                size, scalars=True)

        filtered = apply_filters(fixture_results, filters, fixture_catalog)

        originals = {id(r) for r in fixture_results}
        assert all(id(r) in originals for r in filtered)
        position = {r.dataset_id: i for i, r in enumerate(fixture_results)}
        indices = [position[r.dataset_id] for r in filtered]
        assert indices == sorted(indices)

    @settings(max_examples=1000, deadline=None, derandomize=True,
              database=None,
              suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(data=st.data())
    def test_conjunction_composes(self, data, fixture_results,
                                  fixture_catalog):
        tags, words, attrs = _pools(fixture_catalog)
        # Nested bound quads keep both filters and their conjunction valid.
        r = sorted(data.draw(st.lists(st.integers(0, 2_000_000),
                                      min_size=4, max_size=4)))
        c = sorted(data.draw(st.lists(st.integers(0, 12),
                                      min_size=4, max_size=4)))
        s = sorted(data.draw(st.lists(st.integers(0, 3_000_000_000),
                                      min_size=2, max_size=2)))
        f1 = _draw_filters(data, tags, words, attrs, (r[0], r[3]),
                           (c[0], c[3]), s[1], scalars=True)
        f2 = _draw_filters(data, tags, words, attrs, (r[1], r[2]),
                           (c[1], c[2]), s[0], scalars=False)

        sequential = apply_filters(
            apply_filters(fixture_results, f1, fixture_catalog),
            f2, fixture_catalog)
        combined = apply_filters(fixture_results, _conjoin(f1, f2),
                                 fixture_catalog)
        assert [r_.dataset_id for r_ in sequential] == \
            [r_.dataset_id for r_ in combined]


class TestLatencyEnvelope:
    def test_p95_search_under_200ms(self, synth_client):
        topics = ["housing prices", "climate change", "movie ratings",
                  "energy consumption", "student performance",
                  "traffic accidents", "retail sales", "air quality",
                  "sports results", "public health", "remote work",
                  "social media trends", "unemployment figures",
                  "rainfall patterns", "vaccination rates", "customer churn",
                  "flight delays", "wind power", "consumer prices",
                  "bike sharing"]
        queries = [f"{topic} analysis {i}" for i in range(2)
                   for topic in topics]
        for query in queries[:3]:
            synth_client.post("/api/search", json={"query": query + " warmup"})

        samples = []
        for query in queries:
            started = time.perf_counter()
            response = synth_client.post("/api/search", json={"query": query})
            samples.append((time.perf_counter() - started) * 1000.0)
            assert response.status_code == 200
        p95 = float(np.percentile(np.array(samples), 95))
        assert p95 < 200.0, f"p95 {p95:.1f}ms over {len(samples)} requests"


class TestGoldenRun:
    def test_pipeline_reproduces_checked_in_artifacts(self, tmp_path,
                                                      monkeypatch, capsys):
        monkeypatch.setenv("SCOUT_MOCK", "1")
        monkeypatch.delenv("SCOUT_LLM_BASE_URL", raising=False)
        catalog = tmp_path / "catalog.scout"
        index_dir = tmp_path / "indexes"

        assert cli_main(["ingest", "--corpus", str(FIXTURE_CORPUS),
                         "--out", str(catalog)]) == 0
        assert cli_main(["enrich", "--catalog", str(catalog)]) == 0
        assert cli_main(["index", "--catalog", str(catalog),
                         "--out", str(index_dir)]) == 0
        capsys.readouterr()

        assert cli_main(["query", "--catalog", str(catalog),
                         "--index", str(index_dir),
                         "--text", "quality of life during COVID",
                         "--top", "100", "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)

        ranked_bytes = (json.dumps(payload["ranked_ids"], indent=2,
                                   sort_keys=True) + "\n").encode("utf-8")
        suggestion_bytes = (json.dumps(payload["suggestions"], indent=2,
                                       sort_keys=True) + "\n").encode("utf-8")
        assert ranked_bytes == (GOLDEN / "covid_ranked_ids.json").read_bytes()
        assert suggestion_bytes == \
            (GOLDEN / "covid_suggestions.json").read_bytes()
