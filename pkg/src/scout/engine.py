"""Search engine orchestration: one object owning catalog, indexes, gateway.

The engine exposes the full online flow: run a search, narrow it with
filters, fetch suggestions, and resolve relevance indicators lazily or for
the top of the result page. Search outcomes are kept in a bounded LRU keyed
by state digest so follow-up requests (suggestions, indicators, details)
can refer back to them.
"""

from __future__ import annotations

import logging
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

from .assist import (
    EAGER_INDICATORS,
    MAX_CONCEPTS,
    MAX_REFORMULATIONS,
    SUGGESTION_CLUSTERS,
    GranularitySuggestions,
    ReformulationSuggestion,
    RelevanceCache,
    RelevanceIndicator,
    eager_indicators,
    relevance_for,
    suggest_concepts,
    suggest_granularity,
    suggest_reformulations,
)
from .catalog import Catalog, EnrichedDataset
from .gateway import LlmGateway
from .index import HnswIndex
from .search import (
    DEFAULT_TOP_N,
    AttributeHit,
    ConceptFilter,
    FilterSet,
    RankedResult,
    SearchError,
    SearchQuery,
    SearchState,
    apply_filters,
    attribute_hit_datasets,
    attribute_search,
    embed_schemas,
    generate_schemas,
    make_state,
    score_and_rank,
)

logger = logging.getLogger(__name__)

STATE_CACHE_SIZE = 256


@dataclass
class EngineConfig:
    top_n: int = DEFAULT_TOP_N
    scoring_mode: str = "auto"
    exact_threshold: int = 10_000
    ef_search: int | None = None
    kmeans_k: int = SUGGESTION_CLUSTERS
    kmeans_seed: int = 17
    max_reformulations: int = MAX_REFORMULATIONS
    max_concepts: int = MAX_CONCEPTS
    attribute_k: int = 50
    eager_top: int = EAGER_INDICATORS
    indicator_cache_size: int = 10_000
    cluster_relevance: str = "centroid"


@dataclass(frozen=True)
class SuggestionBundle:
    reformulations: tuple[ReformulationSuggestion, ...] = ()
    concepts: tuple[ConceptFilter, ...] = ()
    granularity: GranularitySuggestions = field(default_factory=GranularitySuggestions)


@dataclass
class SearchOutcome:
    state: SearchState
    results: list[RankedResult]
    suggestions: SuggestionBundle | None
    attribute_hits: list[str] | None = None


class UnknownState(SearchError):
    """Raised when a digest does not match any cached search."""


class SearchEngine:
    def __init__(self, catalog: Catalog, gateway: LlmGateway,
                 dataset_index: HnswIndex | None = None,
                 attribute_index: HnswIndex | None = None,
                 config: EngineConfig | None = None,
                 relevance_cache: RelevanceCache | None = None):
        self.catalog = catalog
        self.gateway = gateway
        self.dataset_index = dataset_index
        self.attribute_index = attribute_index
        self.config = config or EngineConfig()
        self.relevance_cache = relevance_cache or RelevanceCache(
            self.config.indicator_cache_size)
        self._states: OrderedDict[str, SearchOutcome] = OrderedDict()
        self._states_lock = threading.Lock()

    def search(self, query: SearchQuery, filters: FilterSet | None = None,
               defer_suggestions: bool = False) -> SearchOutcome:
        """Run retrieval, apply filters, and (optionally) build suggestions."""
        filters = filters or FilterSet()
        state = make_state(query, filters)

        schemas = generate_schemas(query, self.gateway)
        embeddings = embed_schemas(schemas, self.gateway)
        ranked = score_and_rank(
            embeddings, self.catalog, self.dataset_index,
            top_n=self.config.top_n, mode=self.config.scoring_mode,
            ef_search=self.config.ef_search,
            exact_threshold=self.config.exact_threshold)

        attribute_hits = None
        if filters.attribute_query is not None:
            attribute_hits = self._attribute_hit_ids(filters.attribute_query)
        results = apply_filters(ranked, filters, self.catalog, attribute_hits)

        outcome = SearchOutcome(state=state, results=results, suggestions=None,
                                attribute_hits=attribute_hits)
        self._remember(outcome)
        if not defer_suggestions:
            outcome.suggestions = self._build_suggestions(outcome)
        logger.info("search %s: %d results (digest %.12s)", query.text,
                    len(results), state.digest)
        return outcome

    def suggestions_for(self, digest: str) -> SuggestionBundle:
        """Suggestions for a past search, computing them on first request."""
        outcome = self._recall(digest)
        if outcome.suggestions is None:
            outcome.suggestions = self._build_suggestions(outcome)
        return outcome.suggestions

    def eager_relevance(self, digest: str) -> list[RelevanceIndicator]:
        """Indicators for the top results of a past search."""
        outcome = self._recall(digest)
        return eager_indicators(outcome.state, outcome.results, self.catalog,
                                self.gateway, self.relevance_cache,
                                top=self.config.eager_top)

    def relevance(self, digest: str, dataset_id: str) -> RelevanceIndicator:
        """Indicator for one dataset of a past search (lazy path)."""
        outcome = self._recall(digest)
        dataset = self.catalog.get(dataset_id)
        if dataset is None:
            raise SearchError(f"unknown dataset: {dataset_id!r}")
        return relevance_for(outcome.state, dataset, self.gateway,
                             self.relevance_cache)

    def outcome_for(self, digest: str) -> SearchOutcome:
        return self._recall(digest)

    def dataset_detail(self, dataset_id: str) -> EnrichedDataset:
        dataset = self.catalog.get(dataset_id)
        if dataset is None:
            raise SearchError(f"unknown dataset: {dataset_id!r}")
        return dataset

    def find_attributes(self, name: str, k: int | None = None) -> list[AttributeHit]:
        if self.attribute_index is None:
            raise SearchError("attribute search requires an attribute index")
        return attribute_search(name, self.gateway, self.attribute_index,
                                k=k or self.config.attribute_k,
                                ef_search=self.config.ef_search)

    def _attribute_hit_ids(self, name: str) -> list[str]:
        return attribute_hit_datasets(self.find_attributes(name))

    def _build_suggestions(self, outcome: SearchOutcome) -> SuggestionBundle:
        state, results = outcome.state, outcome.results
        reformulations = suggest_reformulations(
            state, results, self.catalog, self.gateway,
            seed=self.config.kmeans_seed, k=self.config.kmeans_k,
            limit=self.config.max_reformulations,
            relevance_mode=self.config.cluster_relevance)
        concepts = suggest_concepts(
            state, results, self.catalog, self.gateway,
            seed=self.config.kmeans_seed, k=self.config.kmeans_k,
            limit=self.config.max_concepts,
            relevance_mode=self.config.cluster_relevance)
        granularity = suggest_granularity(results, self.catalog)
        return SuggestionBundle(
            reformulations=tuple(reformulations),
            concepts=tuple(concepts),
            granularity=granularity,
        )

    def _remember(self, outcome: SearchOutcome) -> None:
        with self._states_lock:
            self._states[outcome.state.digest] = outcome
            self._states.move_to_end(outcome.state.digest)
            while len(self._states) > STATE_CACHE_SIZE:
                self._states.popitem(last=False)

    def _recall(self, digest: str) -> SearchOutcome:
        with self._states_lock:
            outcome = self._states.get(digest)
            if outcome is not None:
                self._states.move_to_end(digest)
        if outcome is None:
            raise UnknownState(f"no cached search for digest {digest!r}")
        return outcome
