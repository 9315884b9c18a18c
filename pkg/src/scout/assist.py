"""Proactive assistance: suggestions and per-dataset relevance indicators.

Suggestions are grounded in the current result page. Reformulations come
from clustering the purpose embeddings of the results, concept filters from
clustering their attribute embeddings, and granularity suggestions from a
frequency count of the results' tags. Relevance indicators are generated
per (search state, dataset) pair and cached so repeats cost no provider
calls.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .catalog import (
    SPATIAL_GRANULARITIES,
    STATUS_OK,
    TEMPORAL_GRANULARITIES,
    Catalog,
    EnrichedDataset,
)
from .corpus import make_preview
from .gateway import GatewayError, LlmGateway
from .kmeans import kmeans
from .search import ConceptFilter, RankedResult, SearchState, cosine_to_query
from .textutil import most_frequent_token

logger = logging.getLogger(__name__)

SUGGESTION_CLUSTERS = 15
MAX_REFORMULATIONS = 3
MAX_CONCEPTS = 5
MAX_GRANULARITY = 3
EAGER_INDICATORS = 5
INDICATOR_CACHE_SIZE = 10_000


@dataclass(frozen=True)
class ReformulationSuggestion:
    query: str
    reason: str
    matching_count: int
    dataset_ids: tuple[str, ...]


@dataclass(frozen=True)
class GranularitySuggestions:
    temporal: tuple[str, ...] = ()
    spatial: tuple[str, ...] = ()


@dataclass(frozen=True)
class RelevanceIndicator:
    dataset_id: str
    utilities: str
    limitations: str
    state_digest: str


class RelevanceCache:
    """Thread-safe LRU cache keyed by (state digest, dataset id)."""

    def __init__(self, max_entries: int = INDICATOR_CACHE_SIZE) -> None:
        if max_entries <= 0:
            raise ValueError("max_entries must be positive")
        self._max = max_entries
        self._lock = threading.Lock()
        self._entries: OrderedDict[tuple[str, str], RelevanceIndicator] = OrderedDict()

    def get(self, digest: str, dataset_id: str) -> RelevanceIndicator | None:
        with self._lock:
            key = (digest, dataset_id)
            indicator = self._entries.get(key)
            if indicator is not None:
                self._entries.move_to_end(key)
            return indicator

    def put(self, indicator: RelevanceIndicator) -> None:
        with self._lock:
            key = (indicator.state_digest, indicator.dataset_id)
            self._entries[key] = indicator
            self._entries.move_to_end(key)
            while len(self._entries) > self._max:
                self._entries.popitem(last=False)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def to_json(self) -> dict[str, Any]:
        with self._lock:
            return {
                f"{digest}:{dataset_id}": {
                    "utilities": ind.utilities,
                    "limitations": ind.limitations,
                }
                for (digest, dataset_id), ind in self._entries.items()
            }

    @classmethod
    def from_json(cls, data: dict[str, Any],
                  max_entries: int = INDICATOR_CACHE_SIZE) -> RelevanceCache:
        cache = cls(max_entries)
        for key, value in data.items():
            digest, _, dataset_id = key.partition(":")
            if not digest or not dataset_id or not isinstance(value, dict):
                continue
            cache.put(RelevanceIndicator(
                dataset_id=dataset_id,
                utilities=str(value.get("utilities", "")),
                limitations=str(value.get("limitations", "")),
                state_digest=digest,
            ))
        return cache


def _result_datasets(results: Sequence[RankedResult],
                     catalog: Catalog) -> list[EnrichedDataset]:
    out = []
    for result in results:
        dataset = catalog.get(result.dataset_id)
        if dataset is not None and dataset.status == STATUS_OK:
            out.append(dataset)
    return out


RELEVANCE_MODES = ("centroid", "max_member")


def _rank_clusters(centroids: np.ndarray, members_of: list[list[int]],
                   vectors: np.ndarray, query_vector: np.ndarray,
                   mode: str = "centroid") -> list[int]:
    """Cluster indexes sorted by relevance to the query, best first.

    "centroid" compares the cluster centroid to the query embedding;
    "max_member" uses the best member vector instead.
    """
    if mode not in RELEVANCE_MODES:
        raise ValueError(f"unknown cluster relevance mode: {mode!r}")
    scored = []
    for cluster, members in enumerate(members_of):
        if not members:
            continue
        if mode == "centroid":
            relevance = cosine_to_query(centroids[cluster], query_vector)
        else:
            relevance = max(cosine_to_query(vectors[i], query_vector)
                            for i in members)
        scored.append((-relevance, cluster))
    scored.sort()
    return [cluster for _, cluster in scored]


def _cluster_members(assignments: np.ndarray, k: int) -> list[list[int]]:
    members: list[list[int]] = [[] for _ in range(k)]
    for i, cluster in enumerate(assignments):
        members[int(cluster)].append(i)
    return members


def suggest_reformulations(state: SearchState,
                           results: Sequence[RankedResult],
                           catalog: Catalog,
                           gateway: LlmGateway,
                           seed: int,
                           k: int = SUGGESTION_CLUSTERS,
                           limit: int = MAX_REFORMULATIONS,
                           relevance_mode: str = "centroid",
                           ) -> list[ReformulationSuggestion]:
    """Up to ``limit`` alternative queries, one per purpose cluster.

    Clusters of the results' purpose embeddings are ranked by how close
    their centroid is to the query embedding; the top ones are summarized
    into a reformulated query each. Provider failure degrades to an empty
    list, never an error.
    """
    datasets = [d for d in _result_datasets(results, catalog)
                if d.purpose_embedding is not None]
    if not datasets:
        return []
    try:
        vectors = np.stack([d.purpose_embedding for d in datasets])
        km = kmeans(vectors, k=k, seed=seed)
        query_vector = gateway.embed_texts([state.query.text])[0]
        members_of = _cluster_members(km.assignments, km.k_effective)
        ranked = _rank_clusters(km.centroids, members_of, vectors,
                                query_vector, relevance_mode)

        suggestions = []
        for cluster in ranked[:limit]:
            member_datasets = [datasets[i] for i in members_of[cluster]]
            titles = "; ".join(d.record.title for d in member_datasets)
            result = gateway.complete_structured(
                "reformulation",
                {"query": state.query.text, "cluster": titles},
            )
            suggestions.append(ReformulationSuggestion(
                query=str(result.parsed.get("query", "")).strip(),
                reason=str(result.parsed.get("reason", "")).strip(),
                matching_count=len(member_datasets),
                dataset_ids=tuple(d.id for d in member_datasets),
            ))
        return [s for s in suggestions if s.query]
    except GatewayError as exc:
        logger.warning("reformulation suggestions unavailable: %s", exc)
        return []


_LABEL_SANITIZE_RE = re.compile(r"[^a-z0-9 ]+")


def _sanitize_label(label: str, fallback_names: Sequence[str]) -> str:
    cleaned = _LABEL_SANITIZE_RE.sub(" ", label.lower())
    words = cleaned.split()[:2]
    if not words:
        fallback = most_frequent_token(fallback_names)
        return fallback or "misc"
    return " ".join(words)


def suggest_concepts(state: SearchState,
                     results: Sequence[RankedResult],
                     catalog: Catalog,
                     gateway: LlmGateway,
                     seed: int,
                     k: int = SUGGESTION_CLUSTERS,
                     limit: int = MAX_CONCEPTS,
                     relevance_mode: str = "centroid") -> list[ConceptFilter]:
    """Up to ``limit`` concept filters from attribute-embedding clusters."""
    datasets = _result_datasets(results, catalog)
    attr_owner: list[tuple[str, str]] = []
    attr_vectors: list[np.ndarray] = []
    for dataset in datasets:
        for column_name, vector in dataset.attribute_embeddings:
            attr_owner.append((dataset.id, column_name))
            attr_vectors.append(vector)
    if not attr_vectors:
        return []
    try:
        vectors = np.stack(attr_vectors)
        km = kmeans(vectors, k=k, seed=seed)
        query_vector = gateway.embed_texts([state.query.text])[0]
        members_of = _cluster_members(km.assignments, km.k_effective)
        ranked = _rank_clusters(km.centroids, members_of, vectors,
                                query_vector, relevance_mode)[:limit]
        if not ranked:
            return []

        name_groups = [[attr_owner[i][1] for i in members_of[c]] for c in ranked]
        result = gateway.complete_structured(
            "column_concepts",
            {"query": state.query.text,
             "cluster": json.dumps(name_groups, ensure_ascii=False)},
        )
        raw_labels = [str(lbl) for lbl in result.parsed] \
            if isinstance(result.parsed, list) else []

        concepts = []
        for pos, cluster in enumerate(ranked):
            names = name_groups[pos]
            raw = raw_labels[pos] if pos < len(raw_labels) else ""
            label = _sanitize_label(raw, names)
            concepts.append(ConceptFilter(
                label=label,
                members=tuple((attr_owner[i][0], attr_owner[i][1])
                              for i in members_of[cluster]),
                centroid=tuple(float(x) for x in km.centroids[cluster]),
            ))
        return concepts
    except GatewayError as exc:
        logger.warning("concept suggestions unavailable: %s", exc)
        return []


def suggest_granularity(results: Sequence[RankedResult],
                        catalog: Catalog,
                        limit: int = MAX_GRANULARITY) -> GranularitySuggestions:
    """Most frequent granularity tags among results, finer tags first on ties."""
    datasets = _result_datasets(results, catalog)
    return GranularitySuggestions(
        temporal=_top_tags([d.granularity.temporal for d in datasets],
                           TEMPORAL_GRANULARITIES, limit),
        spatial=_top_tags([d.granularity.spatial for d in datasets],
                          SPATIAL_GRANULARITIES, limit),
    )


def _top_tags(tags: Sequence[str | None], vocabulary: Sequence[str],
              limit: int) -> tuple[str, ...]:
    counts: dict[str, int] = {}
    for tag in tags:
        if tag is not None:
            counts[tag] = counts.get(tag, 0) + 1
    # Vocabularies list coarse to fine, so a higher index is a finer tag;
    # ties favor the finer one.
    ordered = sorted(counts.items(),
                     key=lambda kv: (-kv[1], -vocabulary.index(kv[0])))
    return tuple(tag for tag, _ in ordered[:limit])


def _filters_summary(state: SearchState) -> str:
    canonical = state.filters.to_canonical()
    if not canonical:
        return "none"
    return json.dumps(canonical, ensure_ascii=False, sort_keys=True)


def _query_text(state: SearchState) -> str:
    query = state.query
    if query.task_type is not None:
        return f"{query.text} (task type: {query.task_type})"
    return query.text


def relevance_for(state: SearchState,
                  dataset: EnrichedDataset,
                  gateway: LlmGateway,
                  cache: RelevanceCache) -> RelevanceIndicator:
    """Utilities and limitations of one dataset for the current search.

    Cached per (state digest, dataset id); a provider failure yields an
    uncached placeholder so a later attempt can still succeed.
    """
    cached = cache.get(state.digest, dataset.id)
    if cached is not None:
        return cached

    description = dataset.record.description.strip()
    if dataset.augmented is not None:
        description = dataset.augmented.description_summary or description
    purposes = "N/A"
    sources = "N/A"
    if dataset.augmented is not None:
        if dataset.augmented.dataset_purposes:
            purposes = "; ".join(dataset.augmented.dataset_purposes)
        if dataset.augmented.dataset_sources.strip():
            sources = dataset.augmented.dataset_sources
    try:
        result = gateway.complete_structured(
            "relevance_indicators",
            {
                "query": _query_text(state),
                "filters": _filters_summary(state),
                "description": description or "N/A",
                "schema": make_preview(dataset.record).rendered or "N/A",
                "purpose": purposes,
                "source": sources,
            },
        )
    except GatewayError as exc:
        logger.warning("relevance indicator for %s unavailable: %s",
                       dataset.id, exc)
        return RelevanceIndicator(
            dataset_id=dataset.id,
            utilities="Relevance details are temporarily unavailable.",
            limitations="Relevance details are temporarily unavailable.",
            state_digest=state.digest,
        )

    indicator = RelevanceIndicator(
        dataset_id=dataset.id,
        utilities=str(result.parsed.get("utilities", "")).strip(),
        limitations=str(result.parsed.get("limitations", "")).strip(),
        state_digest=state.digest,
    )
    cache.put(indicator)
    return indicator


def eager_indicators(state: SearchState,
                     results: Sequence[RankedResult],
                     catalog: Catalog,
                     gateway: LlmGateway,
                     cache: RelevanceCache,
                     top: int = EAGER_INDICATORS) -> list[RelevanceIndicator]:
    """Generate indicators for the top results concurrently (cache-aware)."""
    head = [catalog.get(r.dataset_id) for r in results[:top]]
    targets = [d for d in head if d is not None]
    if not targets:
        return []
    if len(targets) == 1:
        return [relevance_for(state, targets[0], gateway, cache)]
    with ThreadPoolExecutor(max_workers=min(len(targets), EAGER_INDICATORS)) as pool:
        return list(pool.map(
            lambda d: relevance_for(state, d, gateway, cache), targets))
