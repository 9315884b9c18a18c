"""Online retrieval: hypothetical schemas, scoring, ranking, and filters.

A natural-language query is turned into exactly three hypothetical table
schemas. Each schema is embedded and compared against every dataset
embedding; a dataset's score is the arithmetic mean of its three cosine
similarities. Results are ranked by that score and then narrowed by exact
and semantic filters without re-running retrieval.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .catalog import (
    SPATIAL_GRANULARITIES,
    STATUS_OK,
    TEMPORAL_GRANULARITIES,
    Catalog,
    EnrichedDataset,
)
from .corpus import render_markdown_table
from .gateway import GatewayError, LlmGateway
from .index import HnswIndex, IndexError_, cosine

logger = logging.getLogger(__name__)

TASK_TYPES = ("regression", "classification", "visualization",
              "temporal_analysis", "other")

SCHEMAS_PER_QUERY = 3
DEFAULT_TOP_N = 100

# Joins dataset id and column name into one attribute-index key; corpus ids
# cannot contain control characters, so the split is unambiguous.
ATTR_KEY_SEP = "\x1f"


class SearchError(Exception):
    """Base for retrieval failures."""


class FilterError(SearchError):
    """Raised when a filter is malformed (unknown vocabulary, bad bounds)."""


class SearchUnavailable(SearchError):
    """Raised when the language-model provider cannot serve a search."""


@dataclass(frozen=True)
class SearchQuery:
    text: str
    task_type: str | None = None

    def __post_init__(self) -> None:
        if not self.text or not self.text.strip():
            raise SearchError("query text must be nonempty")
        if self.task_type is not None and self.task_type not in TASK_TYPES:
            raise SearchError(f"unknown task type: {self.task_type!r}")


@dataclass(frozen=True)
class HypotheticalSchema:
    table_name: str
    column_names: tuple[str, ...]
    data_types: tuple[str, ...]
    example_row: tuple[str, ...]

    def __post_init__(self) -> None:
        if not (len(self.column_names) == len(self.data_types)
                == len(self.example_row)):
            raise SearchError("schema columns, types, and example row must align")


def schema_embedding_input(schema: HypotheticalSchema) -> str:
    """Text embedded for a hypothetical schema, shaped like a dataset preview."""
    rows = (schema.example_row,) if schema.example_row else ()
    table = render_markdown_table(schema.column_names, rows)
    name = schema.table_name.strip() or "table"
    return f"{name}\n{table}" if table else name


@dataclass(frozen=True)
class ConceptFilter:
    """A labeled cluster of attributes usable as a semantic filter.

    The centroid is advisory metadata from the suggestion pass; filter
    identity (and so the state digest) is the label plus the member set,
    which is all a client can round-trip.
    """

    label: str
    members: tuple[tuple[str, str], ...]   # (dataset_id, column_name)
    centroid: tuple[float, ...] | None = None

    def dataset_ids(self) -> frozenset[str]:
        return frozenset(ds for ds, _ in self.members)


@dataclass(frozen=True)
class ExactFilters:
    title_contains: str | None = None
    description_contains: str | None = None
    tags_any: tuple[str, ...] = ()
    min_rows: int | None = None
    max_rows: int | None = None
    min_cols: int | None = None
    max_cols: int | None = None
    max_size_bytes: int | None = None

    def __post_init__(self) -> None:
        for name in ("min_rows", "max_rows", "min_cols", "max_cols",
                     "max_size_bytes"):
            value = getattr(self, name)
            if value is not None and (not isinstance(value, int) or value < 0):
                raise FilterError(f"{name} must be a non-negative integer")
        if (self.min_rows is not None and self.max_rows is not None
                and self.min_rows > self.max_rows):
            raise FilterError("min_rows exceeds max_rows")
        if (self.min_cols is not None and self.max_cols is not None
                and self.min_cols > self.max_cols):
            raise FilterError("min_cols exceeds max_cols")

    def is_empty(self) -> bool:
        return self == ExactFilters()


@dataclass(frozen=True)
class FilterSet:
    exact: ExactFilters = field(default_factory=ExactFilters)
    concepts: tuple[ConceptFilter, ...] = ()
    temporal: str | None = None
    spatial: str | None = None
    attribute_query: str | None = None

    def __post_init__(self) -> None:
        if self.temporal is not None and self.temporal not in TEMPORAL_GRANULARITIES:
            raise FilterError(f"unknown temporal granularity: {self.temporal!r}")
        if self.spatial is not None and self.spatial not in SPATIAL_GRANULARITIES:
            raise FilterError(f"unknown spatial granularity: {self.spatial!r}")
        if self.attribute_query is not None and not self.attribute_query.strip():
            raise FilterError("attribute_query must be nonempty when present")

    def is_empty(self) -> bool:
        return self == FilterSet()

    def to_canonical(self) -> dict[str, Any]:
        """Stable JSON-ready form, used for digests and wire responses."""
        exact: dict[str, Any] = {}
        for name in ("title_contains", "description_contains", "min_rows",
                     "max_rows", "min_cols", "max_cols", "max_size_bytes"):
            value = getattr(self.exact, name)
            if value is not None:
                exact[name] = value
        if self.exact.tags_any:
            exact["tags_any"] = list(self.exact.tags_any)
        out: dict[str, Any] = {}
        if exact:
            out["exact"] = exact
        if self.concepts:
            out["concepts"] = [
                {"label": c.label, "members": [list(m) for m in c.members]}
                for c in self.concepts
            ]
        if self.temporal is not None:
            out["temporal"] = self.temporal
        if self.spatial is not None:
            out["spatial"] = self.spatial
        if self.attribute_query is not None:
            out["attribute_query"] = self.attribute_query
        return out


@dataclass(frozen=True)
class SearchState:
    """A query plus its filters, identified by a stable digest."""

    query: SearchQuery
    filters: FilterSet
    digest: str


def make_state(query: SearchQuery, filters: FilterSet | None = None) -> SearchState:
    filters = filters or FilterSet()
    payload = {
        "query": query.text,
        "task_type": query.task_type,
        "filters": filters.to_canonical(),
    }
    canonical = json.dumps(payload, ensure_ascii=False, sort_keys=True,
                           separators=(",", ":"))
    digest = hashlib.sha256(canonical.encode("utf-8")).hexdigest()
    return SearchState(query=query, filters=filters, digest=digest)


@dataclass(frozen=True)
class RankedResult:
    dataset_id: str
    aggregate_score: float
    per_schema_scores: tuple[float, ...]


def _schema_from_parsed(item: dict[str, Any]) -> HypotheticalSchema:
    columns = [str(c) for c in item.get("column_names", [])]
    types = [str(t) for t in item.get("data_types", [])]
    example = ["" if v is None else str(v) for v in item.get("example_row", [])]
    width = min(len(columns), len(types), len(example))
    return HypotheticalSchema(
        table_name=str(item.get("table_name", "table")) or "table",
        column_names=tuple(columns[:width]),
        data_types=tuple(types[:width]),
        example_row=tuple(example[:width]),
    )


def generate_schemas(query: SearchQuery,
                     gateway: LlmGateway) -> list[HypotheticalSchema]:
    """Produce exactly three hypothetical schemas for a query.

    A provider answer with the wrong count is retried once, then coerced:
    extras are truncated, shortfalls padded by cycling the ones returned.
    """
    try:
        schemas = _request_schemas(query, gateway)
        if len(schemas) != SCHEMAS_PER_QUERY:
            logger.warning("provider returned %d schemas, retrying once",
                           len(schemas))
            schemas = _request_schemas(query, gateway)
    except GatewayError as exc:
        raise SearchUnavailable(f"schema generation failed: {exc}") from exc

    if not schemas:
        raise SearchUnavailable("provider returned no usable schemas")
    if len(schemas) != SCHEMAS_PER_QUERY:
        logger.warning("coercing %d schemas to %d", len(schemas),
                       SCHEMAS_PER_QUERY)
        returned = len(schemas)
        while len(schemas) < SCHEMAS_PER_QUERY:
            schemas.append(schemas[len(schemas) % returned])
        schemas = schemas[:SCHEMAS_PER_QUERY]
    return schemas


def _request_schemas(query: SearchQuery,
                     gateway: LlmGateway) -> list[HypotheticalSchema]:
    result = gateway.complete_structured(
        "hypothetical_schemas", {"query": query.text})
    parsed = result.parsed if isinstance(result.parsed, list) else []
    schemas = []
    for item in parsed:
        try:
            schemas.append(_schema_from_parsed(item))
        except SearchError:
            logger.warning("dropping malformed schema from provider")
    return schemas


def embed_schemas(schemas: Sequence[HypotheticalSchema],
                  gateway: LlmGateway) -> list[np.ndarray]:
    try:
        return gateway.embed_texts([schema_embedding_input(s) for s in schemas])
    except GatewayError as exc:
        raise SearchUnavailable(f"schema embedding failed: {exc}") from exc


def _downloads_key(dataset: EnrichedDataset) -> int:
    return dataset.record.downloads if dataset.record.downloads is not None else -1


def score_and_rank(schema_embeddings: Sequence[np.ndarray],
                   catalog: Catalog,
                   dataset_index: HnswIndex | None = None,
                   top_n: int = DEFAULT_TOP_N,
                   mode: str = "auto",
                   ef_search: int | None = None,
                   exact_threshold: int = 10_000) -> list[RankedResult]:
    """Score datasets against the schema embeddings and rank them.

    mode "exact" computes every cosine directly; "ann" pulls a candidate
    union from the vector index first; "auto" picks exact below
    ``exact_threshold`` datasets and ann above it. Ranking is by mean cosine
    descending, then downloads descending, then dataset id ascending.
    """
    if mode not in ("auto", "exact", "ann"):
        raise SearchError(f"unknown scoring mode: {mode!r}")
    if top_n <= 0:
        raise SearchError("top_n must be positive")
    if not schema_embeddings:
        raise SearchError("no schema embeddings to score")

    eligible = [d for d in catalog
                if d.status == STATUS_OK and d.dataset_embedding is not None]
    if not eligible:
        return []

    if mode == "auto":
        mode = "exact" if len(eligible) <= exact_threshold or dataset_index is None \
            else "ann"
    if mode == "ann" and dataset_index is None:
        raise SearchError("ann scoring requires a dataset index")

    if mode == "exact":
        candidates = eligible
    else:
        k = min(4 * top_n, len(eligible))
        hit_ids: set[str] = set()
        for emb in schema_embeddings:
            hit_ids.update(
                hit_id for hit_id, _ in dataset_index.knn(emb, k, ef_search))
        candidates = [d for d in eligible if d.id in hit_ids]

    # Normalization stays in float64 so scores agree with a direct cosine.
    queries = np.stack([np.asarray(e, dtype=np.float64)
                        for e in schema_embeddings])
    qnorms = np.linalg.norm(queries, axis=1)
    if not np.all(qnorms > 0.0):
        raise SearchError("schema embedding is a zero vector")
    queries /= qnorms[:, None]
    matrix = np.stack([np.asarray(d.dataset_embedding, dtype=np.float64)
                       for d in candidates])
    norms = np.linalg.norm(matrix, axis=1)
    if not np.all(norms > 0.0):
        bad = candidates[int(np.argmin(norms))].id
        raise SearchError(f"dataset {bad!r} carries a zero embedding")
    matrix /= norms[:, None]
    sims = np.clip(matrix @ queries.T, -1.0, 1.0)   # (n_candidates, n_schemas)

    # Row means reduce in the same order as np.mean over each row.
    means = sims.mean(axis=1)
    rows = sims.tolist()
    scored = []
    for i, dataset in enumerate(candidates):
        scored.append((dataset, RankedResult(
            dataset_id=dataset.id,
            aggregate_score=float(means[i]),
            per_schema_scores=tuple(rows[i]),
        )))
    scored.sort(key=lambda pair: (-pair[1].aggregate_score,
                                  -_downloads_key(pair[0]),
                                  pair[1].dataset_id))
    return [result for _, result in scored[:top_n]]


def apply_filters(results: Sequence[RankedResult],
                  filters: FilterSet,
                  catalog: Catalog,
                  attribute_hits: Iterable[str] | None = None,
                  ) -> list[RankedResult]:
    """Narrow ranked results in place, preserving order and scores.

    ``attribute_hits`` must carry the datasets matching
    ``filters.attribute_query`` when that filter is active; the semantic
    lookup itself happens upstream (it needs the gateway and the attribute
    index).
    """
    if filters.attribute_query is not None and attribute_hits is None:
        raise FilterError("attribute_query filter requires attribute hits")
    hit_set = set(attribute_hits) if attribute_hits is not None else None

    kept = []
    for result in results:
        dataset = catalog.get(result.dataset_id)
        if dataset is None:
            continue
        if _passes(dataset, filters, hit_set):
            kept.append(result)
    return kept


def _passes(dataset: EnrichedDataset, filters: FilterSet,
            attribute_hits: set[str] | None) -> bool:
    record = dataset.record
    exact = filters.exact
    if exact.title_contains is not None:
        if exact.title_contains.lower() not in record.title.lower():
            return False
    if exact.description_contains is not None:
        if exact.description_contains.lower() not in record.description.lower():
            return False
    if exact.tags_any:
        wanted = {t.lower() for t in exact.tags_any}
        if not wanted & {t.lower() for t in record.tags}:
            return False
    if exact.min_rows is not None and record.num_rows < exact.min_rows:
        return False
    if exact.max_rows is not None and record.num_rows > exact.max_rows:
        return False
    if exact.min_cols is not None and record.num_cols < exact.min_cols:
        return False
    if exact.max_cols is not None and record.num_cols > exact.max_cols:
        return False
    if exact.max_size_bytes is not None and record.size_bytes > exact.max_size_bytes:
        return False
    for concept in filters.concepts:
        if record.id not in concept.dataset_ids():
            return False
    if filters.temporal is not None and dataset.granularity.temporal != filters.temporal:
        return False
    if filters.spatial is not None and dataset.granularity.spatial != filters.spatial:
        return False
    if filters.attribute_query is not None:
        assert attribute_hits is not None
        if record.id not in attribute_hits:
            return False
    return True


def attribute_key(dataset_id: str, column_name: str) -> str:
    return f"{dataset_id}{ATTR_KEY_SEP}{column_name}"


def split_attribute_key(key: str) -> tuple[str, str]:
    dataset_id, _, column_name = key.partition(ATTR_KEY_SEP)
    return dataset_id, column_name


@dataclass(frozen=True)
class AttributeHit:
    dataset_id: str
    column_name: str
    similarity: float


def attribute_search(name: str, gateway: LlmGateway,
                     attribute_index: HnswIndex, k: int = 50,
                     ef_search: int | None = None) -> list[AttributeHit]:
    """Find attributes semantically close to a name, best match first."""
    if not name or not name.strip():
        raise SearchError("attribute name must be nonempty")
    if len(attribute_index) == 0:
        return []
    try:
        vector = gateway.embed_texts([name])[0]
    except GatewayError as exc:
        raise SearchUnavailable(f"attribute embedding failed: {exc}") from exc
    hits = attribute_index.knn(vector, min(k, len(attribute_index)), ef_search)
    out = []
    for key, sim in hits:
        dataset_id, column_name = split_attribute_key(key)
        out.append(AttributeHit(dataset_id=dataset_id, column_name=column_name,
                                similarity=sim))
    return out


def attribute_hit_datasets(hits: Sequence[AttributeHit]) -> list[str]:
    """Dataset ids from attribute hits, deduplicated, best hit first."""
    seen = set()
    out = []
    for hit in hits:
        if hit.dataset_id not in seen:
            seen.add(hit.dataset_id)
            out.append(hit.dataset_id)
    return out


def build_dataset_index(catalog: Catalog, params=None) -> HnswIndex:
    """Index every enriched dataset embedding."""
    from .index import HnswParams
    index = HnswIndex(dim=catalog.embedding_dim,
                      params=params or HnswParams())
    for dataset in catalog:
        if dataset.status == STATUS_OK and dataset.dataset_embedding is not None:
            index.insert(dataset.id, dataset.dataset_embedding)
    return index


def build_attribute_index(catalog: Catalog, params=None) -> HnswIndex:
    """Index every enriched attribute embedding under a composite key."""
    from .index import HnswParams
    index = HnswIndex(dim=catalog.embedding_dim,
                      params=params or HnswParams())
    for dataset in catalog:
        if dataset.status != STATUS_OK:
            continue
        for column_name, vector in dataset.attribute_embeddings:
            index.insert(attribute_key(dataset.id, column_name), vector)
    return index


def cosine_to_query(vector: np.ndarray, query_vector: np.ndarray) -> float:
    """Cosine similarity guarded against zero vectors (returns -1.0)."""
    try:
        return cosine(vector, query_vector)
    except IndexError_:
        return -1.0
