"""HTTP API for the search engine.

Routes:
  POST /api/search                     run a search (?defer_suggestions=true)
  GET  /api/search/suggestions         suggestions for a past search digest
  GET  /api/datasets/{id}              dataset detail
  GET  /api/datasets/{id}/relevance    relevance indicator for one search
  GET  /api/attributes/search          semantic attribute lookup
  GET  /api/health                     liveness plus catalog size

Invalid queries and filters map to 400, unknown digests and datasets to
404, provider outages to 503 with exact_filters_available so clients can
degrade to metadata-only filtering.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any

from fastapi import BackgroundTasks, FastAPI, HTTPException, Query
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .catalog import EnrichedDataset
from .corpus import make_preview
from .engine import SearchEngine, SearchOutcome, SuggestionBundle, UnknownState
from .search import (
    ConceptFilter,
    ExactFilters,
    FilterError,
    FilterSet,
    SearchError,
    SearchQuery,
    SearchUnavailable,
)

logger = logging.getLogger(__name__)


class ConceptFilterModel(BaseModel):
    label: str
    members: list[tuple[str, str]]


class FiltersModel(BaseModel):
    title_contains: str | None = None
    description_contains: str | None = None
    tags_any: list[str] = Field(default_factory=list)
    min_rows: int | None = None
    max_rows: int | None = None
    min_cols: int | None = None
    max_cols: int | None = None
    max_size_bytes: int | None = None
    concepts: list[ConceptFilterModel] = Field(default_factory=list)
    temporal: str | None = None
    spatial: str | None = None
    attribute_query: str | None = None


class SearchRequestModel(BaseModel):
    query: str
    task_type: str | None = None
    filters: FiltersModel | None = None


def _domain_filters(model: FiltersModel | None) -> FilterSet:
    if model is None:
        return FilterSet()
    return FilterSet(
        exact=ExactFilters(
            title_contains=model.title_contains,
            description_contains=model.description_contains,
            tags_any=tuple(model.tags_any),
            min_rows=model.min_rows,
            max_rows=model.max_rows,
            min_cols=model.min_cols,
            max_cols=model.max_cols,
            max_size_bytes=model.max_size_bytes,
        ),
        concepts=tuple(
            ConceptFilter(label=c.label, members=tuple(c.members))
            for c in model.concepts
        ),
        temporal=model.temporal,
        spatial=model.spatial,
        attribute_query=model.attribute_query,
    )


def _suggestion_fields(bundle: SuggestionBundle | None) -> dict[str, Any]:
    """The three suggestion keys of a response; null until computed."""
    if bundle is None:
        return {"reformulations": None, "concepts": None,
                "granularity_suggestions": None}
    return {
        "reformulations": [
            {
                "query": r.query,
                "reason": r.reason,
                "matching_count": r.matching_count,
                "dataset_ids": list(r.dataset_ids),
            }
            for r in bundle.reformulations
        ],
        "concepts": [
            {"label": c.label, "members": [list(m) for m in c.members]}
            for c in bundle.concepts
        ],
        "granularity_suggestions": {
            "temporal": list(bundle.granularity.temporal),
            "spatial": list(bundle.granularity.spatial),
        },
    }


def _result_json(engine: SearchEngine, outcome: SearchOutcome) -> list[dict[str, Any]]:
    out = []
    for rank, result in enumerate(outcome.results, 1):
        dataset = engine.catalog.get(result.dataset_id)
        if dataset is None:
            continue
        record = dataset.record
        summary = ""
        if dataset.augmented is not None:
            summary = dataset.augmented.description_summary
        out.append({
            "dataset_id": result.dataset_id,
            "rank": rank,
            "score": result.aggregate_score,
            "per_schema_scores": list(result.per_schema_scores),
            "title": record.title,
            "summary": summary,
            "tags": list(record.tags),
            "num_rows": record.num_rows,
            "num_cols": record.num_cols,
            "size_bytes": record.size_bytes,
            "downloads": record.downloads,
            "usability_score": record.usability_score,
            "granularity": {
                "temporal": dataset.granularity.temporal,
                "spatial": dataset.granularity.spatial,
            },
        })
    return out


def _search_response(engine: SearchEngine, outcome: SearchOutcome) -> dict[str, Any]:
    response = {
        "state_digest": outcome.state.digest,
        "query": {
            "text": outcome.state.query.text,
            "task_type": outcome.state.query.task_type,
        },
        "filters": outcome.state.filters.to_canonical(),
        "total_results": len(outcome.results),
        "results": _result_json(engine, outcome),
    }
    response.update(_suggestion_fields(outcome.suggestions))
    return response


def _detail_json(dataset: EnrichedDataset) -> dict[str, Any]:
    record = dataset.record
    augmented = None
    if dataset.augmented is not None:
        augmented = {
            "description_summary": dataset.augmented.description_summary,
            "dataset_purposes": list(dataset.augmented.dataset_purposes),
            "dataset_sources": dataset.augmented.dataset_sources,
            "column_descriptions": [
                {"column_name": c.column_name, "type": c.type,
                 "description": c.description}
                for c in dataset.augmented.column_descriptions
            ],
            "low_confidence": dataset.augmented.low_confidence,
        }
    return {
        "dataset_id": record.id,
        "status": dataset.status,
        "title": record.title,
        "filename": record.filename,
        "description": record.description,
        "tags": list(record.tags),
        "size_bytes": record.size_bytes,
        "num_rows": record.num_rows,
        "num_cols": record.num_cols,
        "columns": [
            {"name": c.name, "sampled_values": list(c.sampled_values)}
            for c in record.columns
        ],
        "usability_score": record.usability_score,
        "downloads": record.downloads,
        "preview_markdown": make_preview(record).rendered,
        "augmented": augmented,
        "granularity": {
            "temporal": dataset.granularity.temporal,
            "spatial": dataset.granularity.spatial,
        },
    }


def create_app(engine: SearchEngine, frontend_dir: str | Path | None = None,
               eager_relevance: bool = True) -> FastAPI:
    """Build the application around a ready engine.

    ``eager_relevance`` schedules indicator generation for the top results
    as a background task after each search response is sent.
    """
    app = FastAPI(title="scout", docs_url=None, redoc_url=None)

    @app.exception_handler(SearchUnavailable)
    async def _unavailable(request, exc: SearchUnavailable):
        return JSONResponse(
            status_code=503,
            content={"detail": str(exc), "exact_filters_available": True})

    @app.exception_handler(UnknownState)
    async def _unknown_state(request, exc: UnknownState):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(FilterError)
    async def _bad_filter(request, exc: FilterError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(SearchError)
    async def _bad_search(request, exc: SearchError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/api/health")
    def health() -> dict[str, Any]:
        return {"status": "ok", "datasets": len(engine.catalog)}

    @app.post("/api/search")
    def search(body: SearchRequestModel, background: BackgroundTasks,
               defer_suggestions: bool = Query(default=False)) -> dict[str, Any]:
        query = SearchQuery(text=body.query, task_type=body.task_type)
        filters = _domain_filters(body.filters)
        outcome = engine.search(query, filters,
                                defer_suggestions=defer_suggestions)
        if eager_relevance and outcome.results:
            background.add_task(engine.eager_relevance, outcome.state.digest)
        return _search_response(engine, outcome)

    @app.get("/api/search/suggestions")
    def suggestions(digest: str = Query(min_length=1)) -> dict[str, Any]:
        bundle = engine.suggestions_for(digest)
        response = {"state_digest": digest}
        response.update(_suggestion_fields(bundle))
        return response

    @app.get("/api/datasets/{dataset_id}")
    def dataset_detail(dataset_id: str) -> dict[str, Any]:
        try:
            dataset = engine.dataset_detail(dataset_id)
        except SearchError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return _detail_json(dataset)

    @app.get("/api/datasets/{dataset_id}/relevance")
    def dataset_relevance(dataset_id: str,
                          digest: str = Query(min_length=1)) -> dict[str, Any]:
        outcome = engine.outcome_for(digest)
        try:
            indicator = engine.relevance(digest, dataset_id)
        except UnknownState:
            raise
        except SearchError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return {
            "dataset_id": indicator.dataset_id,
            "state_digest": outcome.state.digest,
            "utilities": indicator.utilities,
            "limitations": indicator.limitations,
        }

    @app.get("/api/attributes/search")
    def attributes(q: str = Query(min_length=1),
                   k: int = Query(default=50, ge=1, le=500)) -> dict[str, Any]:
        hits = engine.find_attributes(q, k=k)
        out = []
        dataset_ids: list[str] = []
        seen: set[str] = set()
        for hit in hits:
            dataset = engine.catalog.get(hit.dataset_id)
            title = dataset.record.title if dataset is not None else ""
            out.append({
                "dataset_id": hit.dataset_id,
                "column_name": hit.column_name,
                "similarity": hit.similarity,
                "title": title,
            })
            if hit.dataset_id not in seen:
                seen.add(hit.dataset_id)
                dataset_ids.append(hit.dataset_id)
        return {"dataset_ids": dataset_ids, "hits": out}

    if frontend_dir is not None:
        frontend_dir = Path(frontend_dir)
        if frontend_dir.is_dir():
            app.mount("/", StaticFiles(directory=frontend_dir, html=True),
                      name="frontend")
        else:
            logger.warning("frontend directory %s missing, serving API only",
                           frontend_dir)

    return app
