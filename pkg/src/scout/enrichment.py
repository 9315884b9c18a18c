"""Offline enrichment: augmented metadata, granularity tags, embeddings.

Each corpus record is augmented once (summary, purposes, sources, per-column
descriptions), annotated with closed-vocabulary granularity tags, and then
embedded three ways: the dataset as a whole, each attribute, and the usage
purpose. A record whose augmentation or embedding fails is kept in the
catalog but flagged failed so the search path can skip it.
"""

from __future__ import annotations

import json
import logging
from typing import Callable, Iterable, Sequence

import numpy as np

from .catalog import (
    STATUS_FAILED,
    STATUS_OK,
    SPATIAL_GRANULARITIES,
    TEMPORAL_GRANULARITIES,
    AugmentedMetadata,
    ColumnDescription,
    EnrichedDataset,
    GranularityTags,
)
from .corpus import ColumnSample, RawDatasetRecord, make_preview
from .gateway import GatewayError, LlmGateway

logger = logging.getLogger(__name__)

PROMPT_PREVIEW_ROWS = 10
EMBED_PREVIEW_ROWS = 3


def _preview_markdown(record: RawDatasetRecord, max_rows: int) -> str:
    return make_preview(record, max_rows=max_rows).rendered


def augment(record: RawDatasetRecord, gateway: LlmGateway) -> AugmentedMetadata:
    """Generate summary, purposes, sources, and column descriptions."""
    result = gateway.complete_structured(
        "metadata_augmentation",
        {
            "title": record.title,
            "description": record.description,
            "example_rows": _preview_markdown(record, PROMPT_PREVIEW_ROWS),
        },
    )
    return _reconcile_augmented(record, result.parsed)


def annotate_granularity(record: RawDatasetRecord,
                         gateway: LlmGateway) -> GranularityTags:
    """Tag temporal and spatial granularity; out-of-vocabulary answers drop."""
    result = gateway.complete_structured(
        "granularity_annotation",
        {
            "title": record.title,
            "description": record.description,
            "example_rows": _preview_markdown(record, PROMPT_PREVIEW_ROWS),
        },
    )
    parsed = result.parsed
    temporal = parsed.get("temporal_granularity")
    spatial = parsed.get("spatial_granularity")
    if temporal not in TEMPORAL_GRANULARITIES:
        if temporal not in (None, ""):
            logger.warning("dataset %s: dropping unknown temporal granularity %r",
                           record.id, temporal)
        temporal = None
    if spatial not in SPATIAL_GRANULARITIES:
        if spatial not in (None, ""):
            logger.warning("dataset %s: dropping unknown spatial granularity %r",
                           record.id, spatial)
        spatial = None
    return GranularityTags(temporal=temporal, spatial=spatial)


def dataset_embedding_input(record: RawDatasetRecord) -> str:
    """Text embedded for whole-dataset similarity: title plus a short preview."""
    title = record.title.strip() or record.filename.strip() or record.id
    preview = _preview_markdown(record, EMBED_PREVIEW_ROWS)
    return f"{title}\n{preview}" if preview else title


def attribute_embedding_input(column: ColumnSample) -> str:
    """Text embedded per attribute: column name plus its sampled values."""
    values = ", ".join(column.sampled_values)
    return f"{column.name}: {values}" if values else column.name


def purpose_embedding_input(augmented: AugmentedMetadata) -> str:
    """Text embedded for usage purpose: summary plus the purpose list."""
    purposes = "; ".join(augmented.dataset_purposes)
    summary = augmented.description_summary.strip()
    if summary and purposes:
        return f"{summary}\n{purposes}"
    return summary or purposes or "N/A"


def _embed_batched(gateway: LlmGateway, texts: Sequence[str],
                   batch_size: int) -> list[np.ndarray]:
    vectors: list[np.ndarray] = []
    for start in range(0, len(texts), batch_size):
        vectors.extend(gateway.embed_texts(list(texts[start:start + batch_size])))
    return vectors


def enrich_dataset(record: RawDatasetRecord,
                   gateway: LlmGateway) -> EnrichedDataset:
    """Fully enrich a single record (augment, annotate, embed)."""
    results = enrich_corpus([record], gateway)
    return results[0]


def enrich_corpus(records: Iterable[RawDatasetRecord],
                  gateway: LlmGateway,
                  batch_size: int = 32,
                  existing: dict[str, EnrichedDataset] | None = None,
                  checkpoint: Callable[[list[EnrichedDataset]], None] | None = None,
                  ) -> list[EnrichedDataset]:
    """Enrich a corpus, batching embedding calls and skipping finished work.

    ``existing`` maps dataset id to an already-processed entry; those are
    passed through untouched so interrupted runs resume where they stopped.
    ``checkpoint`` is invoked with the cumulative result list after each
    batch, giving callers a durable save point.
    """
    if batch_size <= 0:
        raise ValueError("batch_size must be positive")
    existing = existing or {}
    records = list(records)
    done: list[EnrichedDataset] = []
    batch: list[RawDatasetRecord] = []

    def flush() -> None:
        if not batch:
            return
        done.extend(_enrich_batch(batch, gateway, batch_size))
        batch.clear()
        if checkpoint is not None:
            checkpoint(done)

    for record in records:
        previous = existing.get(record.id)
        if previous is not None and previous.status != "raw":
            done.append(previous)
            logger.info("enrich %s: status=%s (resumed)", record.id,
                        previous.status)
            continue
        batch.append(record)
        if len(batch) >= batch_size:
            flush()
    flush()

    order = {record.id: i for i, record in enumerate(records)}
    done.sort(key=lambda d: order[d.id])
    return done


def _enrich_batch(records: Sequence[RawDatasetRecord], gateway: LlmGateway,
                  batch_size: int) -> list[EnrichedDataset]:
    annotated: list[EnrichedDataset] = []
    for record in records:
        attempts = 0
        try:
            result = gateway.complete_structured(
                "metadata_augmentation",
                {
                    "title": record.title,
                    "description": record.description,
                    "example_rows": _preview_markdown(record, PROMPT_PREVIEW_ROWS),
                },
            )
            attempts += result.attempts
            augmented = _reconcile_augmented(record, result.parsed)
        except GatewayError as exc:
            logger.warning("enrich %s: status=failed (%s)", record.id, exc)
            annotated.append(EnrichedDataset(record=record, status=STATUS_FAILED))
            continue
        try:
            granularity = annotate_granularity(record, gateway)
        except GatewayError as exc:
            logger.warning("enrich %s: granularity unavailable (%s)",
                           record.id, exc)
            granularity = GranularityTags()
        annotated.append(EnrichedDataset(
            record=record, status=STATUS_OK, augmented=augmented,
            granularity=granularity))
        logger.info("enrich %s: status=ok attempts=%d", record.id, attempts + 1)

    ok = [d for d in annotated if d.status == STATUS_OK]
    if not ok:
        return annotated

    dataset_inputs = [dataset_embedding_input(d.record) for d in ok]
    purpose_inputs = [purpose_embedding_input(d.augmented) for d in ok]
    attr_inputs: list[str] = []
    attr_owner: list[tuple[int, str]] = []
    for i, dataset in enumerate(ok):
        for column in dataset.record.columns:
            attr_inputs.append(attribute_embedding_input(column))
            attr_owner.append((i, column.name))

    try:
        dataset_vecs = _embed_batched(gateway, dataset_inputs, batch_size)
        purpose_vecs = _embed_batched(gateway, purpose_inputs, batch_size)
        attr_vecs = _embed_batched(gateway, attr_inputs, batch_size) if attr_inputs else []
    except GatewayError as exc:
        logger.warning("embedding batch failed, flagging %d datasets: %s",
                       len(ok), exc)
        return [
            EnrichedDataset(record=d.record, status=STATUS_FAILED,
                            augmented=d.augmented, granularity=d.granularity)
            if d.status == STATUS_OK else d
            for d in annotated
        ]

    per_dataset_attrs: list[list[tuple[str, np.ndarray]]] = [[] for _ in ok]
    for (owner, name), vec in zip(attr_owner, attr_vecs):
        per_dataset_attrs[owner].append((name, vec))

    finished = []
    ok_iter = iter(range(len(ok)))
    for dataset in annotated:
        if dataset.status != STATUS_OK:
            finished.append(dataset)
            continue
        i = next(ok_iter)
        dataset.dataset_embedding = dataset_vecs[i]
        dataset.purpose_embedding = purpose_vecs[i]
        dataset.attribute_embeddings = tuple(per_dataset_attrs[i])
        finished.append(dataset)
    return finished


def _reconcile_augmented(record: RawDatasetRecord,
                         parsed: dict) -> AugmentedMetadata:
    # Reconcile column descriptions against the real header: drop columns the
    # provider invented, back-fill the ones it missed.
    provided: dict[str, dict] = {}
    for item in parsed.get("column_descriptions", []):
        name = item.get("column_name")
        if name is not None and name not in provided:
            provided[name] = item
    descriptions = []
    for column in record.columns:
        item = provided.get(column.name)
        if item is None:
            descriptions.append(ColumnDescription(
                column_name=column.name, type="unknown",
                description="No description available."))
        else:
            descriptions.append(ColumnDescription(
                column_name=column.name,
                type=str(item.get("type", "unknown")) or "unknown",
                description=str(item.get("description", "")),
            ))
    purposes = tuple(str(p) for p in parsed.get("dataset_purposes", [])
                     if str(p).strip())
    return AugmentedMetadata(
        description_summary=str(parsed.get("description_summary", "")),
        dataset_purposes=purposes,
        dataset_sources=str(parsed.get("dataset_sources", "")) or "N/A",
        column_descriptions=tuple(descriptions),
        low_confidence=not purposes,
    )
