"""Durable catalog of enriched datasets.

A catalog bundles the raw corpus records with everything the enrichment
pipeline adds: augmented metadata, granularity tags, and the three embedding
families (whole dataset, per attribute, usage purpose). Snapshots are a
single binary file: magic + format version + checksum + compressed JSON body,
written atomically under an advisory lock.
"""

from __future__ import annotations

import fcntl
import hashlib
import json
import logging
import os
import struct
import zlib
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterator

import numpy as np

from .corpus import CorpusError, RawDatasetRecord, record_from_dict, record_to_dict

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"SCOUTCAT1"
SNAPSHOT_VERSION = 1

TEMPORAL_GRANULARITIES = (
    "Year", "Quarter", "Month", "Week", "Day", "Hour", "Minute", "Second",
)
SPATIAL_GRANULARITIES = (
    "Continent", "Country", "State/Province", "County/District", "City",
    "Neighborhood/Region", "Zip Code/Postal Code", "Street Address",
    "Residential Address", "Latitude/Longitude",
)

STATUS_RAW = "raw"
STATUS_OK = "ok"
STATUS_FAILED = "failed"


class CatalogError(Exception):
    """Raised when a catalog snapshot cannot be read or written."""


@dataclass(frozen=True)
class ColumnDescription:
    column_name: str
    type: str
    description: str


@dataclass(frozen=True)
class AugmentedMetadata:
    description_summary: str
    dataset_purposes: tuple[str, ...]
    dataset_sources: str
    column_descriptions: tuple[ColumnDescription, ...]
    low_confidence: bool = False


@dataclass(frozen=True)
class GranularityTags:
    temporal: str | None = None
    spatial: str | None = None

    def __post_init__(self) -> None:
        if self.temporal is not None and self.temporal not in TEMPORAL_GRANULARITIES:
            raise ValueError(f"unknown temporal granularity: {self.temporal!r}")
        if self.spatial is not None and self.spatial not in SPATIAL_GRANULARITIES:
            raise ValueError(f"unknown spatial granularity: {self.spatial!r}")


@dataclass
class EnrichedDataset:
    record: RawDatasetRecord
    status: str = STATUS_RAW
    augmented: AugmentedMetadata | None = None
    granularity: GranularityTags = field(default_factory=GranularityTags)
    dataset_embedding: np.ndarray | None = None
    attribute_embeddings: tuple[tuple[str, np.ndarray], ...] = ()
    purpose_embedding: np.ndarray | None = None

    @property
    def id(self) -> str:
        return self.record.id


@dataclass(frozen=True)
class Provenance:
    corpus_path: str = ""
    provider: str = ""
    model_name: str = ""
    embedding_model_name: str = ""
    created_at: str = ""


@dataclass
class Catalog:
    embedding_dim: int
    datasets: dict[str, EnrichedDataset] = field(default_factory=dict)
    provenance: Provenance = field(default_factory=Provenance)
    version: int = SNAPSHOT_VERSION

    def add(self, dataset: EnrichedDataset) -> None:
        if dataset.id in self.datasets:
            raise CatalogError(f"duplicate dataset id: {dataset.id!r}")
        self._check_dims(dataset)
        self.datasets[dataset.id] = dataset

    def replace(self, dataset: EnrichedDataset) -> None:
        if dataset.id not in self.datasets:
            raise CatalogError(f"unknown dataset id: {dataset.id!r}")
        self._check_dims(dataset)
        self.datasets[dataset.id] = dataset

    def get(self, dataset_id: str) -> EnrichedDataset | None:
        return self.datasets.get(dataset_id)

    def __len__(self) -> int:
        return len(self.datasets)

    def __iter__(self) -> Iterator[EnrichedDataset]:
        return iter(self.datasets.values())

    def enriched(self) -> list[EnrichedDataset]:
        return [d for d in self.datasets.values() if d.status == STATUS_OK]

    def _check_dims(self, dataset: EnrichedDataset) -> None:
        for vec in self._vectors_of(dataset):
            if vec.ndim != 1 or vec.shape[0] != self.embedding_dim:
                raise CatalogError(
                    f"dataset {dataset.id!r} carries a vector of dim "
                    f"{vec.shape}, catalog expects {self.embedding_dim}")

    @staticmethod
    def _vectors_of(dataset: EnrichedDataset) -> Iterator[np.ndarray]:
        if dataset.dataset_embedding is not None:
            yield dataset.dataset_embedding
        for _, vec in dataset.attribute_embeddings:
            yield vec
        if dataset.purpose_embedding is not None:
            yield dataset.purpose_embedding


def _vector_to_list(vec: np.ndarray | None) -> list[float] | None:
    if vec is None:
        return None
    return [float(x) for x in np.asarray(vec, dtype=np.float32)]


def _vector_from_list(data: Any, dim: int, where: str) -> np.ndarray | None:
    if data is None:
        return None
    if not isinstance(data, list) or len(data) != dim:
        raise CatalogError(f"{where}: embedding must be a list of {dim} floats")
    return np.asarray(data, dtype=np.float32)


def dataset_to_dict(dataset: EnrichedDataset) -> dict[str, Any]:
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
        "record": record_to_dict(dataset.record),
        "status": dataset.status,
        "augmented": augmented,
        "granularity": {
            "temporal": dataset.granularity.temporal,
            "spatial": dataset.granularity.spatial,
        },
        "dataset_embedding": _vector_to_list(dataset.dataset_embedding),
        "attribute_embeddings": [
            {"column": name, "vector": _vector_to_list(vec)}
            for name, vec in dataset.attribute_embeddings
        ],
        "purpose_embedding": _vector_to_list(dataset.purpose_embedding),
    }


def dataset_from_dict(data: dict[str, Any], dim: int) -> EnrichedDataset:
    try:
        record = record_from_dict(data["record"])
    except (KeyError, TypeError, CorpusError) as exc:
        raise CatalogError(f"bad dataset record in snapshot: {exc}") from exc
    where = f"dataset {record.id!r}"
    status = data.get("status", STATUS_RAW)
    if status not in (STATUS_RAW, STATUS_OK, STATUS_FAILED):
        raise CatalogError(f"{where}: unknown status {status!r}")

    augmented = None
    raw_aug = data.get("augmented")
    if raw_aug is not None:
        try:
            augmented = AugmentedMetadata(
                description_summary=str(raw_aug["description_summary"]),
                dataset_purposes=tuple(str(p) for p in raw_aug["dataset_purposes"]),
                dataset_sources=str(raw_aug["dataset_sources"]),
                column_descriptions=tuple(
                    ColumnDescription(
                        column_name=str(c["column_name"]),
                        type=str(c["type"]),
                        description=str(c["description"]),
                    )
                    for c in raw_aug["column_descriptions"]
                ),
                low_confidence=bool(raw_aug.get("low_confidence", False)),
            )
        except (KeyError, TypeError) as exc:
            raise CatalogError(f"{where}: bad augmented metadata: {exc}") from exc

    raw_gran = data.get("granularity") or {}
    try:
        granularity = GranularityTags(
            temporal=raw_gran.get("temporal"), spatial=raw_gran.get("spatial"))
    except ValueError as exc:
        raise CatalogError(f"{where}: {exc}") from exc

    attr_embeddings = []
    for item in data.get("attribute_embeddings", []):
        vec = _vector_from_list(item.get("vector"), dim, where)
        if vec is None:
            raise CatalogError(f"{where}: attribute embedding missing vector")
        attr_embeddings.append((str(item["column"]), vec))

    return EnrichedDataset(
        record=record,
        status=status,
        augmented=augmented,
        granularity=granularity,
        dataset_embedding=_vector_from_list(
            data.get("dataset_embedding"), dim, where),
        attribute_embeddings=tuple(attr_embeddings),
        purpose_embedding=_vector_from_list(
            data.get("purpose_embedding"), dim, where),
    )


def catalog_to_dict(catalog: Catalog) -> dict[str, Any]:
    return {
        "embedding_dim": catalog.embedding_dim,
        "provenance": {
            "corpus_path": catalog.provenance.corpus_path,
            "provider": catalog.provenance.provider,
            "model_name": catalog.provenance.model_name,
            "embedding_model_name": catalog.provenance.embedding_model_name,
            "created_at": catalog.provenance.created_at,
        },
        "datasets": [dataset_to_dict(d) for d in catalog.datasets.values()],
    }


def catalog_from_dict(data: dict[str, Any]) -> Catalog:
    try:
        dim = int(data["embedding_dim"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CatalogError(f"snapshot missing embedding_dim: {exc}") from exc
    if dim <= 0:
        raise CatalogError("embedding_dim must be positive")
    prov = data.get("provenance") or {}
    catalog = Catalog(
        embedding_dim=dim,
        provenance=Provenance(
            corpus_path=str(prov.get("corpus_path", "")),
            provider=str(prov.get("provider", "")),
            model_name=str(prov.get("model_name", "")),
            embedding_model_name=str(prov.get("embedding_model_name", "")),
            created_at=str(prov.get("created_at", "")),
        ),
    )
    for item in data.get("datasets", []):
        catalog.add(dataset_from_dict(item, dim))
    return catalog


@contextmanager
def _write_lock(path: Path) -> Iterator[None]:
    # Advisory lock so concurrent writers serialize instead of interleaving.
    lock_path = path.with_name(path.name + ".lock")
    fd = os.open(lock_path, os.O_CREAT | os.O_WRONLY, 0o644)
    try:
        fcntl.flock(fd, fcntl.LOCK_EX)
        yield
    finally:
        fcntl.flock(fd, fcntl.LOCK_UN)
        os.close(fd)


def save_catalog(catalog: Catalog, path: str | Path) -> None:
    """Write a snapshot atomically: temp file then rename over the target."""
    path = Path(path)
    body = json.dumps(catalog_to_dict(catalog), ensure_ascii=False,
                      separators=(",", ":"), sort_keys=True).encode("utf-8")
    compressed = zlib.compress(body, level=6)
    checksum = hashlib.sha256(compressed).digest()
    header = SNAPSHOT_MAGIC + struct.pack("<I", SNAPSHOT_VERSION) + checksum
    with _write_lock(path):
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(header)
            fh.write(compressed)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    logger.info("saved catalog snapshot: %d datasets -> %s", len(catalog), path)


def load_catalog(path: str | Path) -> Catalog:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CatalogError(f"cannot read catalog snapshot {path}: {exc}") from exc
    prefix_len = len(SNAPSHOT_MAGIC) + 4 + 32
    if len(blob) < prefix_len or not blob.startswith(SNAPSHOT_MAGIC):
        raise CatalogError(f"{path} is not a catalog snapshot (bad magic)")
    offset = len(SNAPSHOT_MAGIC)
    (version,) = struct.unpack_from("<I", blob, offset)
    if version != SNAPSHOT_VERSION:
        raise CatalogError(
            f"{path}: snapshot format version {version} is not supported "
            f"(expected {SNAPSHOT_VERSION})")
    offset += 4
    checksum = blob[offset:offset + 32]
    compressed = blob[offset + 32:]
    if hashlib.sha256(compressed).digest() != checksum:
        raise CatalogError(f"{path}: checksum mismatch, snapshot is corrupt")
    try:
        body = zlib.decompress(compressed)
        data = json.loads(body.decode("utf-8"))
    except (zlib.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CatalogError(f"{path}: snapshot body is corrupt: {exc}") from exc
    return catalog_from_dict(data)


def save_indicator_cache(entries: dict[str, Any], path: str | Path) -> None:
    """Persist a relevance-indicator cache as plain JSON (atomic write)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(entries, ensure_ascii=False, sort_keys=True),
                   encoding="utf-8")
    os.replace(tmp, path)


def load_indicator_cache(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    if not path.exists():
        return {}
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        logger.warning("ignoring unreadable indicator cache %s: %s", path, exc)
        return {}
    return data if isinstance(data, dict) else {}


def mark_failed(dataset: EnrichedDataset) -> EnrichedDataset:
    return replace(dataset, status=STATUS_FAILED)
