"""Shared fixtures: the 100-dataset fixture corpus enriched once per session."""

from __future__ import annotations

from pathlib import Path

import pytest

from scout.catalog import Catalog, Provenance
from scout.corpus import load_corpus
from scout.engine import EngineConfig, SearchEngine
from scout.enrichment import enrich_corpus
from scout.gateway import LlmGateway, MockProvider, ProviderConfig
from scout.index import HnswIndex
from scout.search import build_attribute_index, build_dataset_index

FIXTURE_CORPUS = Path(__file__).parent / "fixtures" / "corpus_100.jsonl"
EMBEDDING_DIM = 256


def make_gateway(provider=None) -> LlmGateway:
    return LlmGateway(provider or MockProvider(EMBEDDING_DIM), ProviderConfig())


def build_fixture_catalog(gateway: LlmGateway) -> Catalog:
    records = load_corpus(FIXTURE_CORPUS)
    catalog = Catalog(
        embedding_dim=EMBEDDING_DIM,
        provenance=Provenance(corpus_path=str(FIXTURE_CORPUS),
                              created_at="1970-01-01T00:00:00Z"),
    )
    for dataset in enrich_corpus(records, gateway):
        catalog.add(dataset)
    return catalog


@pytest.fixture(scope="session")
def fixture_records():
    return load_corpus(FIXTURE_CORPUS)


@pytest.fixture(scope="session")
def mock_gateway():
    return make_gateway()


@pytest.fixture(scope="session")
def fixture_catalog(mock_gateway):
    return build_fixture_catalog(mock_gateway)


@pytest.fixture(scope="session")
def dataset_index(fixture_catalog) -> HnswIndex:
    return build_dataset_index(fixture_catalog)


@pytest.fixture(scope="session")
def attribute_index(fixture_catalog) -> HnswIndex:
    return build_attribute_index(fixture_catalog)


@pytest.fixture
def make_engine(fixture_catalog, mock_gateway, dataset_index, attribute_index):
    """Factory for fresh engines sharing the session catalog and indexes."""

    def factory(gateway: LlmGateway | None = None,
                config: EngineConfig | None = None,
                with_indexes: bool = True) -> SearchEngine:
        return SearchEngine(
            fixture_catalog,
            gateway or mock_gateway,
            dataset_index=dataset_index if with_indexes else None,
            attribute_index=attribute_index if with_indexes else None,
            config=config,
        )

    return factory
