"""Command-line entry points: ingest, enrich, index, serve, query."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from .assist import RelevanceCache
from .catalog import (
    Catalog,
    CatalogError,
    EnrichedDataset,
    Provenance,
    load_catalog,
    load_indicator_cache,
    save_catalog,
    save_indicator_cache,
)
from .config import AppConfig, ConfigError, load_app_config
from .corpus import CorpusError, load_corpus
from .engine import EngineConfig, SearchEngine
from .enrichment import enrich_corpus
from .gateway import LlmGateway, MockProvider, gateway_from_env
from .index import HnswIndex
from .search import (
    FilterSet,
    SearchError,
    SearchQuery,
    build_attribute_index,
    build_dataset_index,
)

logger = logging.getLogger(__name__)

DATASET_INDEX_FILE = "dataset.idx"
ATTRIBUTE_INDEX_FILE = "attribute.idx"


def _gateway(config: AppConfig) -> LlmGateway:
    if config.use_mock:
        return LlmGateway(MockProvider(config.provider.embedding_dim),
                          config.provider)
    return gateway_from_env(config.provider)


def _load_config(args: argparse.Namespace) -> AppConfig:
    return load_app_config(getattr(args, "config", None))


def cmd_ingest(args: argparse.Namespace) -> int:
    config = _load_config(args)
    records = load_corpus(args.corpus)
    catalog = Catalog(
        embedding_dim=config.provider.embedding_dim,
        provenance=Provenance(
            corpus_path=str(args.corpus),
            created_at=datetime.now(timezone.utc).isoformat(),
        ),
    )
    for record in records:
        catalog.add(EnrichedDataset(record=record))
    save_catalog(catalog, args.out)
    print(f"ingested {len(records)} datasets -> {args.out}")
    return 0


def cmd_enrich(args: argparse.Namespace) -> int:
    config = _load_config(args)
    catalog = load_catalog(args.catalog)
    gateway = _gateway(config)

    existing = dict(catalog.datasets) if args.resume else {}
    pending = [d.record for d in catalog]

    def checkpoint(done: list[EnrichedDataset]) -> None:
        for dataset in done:
            catalog.datasets[dataset.id] = dataset
        save_catalog(catalog, args.catalog)

    enriched = enrich_corpus(pending, gateway, batch_size=args.batch_size,
                             existing=existing, checkpoint=checkpoint)
    provider_name = "mock" if config.use_mock else "http"
    for dataset in enriched:
        catalog.datasets[dataset.id] = dataset
    catalog.provenance = Provenance(
        corpus_path=catalog.provenance.corpus_path,
        provider=provider_name,
        model_name=config.provider.model_name,
        embedding_model_name=config.provider.embedding_model_name,
        created_at=datetime.now(timezone.utc).isoformat(),
    )
    save_catalog(catalog, args.catalog)
    ok = sum(1 for d in enriched if d.status == "ok")
    failed = sum(1 for d in enriched if d.status == "failed")
    print(f"enriched {ok} datasets, {failed} failed -> {args.catalog}")
    return 0


def cmd_index(args: argparse.Namespace) -> int:
    config = _load_config(args)
    catalog = load_catalog(args.catalog)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    dataset_index = build_dataset_index(catalog, config.hnsw)
    dataset_index.save(out_dir / DATASET_INDEX_FILE)
    attribute_index = build_attribute_index(catalog, config.hnsw)
    attribute_index.save(out_dir / ATTRIBUTE_INDEX_FILE)
    print(f"indexed {len(dataset_index)} datasets and "
          f"{len(attribute_index)} attributes -> {out_dir}")
    return 0


def _build_engine(args: argparse.Namespace, config: AppConfig,
                  relevance_cache: RelevanceCache | None = None) -> SearchEngine:
    catalog = load_catalog(args.catalog)
    dataset_index = None
    attribute_index = None
    if getattr(args, "index", None):
        index_dir = Path(args.index)
        dataset_path = index_dir / DATASET_INDEX_FILE
        attribute_path = index_dir / ATTRIBUTE_INDEX_FILE
        if dataset_path.exists():
            dataset_index = HnswIndex.load(dataset_path)
        if attribute_path.exists():
            attribute_index = HnswIndex.load(attribute_path)
    if attribute_index is None:
        attribute_index = build_attribute_index(catalog, config.hnsw)
    return SearchEngine(catalog, _gateway(config),
                        dataset_index=dataset_index,
                        attribute_index=attribute_index,
                        config=config.engine,
                        relevance_cache=relevance_cache)


def _indicator_sidecar(catalog_path: str) -> Path:
    return Path(str(catalog_path) + ".indicators.json")


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .api import create_app

    config = _load_config(args)
    sidecar = _indicator_sidecar(args.catalog)
    cache = RelevanceCache.from_json(
        load_indicator_cache(sidecar),
        max_entries=config.engine.indicator_cache_size)
    engine = _build_engine(args, config, relevance_cache=cache)
    host, _, port = args.listen.rpartition(":")
    app = create_app(engine, frontend_dir=args.frontend)
    app.router.add_event_handler(
        "shutdown",
        lambda: save_indicator_cache(engine.relevance_cache.to_json(), sidecar))
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return 0


def cmd_query(args: argparse.Namespace) -> int:
    config = _load_config(args)
    engine = _build_engine(args, config)
    query = SearchQuery(text=args.text, task_type=args.task_type)
    outcome = engine.search(query, FilterSet(),
                            defer_suggestions=args.no_suggestions)
    results = outcome.results[:args.top]

    if args.json:
        payload: dict = {
            "state_digest": outcome.state.digest,
            "ranked_ids": [r.dataset_id for r in outcome.results],
            "results": [
                {"dataset_id": r.dataset_id, "score": r.aggregate_score}
                for r in results
            ],
        }
        if outcome.suggestions is not None:
            bundle = outcome.suggestions
            payload["suggestions"] = {
                "reformulations": [
                    {"query": s.query, "reason": s.reason,
                     "matching_count": s.matching_count,
                     "dataset_ids": list(s.dataset_ids)}
                    for s in bundle.reformulations
                ],
                "concepts": [
                    {"label": c.label,
                     "members": [[ds, col] for ds, col in c.members]}
                    for c in bundle.concepts
                ],
                "granularity": {
                    "temporal": list(bundle.granularity.temporal),
                    "spatial": list(bundle.granularity.spatial),
                },
            }
        print(json.dumps(payload, indent=2, sort_keys=True))
        return 0

    print(f"{len(outcome.results)} results (digest {outcome.state.digest[:12]})")
    for rank, result in enumerate(results, 1):
        dataset = engine.catalog.get(result.dataset_id)
        title = dataset.record.title if dataset else result.dataset_id
        print(f"{rank:3d}. {result.aggregate_score:+.4f}  "
              f"{result.dataset_id}  {title}")
    if outcome.suggestions is not None:
        bundle = outcome.suggestions
        if bundle.reformulations:
            print("\ntry instead:")
            for ref in bundle.reformulations:
                print(f"  - {ref.query}  ({ref.reason}; "
                      f"{ref.matching_count} datasets)")
        if bundle.concepts:
            labels = ", ".join(c.label for c in bundle.concepts)
            print(f"concept filters: {labels}")
        gran = bundle.granularity
        if gran.temporal or gran.spatial:
            print(f"granularity: temporal={list(gran.temporal)} "
                  f"spatial={list(gran.spatial)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scout", description="semantic dataset discovery")
    parser.add_argument("--verbose", action="store_true",
                        help="log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="validate a corpus into a catalog")
    p_ingest.add_argument("--corpus", required=True)
    p_ingest.add_argument("--out", required=True)
    p_ingest.add_argument("--config")
    p_ingest.set_defaults(func=cmd_ingest)

    p_enrich = sub.add_parser("enrich", help="augment, annotate, and embed")
    p_enrich.add_argument("--catalog", required=True)
    p_enrich.add_argument("--batch-size", type=int, default=32)
    p_enrich.add_argument("--resume", action="store_true",
                          help="skip datasets that already finished")
    p_enrich.add_argument("--config")
    p_enrich.set_defaults(func=cmd_enrich)

    p_index = sub.add_parser("index", help="build vector index snapshots")
    p_index.add_argument("--catalog", required=True)
    p_index.add_argument("--out", required=True)
    p_index.add_argument("--config")
    p_index.set_defaults(func=cmd_index)

    p_serve = sub.add_parser("serve", help="run the HTTP API")
    p_serve.add_argument("--catalog", required=True)
    p_serve.add_argument("--index")
    p_serve.add_argument("--listen", default="127.0.0.1:8000")
    p_serve.add_argument("--frontend",
                         help="directory of static UI files to serve at /")
    p_serve.add_argument("--config")
    p_serve.set_defaults(func=cmd_serve)

    p_query = sub.add_parser("query", help="run one search from the terminal")
    p_query.add_argument("--catalog", required=True)
    p_query.add_argument("--index")
    p_query.add_argument("--text", required=True)
    p_query.add_argument("--task-type", choices=[
        "regression", "classification", "visualization",
        "temporal_analysis", "other"])
    p_query.add_argument("--top", type=int, default=10)
    p_query.add_argument("--json", action="store_true")
    p_query.add_argument("--no-suggestions", action="store_true")
    p_query.add_argument("--config")
    p_query.set_defaults(func=cmd_query)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CorpusError, CatalogError, ConfigError, SearchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
