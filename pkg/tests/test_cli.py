"""Command-line pipeline: ingest, enrich, index, query run in-process."""

import json

import pytest

from conftest import FIXTURE_CORPUS
from scout.catalog import load_catalog
from scout.cli import main


@pytest.fixture(autouse=True)
def offline(monkeypatch):
    monkeypatch.setenv("SCOUT_MOCK", "1")
    monkeypatch.delenv("SCOUT_LLM_BASE_URL", raising=False)


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    """Catalog and index snapshots built once via the real CLI commands."""
    root = tmp_path_factory.mktemp("pipeline")
    catalog = root / "catalog.scout"
    index_dir = root / "indexes"
    assert main(["ingest", "--corpus", str(FIXTURE_CORPUS),
                 "--out", str(catalog)]) == 0
    assert main(["enrich", "--catalog", str(catalog)]) == 0
    assert main(["index", "--catalog", str(catalog),
                 "--out", str(index_dir)]) == 0
    return root


class TestIngest:
    def test_ingest_writes_loadable_catalog(self, tmp_path, capsys):
        out = tmp_path / "cat.scout"
        assert main(["ingest", "--corpus", str(FIXTURE_CORPUS),
                     "--out", str(out)]) == 0
        assert "ingested 100 datasets" in capsys.readouterr().out
        catalog = load_catalog(out)
        assert len(catalog) == 100
        assert all(d.status == "raw" for d in catalog)

    def test_missing_corpus_exits_one(self, tmp_path, capsys):
        code = main(["ingest", "--corpus", str(tmp_path / "absent.jsonl"),
                     "--out", str(tmp_path / "cat.scout")])
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")


class TestEnrich:
    def test_enrich_reports_counts_and_persists(self, pipeline_dir, capsys):
        catalog = load_catalog(pipeline_dir / "catalog.scout")
        assert len(catalog.enriched()) == 100
        dataset = catalog.get("world-happiness-2019")
        assert dataset.augmented is not None
        assert dataset.dataset_embedding is not None

    def test_enrich_resume_is_a_noop_on_finished_catalog(self, pipeline_dir,
                                                         capsys):
        code = main(["enrich", "--catalog",
                     str(pipeline_dir / "catalog.scout"), "--resume"])
        assert code == 0
        assert "enriched 100 datasets, 0 failed" in capsys.readouterr().out

    def test_missing_catalog_exits_one(self, tmp_path, capsys):
        assert main(["enrich", "--catalog",
                     str(tmp_path / "absent.scout")]) == 1
        assert "error:" in capsys.readouterr().err


class TestIndex:
    def test_index_writes_both_snapshots(self, pipeline_dir):
        assert (pipeline_dir / "indexes" / "dataset.idx").exists()
        assert (pipeline_dir / "indexes" / "attribute.idx").exists()

    def test_index_output_message(self, pipeline_dir, tmp_path, capsys):
        out = tmp_path / "idx"
        assert main(["index", "--catalog",
                     str(pipeline_dir / "catalog.scout"),
                     "--out", str(out)]) == 0
        assert "indexed 100 datasets" in capsys.readouterr().out


class TestQuery:
    def test_plain_listing(self, pipeline_dir, capsys):
        code = main(["query", "--catalog", str(pipeline_dir / "catalog.scout"),
                     "--index", str(pipeline_dir / "indexes"),
                     "--text", "quality of life during COVID",
                     "--top", "5"])
        assert code == 0
        out = capsys.readouterr().out
        assert "100 results" in out
        assert "covid-hospitalizations" in out
        assert "try instead:" in out
        assert "concept filters:" in out

    def test_json_payload_shape(self, pipeline_dir, capsys):
        code = main(["query", "--catalog", str(pipeline_dir / "catalog.scout"),
                     "--index", str(pipeline_dir / "indexes"),
                     "--text", "quality of life during COVID",
                     "--top", "5", "--json"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert len(payload["ranked_ids"]) == 100
        assert len(payload["results"]) == 5
        assert payload["ranked_ids"][:5] == \
            [r["dataset_id"] for r in payload["results"]]
        assert len(payload["suggestions"]["reformulations"]) == 3
        assert payload["suggestions"]["granularity"]["temporal"]

    def test_no_suggestions_flag_omits_bundle(self, pipeline_dir, capsys):
        code = main(["query", "--catalog", str(pipeline_dir / "catalog.scout"),
                     "--text", "climate data", "--json", "--no-suggestions"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert "suggestions" not in payload

    def test_blank_query_exits_one(self, pipeline_dir, capsys):
        code = main(["query", "--catalog", str(pipeline_dir / "catalog.scout"),
                     "--text", "   "])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_bad_config_exits_one(self, pipeline_dir, tmp_path, capsys):
        conf = tmp_path / "bad.conf"
        conf.write_text("nonsense line\n", encoding="utf-8")
        code = main(["query", "--catalog", str(pipeline_dir / "catalog.scout"),
                     "--text", "climate data", "--config", str(conf)])
        assert code == 1
        assert "error:" in capsys.readouterr().err
