from __future__ import annotations

import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from driftprobe.cli import main
from driftprobe.errors import ConfigError
from driftprobe.pipeline import (
    PipelineConfig,
    PipelineRun,
    cloze_from_json,
    cloze_to_json,
    read_query_files,
    run_pipeline,
)

TRIMMED_CONFIG = """\
relations: {fixtures}/relations.csv
dump: {fixtures}/dump_slice.json.gz
range:
  from: 2020-07-01
  to: 2021-06-30
granularity: quarter
max_answer_tokens: 5
top_k: 20
precision_ks: [1, 5, 10]
views: [single, multi, pll]
decode:
  mode: greedy
  seed: 0
backends:
  - name: 2020-Q4
    endpoint: mock:{fixtures}/mock_backend.json
"""


@pytest.fixture(scope="module")
def trimmed_config(tmp_path_factory, fixtures_dir):
    path = tmp_path_factory.mktemp("config") / "trimmed.yaml"
    path.write_text(TRIMMED_CONFIG.format(fixtures=fixtures_dir), encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def completed_run(trimmed_config, tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("run")
    manifest = run_pipeline(trimmed_config, out_dir)
    return out_dir, manifest


def _tree_digest(root: Path, exclude: tuple[str, ...] = ("manifest.json",)) -> dict[str, str]:
    import hashlib

    digests = {}
    for path in sorted(root.rglob("*")):
        if path.is_file() and path.name not in exclude:
            digests[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return digests


class TestPipelineRun:
    def test_smoke_completes_and_writes_manifest(self, completed_run):
        out_dir, manifest = completed_run
        assert manifest.executed_stages == [
            "ingest", "snapshot", "split", "render", "evaluate", "aggregate", "report",
        ]
        assert (out_dir / "manifest.json").exists()
        assert (out_dir / "facts.tsv").exists()
        assert (out_dir / "aggregates.csv").exists()
        assert (out_dir / "reports" / "split_counts.csv").exists()

    def test_manifest_carries_run_parameters(self, completed_run):
        out_dir, _ = completed_run
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["granularity"] == "quarter"
        assert manifest["max_answer_tokens"] == 5
        assert manifest["decode"]["mode"] == "greedy"
        assert manifest["tool_version"]
        assert manifest["input_digests"]

    def test_rerun_with_unchanged_inputs_executes_nothing(self, trimmed_config, completed_run):
        out_dir, _ = completed_run
        manifest = run_pipeline(trimmed_config, out_dir)
        assert manifest.executed_stages == []

    def test_rerun_reproduces_byte_identical_outputs(self, trimmed_config, completed_run, tmp_path):
        out_dir, _ = completed_run
        second = tmp_path / "second"
        run_pipeline(trimmed_config, second)
        assert _tree_digest(out_dir) == _tree_digest(second)

    def test_deleting_aggregate_output_reexecutes_only_aggregation(
        self, trimmed_config, completed_run
    ):
        out_dir, _ = completed_run
        (out_dir / "aggregates.csv").unlink()
        manifest = run_pipeline(trimmed_config, out_dir)
        assert manifest.executed_stages == ["aggregate"]

    def test_resume_disabled_reexecutes_everything(self, trimmed_config, completed_run):
        out_dir, _ = completed_run
        manifest = run_pipeline(trimmed_config, out_dir, resume=False)
        assert len(manifest.executed_stages) == 7

    def test_split_counts_copy_is_exact(self, completed_run):
        out_dir, _ = completed_run
        original = (out_dir / "splits" / "split_stats.csv").read_bytes()
        copied = (out_dir / "reports" / "split_counts.csv").read_bytes()
        assert original == copied

    def test_deleted_queries_rendered_from_prior_answers(self, completed_run):
        out_dir, _ = completed_run
        lines = []
        for path in (out_dir / "queries" / "pll").glob("*.jsonl"):
            for line in path.read_text().splitlines():
                lines.append(json.loads(line))
        deleted = [l for l in lines if l["split"] == "deleted"]
        assert deleted, "fixture should produce deleted splits"
        assert all(l["gold_source"] == "answers_before" for l in deleted)
        assert all(l["answers"] for l in deleted)

    def test_rendered_single_view_restricts_golds(self, completed_run):
        out_dir, _ = completed_run
        for path in (out_dir / "queries" / "single").glob("*.jsonl"):
            for line in path.read_text().splitlines():
                payload = json.loads(line)
                assert all(len(a["token_ids"]) == 1 for a in payload["answers"])

    def test_every_record_traceable_to_query(self, completed_run):
        out_dir, _ = completed_run
        query_ids = set()
        for view_dir in (out_dir / "queries").iterdir():
            if view_dir.is_dir():
                for bucket, queries in read_query_files(view_dir).items():
                    query_ids.update(q.query_id for q in queries)
        record_ids = set()
        for path in (out_dir / "results").rglob("*.jsonl"):
            for line in path.read_text().splitlines():
                record_ids.add(json.loads(line)["query_id"])
        assert record_ids <= query_ids
        assert record_ids == query_ids  # every rendered query evaluated


class TestPipelineConfig:
    def test_missing_relations_rejected(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("backends:\n  - {name: x, endpoint: 'mock:nope.json'}\n")
        with pytest.raises(ConfigError):
            PipelineConfig.load(path)

    def test_no_backends_rejected(self, tmp_path, fixtures_dir):
        path = tmp_path / "bad.yaml"
        path.write_text(f"relations: {fixtures_dir}/relations.csv\ndump: {fixtures_dir}/dump_slice.json.gz\n")
        with pytest.raises(ConfigError):
            PipelineConfig.load(path)

    def test_duplicate_backend_names_rejected(self, tmp_path, fixtures_dir):
        path = tmp_path / "bad.yaml"
        path.write_text(
            f"relations: {fixtures_dir}/relations.csv\n"
            f"dump: {fixtures_dir}/dump_slice.json.gz\n"
            "backends:\n"
            f"  - {{name: m, endpoint: 'mock:{fixtures_dir}/mock_backend.json'}}\n"
            f"  - {{name: m, endpoint: 'mock:{fixtures_dir}/mock_backend.json'}}\n"
        )
        with pytest.raises(ConfigError):
            PipelineConfig.load(path)

    def test_unknown_view_rejected(self, tmp_path, fixtures_dir):
        path = tmp_path / "bad.yaml"
        path.write_text(
            f"relations: {fixtures_dir}/relations.csv\n"
            f"dump: {fixtures_dir}/dump_slice.json.gz\n"
            "views: [single, nonsense]\n"
            "backends:\n"
            f"  - {{name: m, endpoint: 'mock:{fixtures_dir}/mock_backend.json'}}\n"
        )
        with pytest.raises(ConfigError):
            PipelineConfig.load(path)

    def test_facts_input_skips_ingest(self, tmp_path, fixtures_dir, completed_run):
        out_dir, _ = completed_run
        config = tmp_path / "facts.yaml"
        config.write_text(
            f"relations: {fixtures_dir}/relations.csv\n"
            f"facts: {out_dir}/facts.tsv\n"
            "range: {from: 2020-07-01, to: 2020-12-31}\n"
            "views: [multi]\n"
            "backends:\n"
            f"  - {{name: m, endpoint: 'mock:{fixtures_dir}/mock_backend.json'}}\n"
        )
        manifest = run_pipeline(config, tmp_path / "out")
        assert "ingest" not in manifest.executed_stages
        assert manifest.executed_stages[0] == "snapshot"


class TestClozeJsonRoundTrip:
    def test_round_trip(self, completed_run):
        out_dir, _ = completed_run
        view_dir = out_dir / "queries" / "multi"
        for bucket, queries in read_query_files(view_dir).items():
            for query in queries:
                assert cloze_from_json(cloze_to_json(query)) == query
            break


class TestCli:
    def test_run_verb(self, trimmed_config, tmp_path):
        code = main(["run", "--config", str(trimmed_config), "--out-dir", str(tmp_path / "out")])
        assert code == 0

    def test_config_error_exit_code(self, tmp_path):
        code = main(["run", "--config", str(tmp_path / "missing.yaml"), "--out-dir", str(tmp_path)])
        assert code == 2

    def test_backend_unreachable_exit_code(self, completed_run, tmp_path):
        out_dir, _ = completed_run
        code = main(
            [
                "evaluate",
                "--queries", str(out_dir / "queries" / "single"),
                "--backend", "http://127.0.0.1:1",
                "--view", "single",
                "--out", str(tmp_path / "results"),
            ]
        )
        assert code == 4

    def test_stage_verbs_chain(self, fixtures_dir, tmp_path):
        facts = tmp_path / "facts.tsv"
        assert main([
            "ingest", "--dump", str(fixtures_dir / "dump_slice.json.gz"),
            "--relations", str(fixtures_dir / "relations.csv"), "--out", str(facts),
        ]) == 0
        snaps = tmp_path / "snapshots"
        assert main([
            "snapshot", "--facts", str(facts), "--from", "2020-07-01", "--to", "2021-03-31",
            "--granularity", "quarter", "--out", str(snaps),
        ]) == 0
        splits = tmp_path / "splits"
        assert main(["split", "--snapshots", str(snaps), "--out", str(splits)]) == 0
        queries = tmp_path / "queries"
        assert main([
            "render", "--splits", str(splits), "--relations", str(fixtures_dir / "relations.csv"),
            "--backend", f"mock:{fixtures_dir}/mock_backend.json", "--out", str(queries),
            "--views", "single", "multi",
        ]) == 0
        results = tmp_path / "results" / "mock" / "single"
        assert main([
            "evaluate", "--queries", str(queries / "single"),
            "--backend", f"mock:{fixtures_dir}/mock_backend.json",
            "--view", "single", "--topk", "10", "--out", str(results),
        ]) == 0
        aggregates = tmp_path / "aggregates.csv"
        assert main(["aggregate", "--results", str(tmp_path / "results"), "--out", str(aggregates)]) == 0
        reports = tmp_path / "reports"
        assert main(["report", "--aggregates", str(aggregates), "--out", str(reports)]) == 0
        assert any(reports.glob("*.csv"))

    def test_console_script_installed(self):
        result = subprocess.run(
            [sys.executable, "-m", "driftprobe.cli", "--help"],
            capture_output=True,
            text=True,
        )
        assert result.returncode == 0
        assert "ingest" in result.stdout
