import json
import sys
from pathlib import Path

import pytest

from ragvv import cli
from ragvv.corpus import save_inspection_tasks

STUB_RUNNER_CMD = f"{sys.executable} {Path(__file__).parent / 'stub_runner.py'}"


@pytest.fixture()
def small_snippets_file(tmp_path, snippets):
    path = tmp_path / "snippets.jsonl"
    with path.open("w") as fh:
        for rec in snippets[:8]:
            fh.write(json.dumps(rec) + "\n")
    return path


@pytest.fixture()
def dataset_file(tmp_path, fixture_tasks):
    path = tmp_path / "tasks.jsonl"
    save_inspection_tasks(fixture_tasks[:12], path)
    return path


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


class TestFixtureGen:
    def test_generates_corpus_schema_file(self, tmp_path, small_snippets_file, capsys):
        out = tmp_path / "fixtures.jsonl"
        kb = tmp_path / "kb.jsonl"
        code = run_cli("fixture-gen", "--snippets", small_snippets_file, "--out", out,
                       "--kb-out", kb, "--seed", 3)
        assert code == 0
        assert "8 fixture tasks" in capsys.readouterr().out
        from ragvv.corpus import load_inspection_tasks, load_knowledge_base

        assert len(load_inspection_tasks(out)) == 8
        assert len(load_knowledge_base(kb)) == 8


class TestIngest:
    def test_counts(self, dataset_file, capsys):
        assert run_cli("ingest", "--inspection", dataset_file) == 0
        assert "inspection tasks: 12" in capsys.readouterr().out

    def test_missing_file_exit_code(self, tmp_path):
        assert run_cli("ingest", "--kb", tmp_path / "nope.jsonl") == cli.EXIT_DATA

    def test_nothing_to_do(self):
        assert run_cli("ingest") == cli.EXIT_DATA


class TestIndex:
    def test_builds_snapshot(self, tmp_path, small_snippets_file, capsys):
        kb = tmp_path / "kb.jsonl"
        run_cli("fixture-gen", "--snippets", small_snippets_file, "--out", tmp_path / "f.jsonl",
                "--kb-out", kb)
        index = tmp_path / "index.npz"
        assert run_cli("index", "--kb", kb, "--out", index, "--dim", 32) == 0
        assert index.exists()
        assert "indexed 8 documents" in capsys.readouterr().out
        assert (tmp_path / "index.cache.ndjson").exists()


class TestInspectCommand:
    def test_constant_provider_end_to_end(self, tmp_path, dataset_file):
        code = run_cli(
            "inspect", "--dataset", dataset_file, "--provider", "constant",
            "--response", "the code is free of errors", "--seed", 5,
            "--run-id", "demo", "--out", tmp_path / "runs",
        )
        assert code == 0
        run_dir = tmp_path / "runs" / "demo"
        for name in ("report.json", "table.csv", "report.md", "items.ndjson", "run.log"):
            assert (run_dir / name).exists(), name
        report = json.loads((run_dir / "report.json").read_text())
        assert report["mode"] == "inspect"
        assert report["config"]["seed"] == 5
        assert report["config"]["k"] == 3  # default recorded even when unused

    def test_rag_without_index_is_actionable(self, tmp_path, dataset_file, capsys):
        code = run_cli(
            "inspect", "--dataset", dataset_file, "--rag", "on",
            "--out", tmp_path / "runs",
        )
        assert code == cli.EXIT_DATA
        assert "ragvv index" in capsys.readouterr().err

    def test_rag_on_with_built_index(self, tmp_path, small_snippets_file, dataset_file):
        kb = tmp_path / "kb.jsonl"
        run_cli("fixture-gen", "--snippets", small_snippets_file, "--out", tmp_path / "f.jsonl",
                "--kb-out", kb)
        index = tmp_path / "index.npz"
        run_cli("index", "--kb", kb, "--out", index, "--dim", 32)
        code = run_cli(
            "inspect", "--dataset", dataset_file, "--rag", "on", "--kb", kb,
            "--index", index, "--dim", 32, "--k", 2,
            "--run-id", "ragrun", "--out", tmp_path / "runs",
        )
        assert code == 0
        items = (tmp_path / "runs" / "ragrun" / "items.ndjson").read_text().splitlines()
        first = json.loads(items[0])
        assert len(first["retrieved_ids"]) == 2


class TestCompareCommand:
    def _run(self, tmp_path, dataset_file, run_id, response):
        assert run_cli(
            "inspect", "--dataset", dataset_file, "--provider", "constant",
            "--response", response, "--seed", 5, "--run-id", run_id,
            "--out", tmp_path / "runs",
        ) == 0
        return tmp_path / "runs" / run_id

    def test_same_dataset_compares(self, tmp_path, dataset_file, capsys):
        a = self._run(tmp_path, dataset_file, "a", "the code is free of errors")
        b = self._run(tmp_path, dataset_file, "b", "missing colon on line 1")
        assert run_cli("compare", a, b) == 0
        assert "accuracy" in capsys.readouterr().out

    def test_different_dataset_refused(self, tmp_path, dataset_file, fixture_tasks, capsys):
        a = self._run(tmp_path, dataset_file, "a", "no bug")
        other = tmp_path / "other.jsonl"
        save_inspection_tasks(fixture_tasks[12:20], other)
        b_code = run_cli(
            "inspect", "--dataset", other, "--provider", "constant", "--response", "no bug",
            "--seed", 5, "--run-id", "b", "--out", tmp_path / "runs",
        )
        assert b_code == 0
        assert run_cli("compare", a, tmp_path / "runs" / "b") == cli.EXIT_COMPARE
        assert "different datasets" in capsys.readouterr().err


class TestReportCommand:
    def test_re_emit_idempotent(self, tmp_path, dataset_file):
        run_cli(
            "inspect", "--dataset", dataset_file, "--provider", "constant",
            "--response", "no bug", "--seed", 1, "--run-id", "r", "--out", tmp_path / "runs",
        )
        run_dir = tmp_path / "runs" / "r"
        before = (run_dir / "table.csv").read_bytes()
        assert run_cli("report", "--run", run_dir) == 0
        assert (run_dir / "table.csv").read_bytes() == before


class TestRunnerSelftest:
    def test_stub_runner_passes(self, capsys):
        assert run_cli("runner-selftest", "--runner-cmd", STUB_RUNNER_CMD) == 0
        out = capsys.readouterr().out
        assert "handshake ok" in out

    def test_missing_cmd_is_runner_exit(self, capsys):
        assert run_cli("runner-selftest") == cli.EXIT_RUNNER


class TestTestgenCommand:
    def test_stub_backed_run(self, tmp_path):
        dataset = tmp_path / "tg.jsonl"
        with dataset.open("w") as fh:
            fh.write(json.dumps({
                "task_id": "tg1",
                "program_code": "def f(x):\n    return x\n",
                "function_name": "f",
                "description": "identity",
                "total_lines": 2,
                "total_branches": 0,
            }) + "\n")
        code = run_cli(
            "testgen", "--dataset", dataset, "--provider", "constant",
            "--response", "```python\nassert f(1) == 1\n```",
            "--n", 1, "--runner-cmd", STUB_RUNNER_CMD,
            "--run-id", "tg", "--out", tmp_path / "runs",
        )
        assert code == 0
        report = json.loads((tmp_path / "runs" / "tg" / "report.json").read_text())
        assert report["mode"] == "testgen"
        assert report["metrics"]["tasks_scored"] == 1


class TestConfigPrecedence:
    def test_config_file_supplies_defaults_cli_wins(self, tmp_path, dataset_file):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"seed": 99, "response": "no bug"}))
        run_cli(
            "inspect", "--dataset", dataset_file, "--config", config,
            "--seed", 123, "--run-id", "p", "--out", tmp_path / "runs",
        )
        report = json.loads((tmp_path / "runs" / "p" / "report.json").read_text())
        assert report["config"]["seed"] == 123       # CLI beats config file
        assert report["config"]["response"] == "no bug"  # config beats default

    def test_unknown_config_key_rejected(self, tmp_path, dataset_file, capsys):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"tempo": 1}))
        code = run_cli("inspect", "--dataset", dataset_file, "--config", config)
        assert code == cli.EXIT_DATA
        assert "tempo" in capsys.readouterr().err


def test_help_lists_flags_with_defaults(capsys):
    with pytest.raises(SystemExit) as excinfo:
        cli.main(["inspect", "--help"])
    assert excinfo.value.code == 0
    out = capsys.readouterr().out
    for flag in ("--rag", "--k", "--seed", "--judge", "--provider", "--require-line"):
        assert flag in out
    assert "default 3" in out  # k default surfaced in help


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as excinfo:
        cli.main(["inspect", "--bogus"])
    assert excinfo.value.code == 2
