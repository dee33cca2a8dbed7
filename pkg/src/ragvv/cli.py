"""Command-line entry point.

Subcommands: ingest, index, inspect, testgen, fixture-gen, report,
compare, runner-selftest. Flag precedence is CLI > config file > built-in
defaults, and the effective configuration is echoed into every RunReport.

Exit codes: 0 ok; 1 unexpected failure; 2 usage; 3 bad path/config/data;
4 missing or rejected credential; 5 coverage runner unreachable;
6 refused comparison.
"""
from __future__ import annotations

import argparse
import json
import shlex
import sys
import time
from pathlib import Path

from . import corpus, inspect_pipeline, metrics_report, mutator, testgen_pipeline
from .embedder import CachedEmbedder, HashingEmbedder, RemoteEmbedder
from .llmclient import AuthError, HttpChatProvider, RunLog, ScriptedProvider
from .metrics_report import RunReport, compare_runs, dataset_hash, emit_report, format_runtime, load_report
from .runner_client import CoverageRequest, RunnerError, SubprocessRunner
from .vectorstore import VectorStore

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_DATA = 3
EXIT_AUTH = 4
EXIT_RUNNER = 5
EXIT_COMPARE = 6

DEFAULTS = {
    "model": "scripted-model",
    "provider": "constant",
    "response": "UNKNOWN",
    "fixtures": None,
    "scripted_strict": False,
    "endpoint": None,
    "api_key_env": "RAGVV_API_KEY",
    "embedder": "local",
    "dim": 384,
    "embed_endpoint": None,
    "embed_key_env": None,
    "rag": "off",
    "k": 3,
    "n": 20,
    "seed": 0,
    "workers": 4,
    "temperature": 0.0,
    "max_tokens": 256,
    "judge": "off",
    "judge_model": None,
    "require_line": False,
    "round_budget": 8,
    "timeout_s": 10.0,
    "trials": 100,
    "runner_cmd": None,
    "system_prompt": None,
    "run_id": None,
    "out": "runs",
}


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_DATA):
        super().__init__(message)
        self.code = code


def _effective(args: argparse.Namespace) -> dict:
    """Merge CLI > config file > defaults for the current subcommand."""
    cfg = dict(DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config file {config_path}: {exc}")
        if not isinstance(loaded, dict):
            raise CliError(f"config file {config_path} must hold a JSON object")
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise CliError(f"config file has unknown keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in cfg:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _flag_on(value) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).lower() in ("on", "true", "1", "yes")


def _make_provider(cfg: dict):
    kind = cfg["provider"]
    if kind == "constant":
        return ScriptedProvider(default=str(cfg["response"]))
    if kind == "scripted":
        if not cfg["fixtures"]:
            raise CliError("--provider scripted needs --fixtures (JSON map of request hash to text)")
        try:
            with open(cfg["fixtures"], "r", encoding="utf-8") as fh:
                fixtures = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read fixtures {cfg['fixtures']}: {exc}")
        return ScriptedProvider(
            fixtures={str(k): str(v) for k, v in fixtures.items()},
            default=str(cfg["response"]),
            strict=bool(cfg["scripted_strict"]),
        )
    if kind == "http":
        if not cfg["endpoint"]:
            raise CliError("--provider http needs --endpoint")
        return HttpChatProvider(cfg["endpoint"], api_key_env=cfg["api_key_env"])
    raise CliError(f"unknown provider {kind!r}")


def _make_embedder(cfg: dict, cache_path: Path | None = None):
    if cfg["embedder"] == "local":
        provider = HashingEmbedder(int(cfg["dim"]))
    elif cfg["embedder"] == "remote":
        if not cfg["embed_endpoint"]:
            raise CliError("--embedder remote needs --embed-endpoint")
        provider = RemoteEmbedder(
            cfg["embed_endpoint"], dim=int(cfg["dim"]), api_key_env=cfg["embed_key_env"]
        )
    else:
        raise CliError(f"unknown embedder {cfg['embedder']!r}")
    if cache_path is not None:
        return CachedEmbedder(provider, cache_path)
    return provider


def _load_store(cfg: dict, args) -> VectorStore:
    index_path = getattr(args, "index", None)
    if not index_path or not Path(index_path).exists():
        raise CliError(
            "RAG is on but no built index was found; run "
            "`ragvv index --kb KB --out INDEX` first and pass --index INDEX"
        )
    docs = corpus.load_knowledge_base(args.kb) if getattr(args, "kb", None) else None
    return VectorStore.load(index_path, docs)


def _run_dir(cfg: dict, mode: str) -> Path:
    run_id = cfg["run_id"] or f"{mode}-{time.strftime('%Y%m%d-%H%M%S')}"
    cfg["run_id"] = run_id
    out = Path(cfg["out"]) / run_id
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ingest(args) -> int:
    if not (args.kb or args.inspection or args.testgen):
        raise CliError("nothing to ingest; pass --kb, --inspection and/or --testgen")
    if args.kb:
        docs = corpus.load_knowledge_base(args.kb)
        print(f"knowledge base: {len(docs)} documents")
    if args.inspection:
        tasks = corpus.load_inspection_tasks(args.inspection)
        print(f"inspection tasks: {len(tasks)}")
    if args.testgen:
        tasks = corpus.load_testgen_tasks(args.testgen)
        print(f"test-gen tasks: {len(tasks)}")
    return EXIT_OK


def cmd_index(args) -> int:
    cfg = _effective(args)
    docs = corpus.load_knowledge_base(args.kb)
    out = Path(args.out_index)
    embedder = _make_embedder(cfg, cache_path=out.with_suffix(".cache.ndjson"))
    store = VectorStore(int(cfg["dim"]))
    batch = 64
    for start in range(0, len(docs), batch):
        chunk = docs[start : start + batch]
        vectors = embedder.embed_batch([d.content for d in chunk])
        for doc, vec in zip(chunk, vectors):
            store.add(doc.doc_id, vec, doc)
    store.freeze()
    store.save(out)
    print(f"indexed {len(store)} documents into {out} (dim {cfg['dim']})")
    return EXIT_OK


def cmd_inspect(args) -> int:
    cfg = _effective(args)
    tasks = corpus.load_inspection_tasks(args.dataset)
    provider = _make_provider(cfg)
    rag = _flag_on(cfg["rag"])
    store = _load_store(cfg, args) if rag else None
    query_embedder = _make_embedder(cfg) if rag else None
    out_dir = _run_dir(cfg, "inspect")
    run_log = RunLog(out_dir / "run.log")
    judge = provider if _flag_on(cfg["judge"]) else None

    started = time.time()
    result = inspect_pipeline.run_inspection(
        tasks,
        provider,
        model=cfg["model"],
        seed=int(cfg["seed"]),
        rag=rag,
        store=store,
        query_embedder=query_embedder,
        k=int(cfg["k"]),
        workers=int(cfg["workers"]),
        require_line=bool(cfg["require_line"]),
        judge=judge,
        judge_model=cfg["judge_model"] or cfg["model"],
        system_prompt=cfg["system_prompt"],
        temperature=float(cfg["temperature"]),
        max_tokens=int(cfg["max_tokens"]),
        run_log=run_log,
    )
    finished = time.time()

    inspect_pipeline.write_predictions(result.predictions, out_dir / "items.ndjson")
    report = RunReport(
        run_id=cfg["run_id"],
        mode="inspect",
        config={k: cfg[k] for k in sorted(cfg)},
        started=time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        finished=time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(finished)),
        runtime_s=finished - started,
        metrics=result.metrics.to_dict(),
        dataset_digest=dataset_hash(args.dataset),
        errored_task_ids=result.errored_task_ids,
    )
    emit_report(report, out_dir)
    m = result.metrics
    print(
        f"inspected {m.total} tasks: accuracy {m.accuracy:.2f}% "
        f"(human-inspector reference {inspect_pipeline.HUMAN_INSPECTOR_BASELINE_PCT:.0f}%), "
        f"runtime {format_runtime(report.runtime_s)}, report in {out_dir}"
    )
    return EXIT_OK


def cmd_testgen(args) -> int:
    cfg = _effective(args)
    tasks = corpus.load_testgen_tasks(args.dataset)
    provider = _make_provider(cfg)
    rag = _flag_on(cfg["rag"])
    store = _load_store(cfg, args) if rag else None
    query_embedder = _make_embedder(cfg) if rag else None
    if not cfg["runner_cmd"]:
        raise CliError("testgen needs --runner-cmd (command that serves the coverage protocol)", EXIT_RUNNER)
    runner_argv = shlex.split(cfg["runner_cmd"])

    def runner_factory():
        return SubprocessRunner(runner_argv)

    out_dir = _run_dir(cfg, "testgen")
    run_log = RunLog(out_dir / "run.log")

    started = time.time()
    result = testgen_pipeline.run_testgen(
        tasks,
        provider,
        runner_factory,
        model=cfg["model"],
        n_tests=int(cfg["n"]),
        round_budget=int(cfg["round_budget"]),
        rag=rag,
        store=store,
        query_embedder=query_embedder,
        k_retrieval=int(cfg["k"]),
        timeout_s=float(cfg["timeout_s"]),
        workers=int(cfg["workers"]),
        temperature=float(cfg["temperature"]),
        max_tokens=int(cfg["max_tokens"]),
        system_prompt=cfg["system_prompt"],
        run_log=run_log,
        trials=int(cfg["trials"]),
        seed=int(cfg["seed"]),
    )
    finished = time.time()

    testgen_pipeline.write_task_results(result.results, out_dir / "items.ndjson")
    report = RunReport(
        run_id=cfg["run_id"],
        mode="testgen",
        config={k: cfg[k] for k in sorted(cfg)},
        started=time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        finished=time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(finished)),
        runtime_s=finished - started,
        metrics=result.metrics.to_dict(),
        dataset_digest=dataset_hash(args.dataset),
        errored_task_ids=result.errored_task_ids,
    )
    emit_report(report, out_dir)
    m = result.metrics
    print(
        f"generated tests for {m.tasks_scored} tasks: line {m.line_cov_pct:.2f}% "
        f"branch {m.branch_cov_pct:.2f}%, runtime {format_runtime(report.runtime_s)}, "
        f"report in {out_dir}"
    )
    return EXIT_OK


def cmd_fixture_gen(args) -> int:
    records = []
    with open(args.snippets, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CliError(f"{args.snippets}:{lineno}: malformed JSON: {exc}")
    tasks = []
    skipped = 0
    for rec in records:
        task = mutator.generate_fixture_task(rec["source"], rec["task_id"], int(args.seed))
        if task is None:
            skipped += 1
        else:
            tasks.append(task)
    corpus.save_inspection_tasks(tasks, args.out_file)
    print(f"wrote {len(tasks)} fixture tasks to {args.out_file} ({skipped} snippets skipped)")
    if args.kb_out:
        docs = [
            corpus.KnowledgeDocument(
                doc_id=rec["task_id"],
                content=rec["source"],
                metadata={"description": rec.get("description", "")},
            )
            for rec in records
        ]
        corpus.save_knowledge_base(docs, args.kb_out)
        print(f"wrote {len(docs)} knowledge documents to {args.kb_out}")
    return EXIT_OK


def cmd_report(args) -> int:
    report = load_report(args.run)
    written = emit_report(report, args.run)
    print(f"re-emitted {', '.join(p.name for p in written)} in {args.run}")
    return EXIT_OK


def cmd_compare(args) -> int:
    a = load_report(args.run_a)
    b = load_report(args.run_b)
    try:
        diff = compare_runs(a, b)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_COMPARE)
    print(metrics_report.render_diff_markdown(diff))
    return EXIT_OK


def cmd_runner_selftest(args) -> int:
    cfg = _effective(args)
    if not cfg["runner_cmd"]:
        raise CliError("runner-selftest needs --runner-cmd", EXIT_RUNNER)
    program = "def double(x):\n    return 2 * x\n"
    test = "assert double(3) == 6\n"
    with SubprocessRunner(shlex.split(cfg["runner_cmd"])) as runner:
        print(f"handshake ok (runner version {runner.runner_version or 'unknown'})")
        response = runner.evaluate(
            CoverageRequest(task_id="selftest", program_source=program, tests=((0, test),))
        )
    result = response.per_test[0]
    print(
        f"selftest: totals lines={response.total_lines} branches={response.total_branches}; "
        f"syntax_ok={result.syntax_ok} exec_ok={result.exec_ok} "
        f"covered_lines={list(result.covered_lines)}"
    )
    if not (result.syntax_ok and result.exec_ok and result.covered_lines):
        raise CliError("runner selftest failed", EXIT_RUNNER)
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser, *names: str) -> None:
    opts = {
        "config": lambda p: p.add_argument("--config", help="JSON config file (CLI flags win)"),
        "model": lambda p: p.add_argument("--model", help=f"model name (default {DEFAULTS['model']})"),
        "provider": lambda p: p.add_argument(
            "--provider", choices=["constant", "scripted", "http"],
            help=f"LLM provider (default {DEFAULTS['provider']})",
        ),
        "response": lambda p: p.add_argument(
            "--response", help="constant/unmatched-fixture response text (default UNKNOWN)"
        ),
        "fixtures": lambda p: p.add_argument(
            "--fixtures", help="scripted provider fixture file: JSON {request hash: text}"
        ),
        "scripted_strict": lambda p: p.add_argument(
            "--scripted-strict", dest="scripted_strict", action="store_const", const=True,
            help="error on unknown request hashes instead of using --response",
        ),
        "endpoint": lambda p: p.add_argument("--endpoint", help="chat-completions endpoint URL"),
        "api_key_env": lambda p: p.add_argument(
            "--api-key-env", dest="api_key_env",
            help=f"env var holding the API credential (default {DEFAULTS['api_key_env']})",
        ),
        "embedder": lambda p: p.add_argument(
            "--embedder", choices=["local", "remote"],
            help=f"embedding provider (default {DEFAULTS['embedder']})",
        ),
        "dim": lambda p: p.add_argument("--dim", type=int, help=f"embedding dimension (default {DEFAULTS['dim']})"),
        "embed_endpoint": lambda p: p.add_argument("--embed-endpoint", dest="embed_endpoint", help="embedding service URL"),
        "embed_key_env": lambda p: p.add_argument("--embed-key-env", dest="embed_key_env", help="env var for the embedding credential"),
        "rag": lambda p: p.add_argument("--rag", choices=["on", "off"], help=f"retrieval toggle (default {DEFAULTS['rag']})"),
        "k": lambda p: p.add_argument("--k", type=int, help=f"retrieved documents per query (default {DEFAULTS['k']})"),
        "n": lambda p: p.add_argument("--n", type=int, help=f"unique tests to collect per task (default {DEFAULTS['n']})"),
        "seed": lambda p: p.add_argument("--seed", type=int, help=f"global seed (default {DEFAULTS['seed']})"),
        "workers": lambda p: p.add_argument("--workers", type=int, help=f"worker threads (default {DEFAULTS['workers']})"),
        "temperature": lambda p: p.add_argument("--temperature", type=float, help=f"sampling temperature (default {DEFAULTS['temperature']})"),
        "max_tokens": lambda p: p.add_argument("--max-tokens", dest="max_tokens", type=int, help=f"response token cap (default {DEFAULTS['max_tokens']})"),
        "judge": lambda p: p.add_argument("--judge", choices=["on", "off"], help=f"LLM-judge scoring (default {DEFAULTS['judge']})"),
        "judge_model": lambda p: p.add_argument("--judge-model", dest="judge_model", help="model used for judge mode (default: --model)"),
        "require_line": lambda p: p.add_argument(
            "--require-line", dest="require_line", action="store_const", const=True,
            help="a match additionally requires the correct defect line",
        ),
        "round_budget": lambda p: p.add_argument("--round-budget", dest="round_budget", type=int, help=f"max generation rounds per task (default {DEFAULTS['round_budget']})"),
        "timeout_s": lambda p: p.add_argument("--timeout-s", dest="timeout_s", type=float, help=f"per-test execution timeout (default {DEFAULTS['timeout_s']})"),
        "trials": lambda p: p.add_argument("--trials", type=int, help=f"cov@k sampling trials (default {DEFAULTS['trials']})"),
        "runner_cmd": lambda p: p.add_argument("--runner-cmd", dest="runner_cmd", help="command serving the coverage protocol on stdio"),
        "system_prompt": lambda p: p.add_argument("--system-prompt", dest="system_prompt", help="optional system preamble"),
        "run_id": lambda p: p.add_argument("--run-id", dest="run_id", help="run directory name (default: mode + timestamp)"),
        "out": lambda p: p.add_argument("--out", help=f"runs root directory (default {DEFAULTS['out']})"),
    }
    for name in names:
        opts[name](parser)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ragvv", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate corpora and print counts")
    p.add_argument("--kb")
    p.add_argument("--inspection")
    p.add_argument("--testgen")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("index", help="embed a knowledge base into a snapshot")
    p.add_argument("--kb", required=True)
    p.add_argument("--out", dest="out_index", required=True, help="snapshot file (.npz)")
    _add_common(p, "config", "embedder", "dim", "embed_endpoint", "embed_key_env")
    p.set_defaults(fn=cmd_index)

    p = sub.add_parser("inspect", help="run automated code inspection")
    p.add_argument("--dataset", required=True, help="inspection tasks file")
    p.add_argument("--kb", help="knowledge base (for payloads when --rag on)")
    p.add_argument("--index", help="index snapshot built by `ragvv index`")
    _add_common(
        p, "config", "model", "provider", "response", "fixtures", "scripted_strict",
        "endpoint", "api_key_env", "embedder", "dim", "embed_endpoint", "embed_key_env",
        "rag", "k", "seed", "workers", "temperature", "max_tokens", "judge", "judge_model",
        "require_line", "system_prompt", "run_id", "out",
    )
    p.set_defaults(fn=cmd_inspect)

    p = sub.add_parser("testgen", help="run automated test generation")
    p.add_argument("--dataset", required=True, help="test-gen tasks file")
    p.add_argument("--kb", help="knowledge base (for payloads when --rag on)")
    p.add_argument("--index", help="index snapshot built by `ragvv index`")
    _add_common(
        p, "config", "model", "provider", "response", "fixtures", "scripted_strict",
        "endpoint", "api_key_env", "embedder", "dim", "embed_endpoint", "embed_key_env",
        "rag", "k", "n", "seed", "workers", "temperature", "max_tokens", "round_budget",
        "timeout_s", "trials", "runner_cmd", "system_prompt", "run_id", "out",
    )
    p.set_defaults(fn=cmd_testgen)

    p = sub.add_parser("fixture-gen", help="generate 8-variant inspection fixtures from clean snippets")
    p.add_argument("--snippets", required=True, help="JSONL of {task_id, source}")
    p.add_argument("--out", dest="out_file", required=True)
    p.add_argument("--kb-out", dest="kb_out", help="also write the clean snippets as a knowledge base")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_fixture_gen)

    p = sub.add_parser("report", help="re-emit a stored run report")
    p.add_argument("--run", required=True, help="run directory")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("compare", help="diff two runs of the same mode and dataset")
    p.add_argument("run_a")
    p.add_argument("run_b")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("runner-selftest", help="handshake + toy request against a coverage runner")
    _add_common(p, "config", "runner_cmd")
    p.set_defaults(fn=cmd_runner_selftest)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except corpus.CorpusError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AuthError as exc:
        print(f"credential error: {exc}", file=sys.stderr)
        return EXIT_AUTH
    except RunnerError as exc:
        print(f"runner error: {exc}", file=sys.stderr)
        return EXIT_RUNNER


if __name__ == "__main__":
    sys.exit(main())
