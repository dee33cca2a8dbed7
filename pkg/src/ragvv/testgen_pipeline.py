"""End-to-end automated test generation and coverage scoring.

Per task: one single-shot generation round, then multi-round generation
conditioned on all prior tests until N unique tests are collected or the
round budget runs out. Collected tests go to the coverage runner; metrics
are union line/branch coverage plus cov@k.

cov@k, as pinned here and echoed in every report: the mean union-coverage
percentage of a uniformly sampled size-k subset of the syntactically valid
tests; enumerated exactly whenever C(n, k) <= 10000, otherwise estimated
with seeded sampling (default 100 trials).
"""
from __future__ import annotations

import itertools
import json
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import comb
from pathlib import Path

import numpy as np

from . import kernels
from .corpus import KnowledgeDocument, TestGenTask, hash64
from .embedder import EmbeddingProvider, embed
from .llmclient import ChatMessage, ChatRequest, LLMProvider, RetryExhaustedError, RunLog, complete
from .runner_client import CoverageRequest, RunnerError
from .vectorstore import VectorStore

__all__ = [
    "TestCase",
    "PerTestCoverage",
    "CoverageRecord",
    "CoverageMetrics",
    "COV_AT_K_DEFINITION",
    "build_testgen_prompt",
    "testgen_request",
    "extract_tests",
    "compute_coverage",
    "cov_at_k",
    "aggregate_testgen",
    "run_testgen",
]

COV_AT_K_DEFINITION = (
    "cov@k = mean union coverage of a uniform random size-k subset of the "
    "syntactically valid tests; exact enumeration when C(n,k) <= 10000, "
    "else seeded sampling (100 trials)"
)

EXHAUSTIVE_LIMIT = 10000

_FENCE_RE = re.compile(r"```(?:[a-zA-Z0-9_+-]*)\n(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class, despite the name

    index: int
    code: str
    round: int


@dataclass(frozen=True)
class PerTestCoverage:
    index: int
    syntax_ok: bool
    exec_ok: bool
    covered_lines: frozenset[int]
    covered_branches: frozenset[int]


@dataclass(frozen=True)
class CoverageRecord:
    task_id: str
    per_test: tuple[PerTestCoverage, ...]

    def valid_tests(self) -> list[PerTestCoverage]:
        return [t for t in self.per_test if t.syntax_ok]


@dataclass
class CoverageMetrics:
    tasks_scored: int
    tasks_without_tests: int
    syntax_pct: float
    exec_pct: float
    line_cov_pct: float
    branch_cov_pct: float
    line_cov_at_k: dict[int, float]
    branch_cov_at_k: dict[int, float]

    def to_dict(self) -> dict:
        return {
            "tasks_scored": self.tasks_scored,
            "tasks_without_tests": self.tasks_without_tests,
            "syntax_pct": self.syntax_pct,
            "exec_pct": self.exec_pct,
            "line_cov_pct": self.line_cov_pct,
            "branch_cov_pct": self.branch_cov_pct,
            "line_cov_at_k": {str(k): v for k, v in self.line_cov_at_k.items()},
            "branch_cov_at_k": {str(k): v for k, v in self.branch_cov_at_k.items()},
            "cov_at_k_definition": COV_AT_K_DEFINITION,
        }


def build_testgen_prompt(
    task: TestGenTask,
    contexts: list[KnowledgeDocument],
    prior: list[TestCase],
) -> str:
    """Program, function name, description, optional references, and --
    from round two on -- every previously generated test."""
    parts = [
        "Write executable Python test cases for the function described below.\n",
        f"Function name: {task.function_name}\n",
        f"Description: {task.description}\n",
        "\nProgram under test:\n```python\n" + task.program_code.rstrip("\n") + "\n```\n",
        "\nReturn each test case as its own fenced code block. Each test must\n"
        "be self-contained and executable as written.\n",
    ]
    if contexts:
        parts.append("\nReference examples of well-tested code:\n")
        for i, doc in enumerate(contexts, start=1):
            parts.append(f"\n[{i}] {doc.content}\n")
    if prior:
        parts.append("\nPreviously generated tests (do not repeat these; produce new, distinct tests):\n")
        for tc in sorted(prior, key=lambda t: t.index):
            parts.append(f"\n# test {tc.index}\n```python\n{tc.code.rstrip(chr(10))}\n```\n")
    return "".join(parts)


def testgen_request(
    prompt: str,
    model: str,
    *,
    temperature: float = 0.0,
    max_tokens: int = 256,
    system_prompt: str | None = None,
) -> ChatRequest:
    messages: list[ChatMessage] = []
    if system_prompt:
        messages.append(ChatMessage("system", system_prompt))
    messages.append(ChatMessage("user", prompt))
    return ChatRequest(model=model, messages=tuple(messages), temperature=temperature, max_tokens=max_tokens)


def extract_tests(
    response: str,
    starting_index: int,
    round_no: int,
    existing: tuple[str, ...] = (),
) -> list[TestCase]:
    """Each fenced code block becomes one test; blocks byte-identical to an
    already-collected test (or to an earlier block in the same reply) are
    dropped. Prose with no fences yields an empty list."""
    seen = set(existing)
    out: list[TestCase] = []
    index = starting_index
    for match in _FENCE_RE.finditer(response):
        code = match.group(1)
        if not code.strip() or code in seen:
            continue
        seen.add(code)
        out.append(TestCase(index=index, code=code, round=round_no))
        index += 1
    return out


def _union_pct(sets: list[frozenset[int]], total: int) -> float:
    if total <= 0:
        return 100.0 if sets else 0.0
    union: set[int] = set()
    for s in sets:
        union |= s
    return 100.0 * len(union) / total


def compute_coverage(record: CoverageRecord, task: TestGenTask) -> tuple[float, float, float, float]:
    """(line_pct, branch_pct, syntax_pct, exec_pct) for one task.

    Line/branch percentages come from the union bitmap of all syntactically
    valid tests. A task whose total_branches is zero counts as fully
    branch-covered once it has at least one valid test (nothing to miss).
    """
    n = len(record.per_test)
    if n == 0:
        return (0.0, 0.0, 0.0, 0.0)
    valid = record.valid_tests()
    syntax_pct = 100.0 * len(valid) / n
    exec_pct = 100.0 * sum(1 for t in record.per_test if t.exec_ok) / n
    if not valid:
        return (0.0, 0.0, syntax_pct, exec_pct)
    line_pct = _union_pct([t.covered_lines for t in valid], task.total_lines)
    branch_pct = _union_pct([t.covered_branches for t in valid], task.total_branches)
    return (line_pct, branch_pct, syntax_pct, exec_pct)


def cov_at_k(
    record: CoverageRecord,
    task: TestGenTask,
    k: int,
    trials: int = 100,
    seed: int = 0,
    method: str = "auto",
) -> tuple[float, float]:
    """Mean union coverage over size-k subsets of the valid tests.

    method: "auto" enumerates exactly when C(n,k) <= 10000 and samples
    otherwise; "exact" and "sample" force one path (for testing).
    """
    valid = record.valid_tests()
    n = len(valid)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, {n}] valid tests for task {record.task_id!r}")
    if method not in ("auto", "exact", "sample"):
        raise ValueError(f"unknown method {method!r}")
    exhaustive = method == "exact" or (method == "auto" and comb(n, k) <= EXHAUSTIVE_LIMIT)

    if exhaustive:
        subsets = np.array(list(itertools.combinations(range(n), k)), dtype=np.int64)
    else:
        rng = np.random.Generator(np.random.PCG64(hash64(seed, f"{record.task_id}:cov@{k}")))
        subsets = np.stack([rng.choice(n, size=k, replace=False) for _ in range(trials)]).astype(np.int64)

    def mean_pct(covered: list[frozenset[int]], total: int) -> float:
        if total <= 0:
            return 100.0
        packed = kernels.pack_bitmap(covered, total)
        counts = kernels.subset_union_counts(packed, subsets)
        return float(np.mean(100.0 * counts / total))

    line = mean_pct([t.covered_lines for t in valid], task.total_lines)
    branch = mean_pct([t.covered_branches for t in valid], task.total_branches)
    return (line, branch)


def aggregate_testgen(
    records: list[CoverageRecord],
    tasks: dict[str, TestGenTask],
    ks: tuple[int, ...] = (1, 2, 5),
    trials: int = 100,
    seed: int = 0,
) -> CoverageMetrics:
    """Unweighted per-task means. Tasks that produced zero tests are
    excluded from every mean and counted separately; a task enters the
    cov@k mean only when it has at least k valid tests."""
    if not records:
        raise ValueError("no coverage records to aggregate")
    scored: list[tuple[float, float, float, float]] = []
    without_tests = 0
    line_at_k: dict[int, list[float]] = {k: [] for k in ks}
    branch_at_k: dict[int, list[float]] = {k: [] for k in ks}
    for record in records:
        if not record.per_test:
            without_tests += 1
            continue
        task = tasks[record.task_id]
        scored.append(compute_coverage(record, task))
        n_valid = len(record.valid_tests())
        for k in ks:
            if n_valid >= k:
                lk, bk = cov_at_k(record, task, k, trials=trials, seed=seed)
                line_at_k[k].append(lk)
                branch_at_k[k].append(bk)
    if not scored:
        return CoverageMetrics(
            tasks_scored=0,
            tasks_without_tests=without_tests,
            syntax_pct=0.0,
            exec_pct=0.0,
            line_cov_pct=0.0,
            branch_cov_pct=0.0,
            line_cov_at_k={k: 0.0 for k in ks},
            branch_cov_at_k={k: 0.0 for k in ks},
        )

    def mean(values: list[float]) -> float:
        return float(np.mean(values)) if values else 0.0

    lines, branches, syntaxes, execs = zip(*scored)
    return CoverageMetrics(
        tasks_scored=len(scored),
        tasks_without_tests=without_tests,
        syntax_pct=mean(list(syntaxes)),
        exec_pct=mean(list(execs)),
        line_cov_pct=mean(list(lines)),
        branch_cov_pct=mean(list(branches)),
        line_cov_at_k={k: mean(v) for k, v in line_at_k.items()},
        branch_cov_at_k={k: mean(v) for k, v in branch_at_k.items()},
    )


@dataclass
class TestGenTaskResult:
    task_id: str
    tests: list[TestCase]
    record: CoverageRecord | None
    rounds_used: int
    retrieved_ids: tuple[str, ...]

    def to_record(self) -> dict:
        return {
            "task_id": self.task_id,
            "rounds_used": self.rounds_used,
            "retrieved_ids": list(self.retrieved_ids),
            "tests": [{"index": t.index, "round": t.round, "code": t.code} for t in self.tests],
            "per_test": [
                {
                    "index": t.index,
                    "syntax_ok": t.syntax_ok,
                    "exec_ok": t.exec_ok,
                    "covered_lines": sorted(t.covered_lines),
                    "covered_branches": sorted(t.covered_branches),
                }
                for t in (self.record.per_test if self.record else ())
            ],
        }


@dataclass
class TestGenRunResult:
    results: list[TestGenTaskResult]
    records: list[CoverageRecord]
    errored_task_ids: list[str]
    metrics: CoverageMetrics


def _query_text(task: TestGenTask) -> str:
    return f"{task.program_code}\n{task.function_name}\n{task.description}"


def run_testgen(
    tasks: list[TestGenTask],
    provider: LLMProvider,
    runner,
    *,
    model: str,
    n_tests: int = 20,
    round_budget: int = 8,
    rag: bool = False,
    store: VectorStore | None = None,
    query_embedder: EmbeddingProvider | None = None,
    k_retrieval: int = 3,
    timeout_s: float = 10.0,
    workers: int = 4,
    temperature: float = 0.0,
    max_tokens: int = 256,
    system_prompt: str | None = None,
    run_log: RunLog | None = None,
    ks: tuple[int, ...] = (1, 2, 5),
    trials: int = 100,
    seed: int = 0,
) -> TestGenRunResult:
    """Generate up to n_tests unique tests per task and score coverage.

    `runner` is anything with evaluate(CoverageRequest) -> CoverageResponse,
    or a zero-arg factory returning one (then each worker thread owns its
    own runner process). A runner crash marks the task as errored; a
    per-test timeout only marks that test exec_ok=False.
    """
    if rag and (store is None or query_embedder is None):
        raise ValueError("rag=True requires a built index and a query embedder")

    runner_lock = threading.Lock()
    local = threading.local()
    owned_runners: list = []

    def evaluate(req: CoverageRequest):
        if callable(runner):
            if not hasattr(local, "runner"):
                local.runner = runner()
                with runner_lock:
                    owned_runners.append(local.runner)
            return local.runner.evaluate(req)
        with runner_lock:  # shared runner objects are not thread-safe
            return runner.evaluate(req)

    def generate_for(task: TestGenTask) -> TestGenTaskResult | tuple[str, str]:
        contexts: list[KnowledgeDocument] = []
        retrieved: tuple[str, ...] = ()
        if rag:
            qvec = embed(_query_text(task), query_embedder)
            hits = store.top_k(qvec, k_retrieval)
            contexts = [store.payload(h.doc_id) for h in hits]
            retrieved = tuple(h.doc_id for h in hits)
        tests: list[TestCase] = []
        rounds_used = 0
        try:
            for round_no in range(1, round_budget + 1):
                if len(tests) >= n_tests:
                    break
                rounds_used = round_no
                prompt = build_testgen_prompt(task, contexts, prior=tests)
                req = testgen_request(
                    prompt, model, temperature=temperature, max_tokens=max_tokens,
                    system_prompt=system_prompt,
                )
                resp = complete(req, provider, log=run_log)
                new = extract_tests(
                    resp.text, len(tests), round_no, existing=tuple(t.code for t in tests)
                )
                tests.extend(new[: max(0, n_tests - len(tests))])
        except RetryExhaustedError as exc:
            return (task.task_id, str(exc))

        if not tests:
            return TestGenTaskResult(task.task_id, [], CoverageRecord(task.task_id, ()), rounds_used, retrieved)
        try:
            response = evaluate(
                CoverageRequest(
                    task_id=task.task_id,
                    program_source=task.program_code,
                    tests=tuple((t.index, t.code) for t in tests),
                    timeout_s=timeout_s,
                )
            )
        except RunnerError as exc:
            return (task.task_id, f"runner: {exc}")
        record = CoverageRecord(
            task_id=task.task_id,
            per_test=tuple(
                PerTestCoverage(
                    index=r.index,
                    syntax_ok=r.syntax_ok,
                    exec_ok=r.exec_ok,
                    covered_lines=frozenset(r.covered_lines),
                    covered_branches=frozenset(r.covered_branches),
                )
                for r in response.per_test
            ),
        )
        return TestGenTaskResult(task.task_id, tests, record, rounds_used, retrieved)

    try:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            outcomes = list(pool.map(generate_for, tasks))
    finally:
        for owned in owned_runners:
            try:
                owned.close()
            except Exception:
                pass

    results = sorted(
        (o for o in outcomes if isinstance(o, TestGenTaskResult)), key=lambda r: r.task_id
    )
    errored = sorted(o[0] for o in outcomes if isinstance(o, tuple))
    records = [r.record for r in results if r.record is not None]
    if records:
        metrics = aggregate_testgen(
            records, {t.task_id: t for t in tasks}, ks=ks, trials=trials, seed=seed
        )
    else:
        metrics = CoverageMetrics(0, 0, 0.0, 0.0, 0.0, 0.0, {k: 0.0 for k in ks}, {k: 0.0 for k in ks})
    return TestGenRunResult(results=results, records=records, errored_task_ids=errored, metrics=metrics)


def write_task_results(results: list[TestGenTaskResult], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for result in results:
            fh.write(json.dumps(result.to_record(), sort_keys=True, ensure_ascii=False) + "\n")
