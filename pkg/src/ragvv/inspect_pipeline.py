"""End-to-end automated code inspection.

Per task: seeded variant selection, optional retrieval of reference
examples, prompt construction, one LLM call, then deterministic scoring of
the predicted bug type against ground truth. The default scorer is a
synonym-table parser; an LLM judge is available behind a flag but never
anchors tests.
"""
from __future__ import annotations

import json
import logging
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import BugLabel, BugVariant, InspectionTask, KnowledgeDocument, UNPARSEABLE, select_variant
from .embedder import EmbeddingProvider, embed
from .llmclient import (
    ChatMessage,
    ChatRequest,
    LLMProvider,
    RetryExhaustedError,
    RunLog,
    complete,
)
from .vectorstore import VectorStore

__all__ = [
    "InspectionPrediction",
    "InspectionMetrics",
    "HUMAN_INSPECTOR_BASELINE_PCT",
    "build_inspection_prompt",
    "inspection_request",
    "parse_bug_label",
    "judge_with_llm",
    "score_inspection",
    "run_inspection",
]

logger = logging.getLogger(__name__)

#: Average defect-detection rate of human code inspectors, reported for
#: comparison in every inspection summary.
HUMAN_INSPECTOR_BASELINE_PCT = 60.0

_LABEL_VOCAB = ", ".join(l.display for l in BugLabel if l is not BugLabel.BUG_FREE)

_PROMPT_HEADER = (
    "You are reviewing a Python code snippet for syntactic defects.\n"
    "Decide whether the snippet contains a bug. If it does, name exactly one\n"
    f"bug type from this list: {_LABEL_VOCAB}.\n"
    'Report the defect position as "line N". If the snippet has no bug,\n'
    'answer "bug-free code".\n'
)

# Checked in order; first match wins. The mismatched-* phrases must come
# before missing-* so e.g. "mismatched quotation" is never shadowed.
_SYNONYMS: list[tuple[BugLabel, tuple[str, ...]]] = [
    (
        BugLabel.MISMATCHED_QUOTATION,
        ("mismatched quotation", "mismatched quote", "quotation mismatch", "quote mismatch",
         "mismatched string"),
    ),
    (
        BugLabel.MISMATCHED_BRACKET,
        ("mismatched bracket", "bracket mismatch", "mismatched parenthes", "mismatched brace",
         "mismatched square", "wrong closing bracket"),
    ),
    (
        BugLabel.MISSING_COLON,
        ("missing colon", "missing a colon", "colon is missing", "no colon", "lacks a colon",
         "omitted colon", "colon missing"),
    ),
    (
        BugLabel.MISSING_PARENTHESIS,
        ("missing parenthes", "missing a parenthes", "parenthesis is missing", "unclosed parenthes",
         "unbalanced parenthes", "missing closing parenthes", "missing opening parenthes",
         "paren is missing"),
    ),
    (
        BugLabel.MISSING_QUOTATION,
        ("missing quotation", "missing quote", "missing a quote", "unterminated string",
         "unclosed string", "quotation mark is missing", "quote is missing"),
    ),
    (
        BugLabel.MISSING_COMMA,
        ("missing comma", "missing a comma", "comma is missing", "no comma", "lacks a comma",
         "comma missing"),
    ),
    (
        BugLabel.KEYWORD_AS_IDENTIFIER,
        ("keyword as identifier", "keyword as an identifier", "keyword as a variable",
         "keyword as variable", "reserved keyword", "reserved word", "misusing a keyword",
         "keyword misused", "keyword used as", "used as an identifier", "used as a variable name"),
    ),
    (
        BugLabel.BUG_FREE,
        ("bug-free", "bug free", "no bug", "free of errors", "free of bugs", "no error",
         "without errors", "correct code", "no issues", "looks correct", "no defect"),
    ),
]

_LINE_RE = re.compile(r"line\s*[:#]?\s*(\d+)", re.IGNORECASE)


@dataclass(frozen=True)
class InspectionPrediction:
    task_id: str
    truth: BugLabel
    truth_line: int | None
    predicted: BugLabel | None  # None means the response was unparseable
    predicted_line: int | None
    raw_response: str
    retrieved_ids: tuple[str, ...] = ()
    judge_match: bool | None = None

    def to_record(self) -> dict:
        return {
            "task_id": self.task_id,
            "truth": self.truth.value,
            "truth_line": self.truth_line,
            "predicted": self.predicted.value if self.predicted else UNPARSEABLE,
            "predicted_line": self.predicted_line,
            "raw_response": self.raw_response,
            "retrieved_ids": list(self.retrieved_ids),
            "judge_match": self.judge_match,
        }


@dataclass
class InspectionMetrics:
    total: int
    matches: int
    mismatches: int
    accuracy: float  # percentage, full precision
    mismatch_counts: dict[BugLabel, int]
    mismatch_rates: dict[BugLabel, float]  # percent of all mismatches

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "matches": self.matches,
            "mismatches": self.mismatches,
            "accuracy": self.accuracy,
            "mismatch_counts": {l.value: c for l, c in self.mismatch_counts.items()},
            "mismatch_rates": {l.value: r for l, r in self.mismatch_rates.items()},
        }


def _numbered(source: str) -> str:
    lines = source.splitlines() or [""]
    return "\n".join(f"{i} | {line}" for i, line in enumerate(lines, start=1))


def build_inspection_prompt(variant: BugVariant, contexts: list[KnowledgeDocument]) -> str:
    """Instruction, then the line-numbered snippet, then reference examples.

    The reference section is omitted entirely when contexts is empty, which
    is the whole difference between the RAG and non-RAG arms.
    """
    if not variant.source:
        raise ValueError("variant source is empty")
    parts = [_PROMPT_HEADER, "\nCode snippet:\n```\n" + _numbered(variant.source) + "\n```\n"]
    if contexts:
        parts.append("\nReference examples of correct code:\n")
        for i, doc in enumerate(contexts, start=1):
            parts.append(f"\n[{i}] {doc.content}\n")
    return "".join(parts)


def inspection_request(
    prompt: str,
    model: str,
    *,
    temperature: float = 0.0,
    max_tokens: int = 256,
    system_prompt: str | None = None,
) -> ChatRequest:
    """The one place inspection ChatRequests are built, so scripted fixtures
    can be keyed against exactly what the pipeline will send."""
    messages: list[ChatMessage] = []
    if system_prompt:
        messages.append(ChatMessage("system", system_prompt))
    messages.append(ChatMessage("user", prompt))
    return ChatRequest(model=model, messages=tuple(messages), temperature=temperature, max_tokens=max_tokens)


def parse_bug_label(response: str) -> tuple[BugLabel | None, int | None]:
    """Map free-form analysis text onto the fixed label vocabulary.

    Case-insensitive substring match against the synonym table, first hit
    wins. Unmatched text yields (None, line), which always scores as a
    mismatch. A "line N" mention is extracted when present.
    """
    lowered = response.lower()
    line_match = _LINE_RE.search(lowered)
    line = int(line_match.group(1)) if line_match else None
    for label, phrases in _SYNONYMS:
        if any(p in lowered for p in phrases):
            return label, line
    return None, line


def judge_with_llm(
    prediction_text: str,
    truth: BugLabel,
    judge: LLMProvider,
    *,
    model: str,
    log: RunLog | None = None,
) -> bool:
    """Ask a second model whether the analysis identifies the true bug type.

    Forced yes/no; anything else counts as a mismatch and is logged.
    """
    prompt = (
        "An automated reviewer analyzed a code snippet and said:\n"
        f"{prediction_text}\n\n"
        f"The snippet's actual defect type is: {truth.display}.\n"
        "Does the analysis identify this defect type? Answer yes or no."
    )
    req = ChatRequest(model=model, messages=(ChatMessage("user", prompt),))
    text = complete(req, judge, log=log).text.strip().lower()
    if text.startswith("yes"):
        return True
    if not text.startswith("no"):
        logger.warning("judge reply %r is not yes/no; counting as mismatch", text[:50])
    return False


def is_match(pred: InspectionPrediction, *, require_line: bool = False, use_judge: bool = False) -> bool:
    if use_judge:
        return bool(pred.judge_match)
    if pred.predicted is not pred.truth:
        return False
    if require_line and pred.truth is not BugLabel.BUG_FREE and pred.predicted_line != pred.truth_line:
        return False
    return True


def score_inspection(
    predictions: list[InspectionPrediction],
    *,
    require_line: bool = False,
    use_judge: bool = False,
) -> InspectionMetrics:
    """Exact integer counting; percentages kept at full precision."""
    if not predictions:
        raise ValueError("no predictions to score")
    matches = sum(1 for p in predictions if is_match(p, require_line=require_line, use_judge=use_judge))
    mismatched = [p for p in predictions if not is_match(p, require_line=require_line, use_judge=use_judge)]
    counts = Counter(p.truth for p in mismatched)
    mismatch_counts = {label: counts.get(label, 0) for label in BugLabel}
    n_mismatch = len(mismatched)
    mismatch_rates = {
        label: (100.0 * c / n_mismatch if n_mismatch else 0.0)
        for label, c in mismatch_counts.items()
    }
    total = len(predictions)
    return InspectionMetrics(
        total=total,
        matches=matches,
        mismatches=n_mismatch,
        accuracy=100.0 * matches / total,
        mismatch_counts=mismatch_counts,
        mismatch_rates=mismatch_rates,
    )


@dataclass
class InspectionRunResult:
    predictions: list[InspectionPrediction]
    errored_task_ids: list[str]
    metrics: InspectionMetrics
    k: int
    rag: bool


def run_inspection(
    tasks: list[InspectionTask],
    provider: LLMProvider,
    *,
    model: str,
    seed: int,
    rag: bool = False,
    store: VectorStore | None = None,
    query_embedder: EmbeddingProvider | None = None,
    k: int = 3,
    workers: int = 4,
    require_line: bool = False,
    judge: LLMProvider | None = None,
    judge_model: str = "",
    system_prompt: str | None = None,
    temperature: float = 0.0,
    max_tokens: int = 256,
    run_log: RunLog | None = None,
) -> InspectionRunResult:
    """Inspect every task once; returns predictions sorted by task_id.

    Items whose LLM call exhausts its retries are excluded from the
    accuracy denominator and reported separately.
    """
    if rag and (store is None or query_embedder is None):
        raise ValueError("rag=True requires a built index and a query embedder")

    def one(task: InspectionTask) -> InspectionPrediction | tuple[str, str]:
        variant, truth = select_variant(task, seed)
        contexts: list[KnowledgeDocument] = []
        retrieved: tuple[str, ...] = ()
        if rag:
            qvec = embed(variant.source, query_embedder)
            hits = store.top_k(qvec, k)
            contexts = [store.payload(h.doc_id) for h in hits]
            retrieved = tuple(h.doc_id for h in hits)
        prompt = build_inspection_prompt(variant, contexts)
        req = inspection_request(
            prompt, model, temperature=temperature, max_tokens=max_tokens, system_prompt=system_prompt
        )
        try:
            resp = complete(req, provider, log=run_log)
        except RetryExhaustedError as exc:
            return (task.task_id, str(exc))
        predicted, predicted_line = parse_bug_label(resp.text)
        judge_match = None
        if judge is not None:
            judge_match = judge_with_llm(
                resp.text, truth, judge, model=judge_model or model, log=run_log
            )
        return InspectionPrediction(
            task_id=task.task_id,
            truth=truth,
            truth_line=variant.defect_line,
            predicted=predicted,
            predicted_line=predicted_line,
            raw_response=resp.text,
            retrieved_ids=retrieved,
            judge_match=judge_match,
        )

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        outcomes = list(pool.map(one, tasks))

    predictions = sorted(
        (o for o in outcomes if isinstance(o, InspectionPrediction)), key=lambda p: p.task_id
    )
    errored = sorted(o[0] for o in outcomes if isinstance(o, tuple))
    if not predictions:
        raise RuntimeError("every task errored; nothing to score")
    metrics = score_inspection(predictions, require_line=require_line, use_judge=judge is not None)
    return InspectionRunResult(
        predictions=predictions, errored_task_ids=errored, metrics=metrics, k=k, rag=rag
    )


def write_predictions(predictions: list[InspectionPrediction], path: str | Path) -> None:
    """One JSON record per prediction, sorted by task_id, no timestamps --
    two same-seed runs produce byte-identical files."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for pred in predictions:
            fh.write(json.dumps(pred.to_record(), sort_keys=True, ensure_ascii=False) + "\n")
