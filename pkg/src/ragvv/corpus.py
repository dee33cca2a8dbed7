"""Data loading and validation for the three corpora the harness consumes.

Three on-disk sources, all line-delimited JSON (one record per line):

* knowledge base   -- {"task_id", "content", "metadata"} golden-code docs
* inspection tasks -- {"task_id", "variants": [8 x {"label", "source", "defect_line"}]}
* test-gen tasks   -- {"task_id", "program_code", "function_name", "description",
                       "total_lines", "total_branches"}

Loaded corpora are plain immutable dataclasses; loading is single-threaded
and the results are safe to share across workers.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

__all__ = [
    "BugLabel",
    "UNPARSEABLE",
    "KnowledgeDocument",
    "BugVariant",
    "InspectionTask",
    "TestGenTask",
    "CorpusError",
    "load_knowledge_base",
    "load_inspection_tasks",
    "load_testgen_tasks",
    "save_inspection_tasks",
    "save_knowledge_base",
    "hash64",
    "select_variant",
]


class CorpusError(ValueError):
    """Raised when an input file violates the corpus schema."""


class BugLabel(str, Enum):
    """Closed 8-value defect taxonomy; ground truth is always one of these."""

    BUG_FREE = "bug_free"
    MISSING_COLON = "missing_colon"
    MISSING_PARENTHESIS = "missing_parenthesis"
    MISSING_QUOTATION = "missing_quotation"
    MISSING_COMMA = "missing_comma"
    MISMATCHED_QUOTATION = "mismatched_quotation"
    MISMATCHED_BRACKET = "mismatched_bracket"
    KEYWORD_AS_IDENTIFIER = "keyword_as_identifier"

    @property
    def display(self) -> str:
        """Human-readable name, e.g. 'missing colon' / 'bug-free code'."""
        if self is BugLabel.BUG_FREE:
            return "bug-free code"
        return self.value.replace("_", " ")


#: Wire marker for model responses that name no known defect class.
#: Predictions only; never a ground-truth label.
UNPARSEABLE = "unparseable"

DEFECT_LABELS: tuple[BugLabel, ...] = tuple(
    label for label in BugLabel if label is not BugLabel.BUG_FREE
)


@dataclass(frozen=True)
class KnowledgeDocument:
    """One knowledge-base entry: embedded and retrieved as context."""

    doc_id: str
    content: str
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise CorpusError("knowledge document has empty doc_id")
        if not self.content:
            raise CorpusError(f"knowledge document {self.doc_id!r} has empty content")


@dataclass(frozen=True)
class BugVariant:
    """One of the eight snippets of an inspection task."""

    label: BugLabel
    source: str
    defect_line: int | None = None

    def __post_init__(self) -> None:
        if self.label is BugLabel.BUG_FREE:
            if self.defect_line is not None:
                raise CorpusError("bug-free variant must not carry a defect_line")
        else:
            if self.defect_line is None:
                raise CorpusError(f"{self.label.value} variant is missing defect_line")
            n_lines = len(self.source.splitlines()) or 1
            if not 1 <= self.defect_line <= n_lines:
                raise CorpusError(
                    f"defect_line {self.defect_line} outside source ({n_lines} lines)"
                )


@dataclass(frozen=True)
class InspectionTask:
    """A bug-free snippet plus seven single-defect variants."""

    task_id: str
    variants: tuple[BugVariant, ...]

    def __post_init__(self) -> None:
        if len(self.variants) != 8:
            raise CorpusError(
                f"task {self.task_id!r} has {len(self.variants)} variants, expected 8"
            )
        labels = [v.label for v in self.variants]
        if labels.count(BugLabel.BUG_FREE) != 1:
            raise CorpusError(f"task {self.task_id!r} must have exactly one bug-free variant")
        if set(labels) != set(BugLabel):
            missing = {l.value for l in BugLabel} - {l.value for l in labels}
            raise CorpusError(f"task {self.task_id!r} labels incomplete, missing {sorted(missing)}")


@dataclass(frozen=True)
class TestGenTask:
    """A program under test plus the totals its coverage is measured against."""

    __test__ = False  # not a pytest class, despite the name

    task_id: str
    program_code: str
    function_name: str
    description: str
    total_lines: int
    total_branches: int

    def __post_init__(self) -> None:
        if not self.program_code:
            raise CorpusError(f"task {self.task_id!r} has empty program_code")
        if self.total_lines <= 0:
            raise CorpusError(f"task {self.task_id!r} total_lines must be positive")
        if self.total_branches < 0:
            raise CorpusError(f"task {self.task_id!r} total_branches must be >= 0")


def _iter_records(path: str | Path):
    """Yield (line_number, parsed object) for each non-blank line."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON record: {exc}") from exc


def load_knowledge_base(path: str | Path) -> list[KnowledgeDocument]:
    """Load knowledge-base documents, preserving file order.

    Raises CorpusError naming the offending line for malformed records and
    on duplicate doc ids.
    """
    docs: list[KnowledgeDocument] = []
    seen: set[str] = set()
    for lineno, rec in _iter_records(path):
        if not isinstance(rec, dict) or "task_id" not in rec or "content" not in rec:
            raise CorpusError(f"{path}:{lineno}: record needs 'task_id' and 'content' keys")
        doc_id = str(rec["task_id"])
        if doc_id in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate doc_id {doc_id!r}")
        seen.add(doc_id)
        metadata = rec.get("metadata") or {}
        if not isinstance(metadata, dict):
            raise CorpusError(f"{path}:{lineno}: metadata must be an object")
        docs.append(
            KnowledgeDocument(
                doc_id=doc_id,
                content=str(rec["content"]),
                metadata={str(k): str(v) for k, v in metadata.items()},
            )
        )
    return docs


def _variant_from_record(task_id: str, rec: dict) -> BugVariant:
    try:
        label = BugLabel(rec["label"])
    except (KeyError, ValueError) as exc:
        raise CorpusError(f"task {task_id!r}: unknown or missing label {rec.get('label')!r}") from exc
    defect_line = rec.get("defect_line")
    try:
        return BugVariant(
            label=label,
            source=str(rec["source"]),
            defect_line=None if defect_line is None else int(defect_line),
        )
    except CorpusError as exc:
        raise CorpusError(f"task {task_id!r}: {exc}") from exc


def load_inspection_tasks(path: str | Path) -> list[InspectionTask]:
    """Load inspection tasks, enforcing the 8-variant invariant per task."""
    tasks: list[InspectionTask] = []
    seen: set[str] = set()
    for lineno, rec in _iter_records(path):
        task_id = str(rec.get("task_id", ""))
        if not task_id:
            raise CorpusError(f"{path}:{lineno}: inspection record missing task_id")
        if task_id in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate task_id {task_id!r}")
        seen.add(task_id)
        variants = rec.get("variants")
        if not isinstance(variants, list):
            raise CorpusError(f"task {task_id!r}: 'variants' must be a list")
        tasks.append(
            InspectionTask(
                task_id=task_id,
                variants=tuple(_variant_from_record(task_id, v) for v in variants),
            )
        )
    return tasks


def load_testgen_tasks(path: str | Path) -> list[TestGenTask]:
    """Load test-generation tasks (program under test + coverage totals)."""
    tasks: list[TestGenTask] = []
    seen: set[str] = set()
    for lineno, rec in _iter_records(path):
        task_id = str(rec.get("task_id", ""))
        if not task_id:
            raise CorpusError(f"{path}:{lineno}: test-gen record missing task_id")
        if task_id in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate task_id {task_id!r}")
        seen.add(task_id)
        try:
            tasks.append(
                TestGenTask(
                    task_id=task_id,
                    program_code=str(rec["program_code"]),
                    function_name=str(rec.get("function_name", "")),
                    description=str(rec.get("description", "")),
                    total_lines=int(rec["total_lines"]),
                    total_branches=int(rec.get("total_branches", 0)),
                )
            )
        except KeyError as exc:
            raise CorpusError(f"{path}:{lineno}: test-gen record missing {exc}") from exc
    return tasks


def save_knowledge_base(docs: list[KnowledgeDocument], path: str | Path) -> None:
    """Write documents in the same line-delimited schema load expects."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(
                json.dumps(
                    {"task_id": doc.doc_id, "content": doc.content, "metadata": doc.metadata},
                    ensure_ascii=False,
                )
                + "\n"
            )


def save_inspection_tasks(tasks: list[InspectionTask], path: str | Path) -> None:
    """Write inspection tasks; load(save(tasks)) round-trips structurally."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for task in tasks:
            rec = {
                "task_id": task.task_id,
                "variants": [
                    {"label": v.label.value, "source": v.source, "defect_line": v.defect_line}
                    for v in task.variants
                ],
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def hash64(seed: int, key: str) -> int:
    """Stable 64-bit stream seed derived from (global seed, string key).

    Uses blake2b so the derivation is identical across processes and
    platforms; task order therefore never affects per-task draws.
    """
    data = f"{seed}\x1f{key}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "big")


def select_variant(task: InspectionTask, seed: int) -> tuple[BugVariant, BugLabel]:
    """Uniform seeded choice among the task's eight variants.

    Pure function of (task_id, seed): the per-task generator is seeded by
    hash64(seed, task_id), never by position in the dataset.
    """
    rng = np.random.Generator(np.random.PCG64(hash64(seed, task.task_id)))
    variant = task.variants[int(rng.integers(0, len(task.variants)))]
    return variant, variant.label
