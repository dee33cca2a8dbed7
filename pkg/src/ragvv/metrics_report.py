"""Run reports: aggregation into the standard table shapes, wall-clock
accounting, and machine/human-readable emission.

Percentages are stored at full precision and rounded to two decimals only
at render time; re-emitting a stored report is byte-idempotent.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .corpus import BugLabel
from .inspect_pipeline import HUMAN_INSPECTOR_BASELINE_PCT

__all__ = [
    "RunReport",
    "DiffSummary",
    "format_runtime",
    "dataset_hash",
    "emit_report",
    "load_report",
    "compare_runs",
    "render_diff_markdown",
]


def format_runtime(seconds: float) -> str:
    """H:MM:SS with the measured duration floored to whole seconds."""
    total = int(seconds)
    h, rest = divmod(total, 3600)
    m, s = divmod(rest, 60)
    return f"{h}:{m:02d}:{s:02d}"


def dataset_hash(path: str | Path) -> str:
    """Content hash stored in each report so runs compare like for like."""
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunReport:
    run_id: str
    mode: str  # "inspect" | "testgen"
    config: dict
    started: str
    finished: str
    runtime_s: float
    metrics: dict
    dataset_digest: str
    items_file: str = "items.ndjson"
    errored_task_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "RunReport":
        return cls(**obj)


def load_report(run_dir: str | Path) -> RunReport:
    with (Path(run_dir) / "report.json").open("r", encoding="utf-8") as fh:
        return RunReport.from_dict(json.load(fh))


def _round2(x: float) -> float:
    return round(x, 2)


def _inspect_csv_rows(report: RunReport) -> tuple[list[str], list[list]]:
    m = report.metrics
    header = ["Model", "RAG", "Matches", "Mismatches", "Accuracy"]
    row = [
        report.config.get("model", ""),
        "on" if report.config.get("rag") else "off",
        m["matches"],
        m["mismatches"],
        _round2(m["accuracy"]),
    ]
    return header, [row]


def _testgen_csv_rows(report: RunReport) -> tuple[list[str], list[list]]:
    m = report.metrics
    header = [
        "Model", "RAG", "Syntax", "Execution", "Line", "Branch",
        "LineCov@1", "LineCov@2", "LineCov@5",
        "BranchCov@1", "BranchCov@2", "BranchCov@5",
    ]
    lk = m["line_cov_at_k"]
    bk = m["branch_cov_at_k"]
    row = [
        report.config.get("model", ""),
        "on" if report.config.get("rag") else "off",
        _round2(m["syntax_pct"]),
        _round2(m["exec_pct"]),
        _round2(m["line_cov_pct"]),
        _round2(m["branch_cov_pct"]),
        _round2(lk.get("1", 0.0)),
        _round2(lk.get("2", 0.0)),
        _round2(lk.get("5", 0.0)),
        _round2(bk.get("1", 0.0)),
        _round2(bk.get("2", 0.0)),
        _round2(bk.get("5", 0.0)),
    ]
    return header, [row]


def _inspect_markdown(report: RunReport) -> str:
    m = report.metrics
    acc = _round2(m["accuracy"])
    lines = [
        f"# Inspection run {report.run_id}",
        "",
        f"- model: {report.config.get('model', '')}",
        f"- RAG: {'on' if report.config.get('rag') else 'off'} (k={report.config.get('k')})",
        f"- seed: {report.config.get('seed')}",
        f"- runtime: {format_runtime(report.runtime_s)}",
        f"- errored items (excluded from accuracy): {len(report.errored_task_ids)}",
        "",
        "| Scorer | Matches | Mismatches | Accuracy |",
        "| --- | --- | --- | --- |",
        f"| this run | {m['matches']} | {m['mismatches']} | {acc}% |",
        f"| human inspectors (reported average) | - | - | {HUMAN_INSPECTOR_BASELINE_PCT}% |",
        "",
        "## Mismatches by true bug type",
        "",
        "| Bug type | Count | Share of mismatches |",
        "| --- | --- | --- |",
    ]
    for label in BugLabel:
        count = m["mismatch_counts"].get(label.value, 0)
        rate = m["mismatch_rates"].get(label.value, 0.0)
        lines.append(f"| {label.display} | {count} | {_round2(rate)}% |")
    lines.append("")
    return "\n".join(lines)


def _testgen_markdown(report: RunReport) -> str:
    m = report.metrics
    lk = m["line_cov_at_k"]
    bk = m["branch_cov_at_k"]
    lines = [
        f"# Test-generation run {report.run_id}",
        "",
        f"- model: {report.config.get('model', '')}",
        f"- RAG: {'on' if report.config.get('rag') else 'off'} (k={report.config.get('k')})",
        f"- target tests per task: {report.config.get('n')}",
        f"- runtime: {format_runtime(report.runtime_s)}",
        f"- tasks scored: {m['tasks_scored']} (zero-test tasks: {m['tasks_without_tests']})",
        f"- {m.get('cov_at_k_definition', '')}",
        "",
        "| Syntax | Execution | Line | Branch | Line cov@1 | cov@2 | cov@5 | Branch cov@1 | cov@2 | cov@5 |",
        "| --- | --- | --- | --- | --- | --- | --- | --- | --- | --- |",
        "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |".format(
            _round2(m["syntax_pct"]), _round2(m["exec_pct"]),
            _round2(m["line_cov_pct"]), _round2(m["branch_cov_pct"]),
            _round2(lk.get("1", 0.0)), _round2(lk.get("2", 0.0)), _round2(lk.get("5", 0.0)),
            _round2(bk.get("1", 0.0)), _round2(bk.get("2", 0.0)), _round2(bk.get("5", 0.0)),
        ),
        "",
    ]
    return "\n".join(lines)


def emit_report(report: RunReport, out_dir: str | Path, formats: tuple[str, ...] = ("structured", "csv", "markdown")) -> list[Path]:
    """Write report files into out_dir; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if "structured" in formats:
        path = out / "report.json"
        path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(path)
    if "csv" in formats:
        header, rows = (
            _inspect_csv_rows(report) if report.mode == "inspect" else _testgen_csv_rows(report)
        )
        path = out / "table.csv"
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        written.append(path)
    if "markdown" in formats:
        text = _inspect_markdown(report) if report.mode == "inspect" else _testgen_markdown(report)
        path = out / "report.md"
        path.write_text(text, encoding="utf-8")
        written.append(path)
    return written


@dataclass
class DiffSummary:
    mode: str
    run_a: str
    run_b: str
    metric_deltas: dict[str, float]  # b - a
    mismatch_count_deltas: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def compare_runs(a: RunReport, b: RunReport) -> DiffSummary:
    """Per-metric deltas (b - a). Refuses mode or dataset mismatches."""
    if a.mode != b.mode:
        raise ValueError(f"cannot compare a {a.mode} run with a {b.mode} run")
    if a.dataset_digest != b.dataset_digest:
        raise ValueError(
            "refusing to compare runs over different datasets "
            f"({a.dataset_digest[:12]} vs {b.dataset_digest[:12]})"
        )
    deltas: dict[str, float] = {}
    mismatch_deltas: dict[str, int] = {}
    if a.mode == "inspect":
        for key in ("matches", "mismatches", "accuracy"):
            deltas[key] = b.metrics[key] - a.metrics[key]
        for label in BugLabel:
            av = a.metrics["mismatch_counts"].get(label.value, 0)
            bv = b.metrics["mismatch_counts"].get(label.value, 0)
            mismatch_deltas[label.value] = bv - av
    else:
        for key in ("syntax_pct", "exec_pct", "line_cov_pct", "branch_cov_pct"):
            deltas[key] = b.metrics[key] - a.metrics[key]
        for k, bv in b.metrics["line_cov_at_k"].items():
            deltas[f"line_cov@{k}"] = bv - a.metrics["line_cov_at_k"].get(k, 0.0)
        for k, bv in b.metrics["branch_cov_at_k"].items():
            deltas[f"branch_cov@{k}"] = bv - a.metrics["branch_cov_at_k"].get(k, 0.0)
    return DiffSummary(
        mode=a.mode,
        run_a=a.run_id,
        run_b=b.run_id,
        metric_deltas=deltas,
        mismatch_count_deltas=mismatch_deltas,
    )


def render_diff_markdown(diff: DiffSummary) -> str:
    lines = [
        f"# Run comparison: {diff.run_a} -> {diff.run_b}",
        "",
        "| Metric | Delta (b - a) |",
        "| --- | --- |",
    ]
    for key, value in diff.metric_deltas.items():
        sign = "+" if value >= 0 else ""
        lines.append(f"| {key} | {sign}{_round2(value)} |")
    if diff.mismatch_count_deltas:
        lines += ["", "| Bug type | Mismatch-count delta |", "| --- | --- |"]
        for key, value in diff.mismatch_count_deltas.items():
            sign = "+" if value >= 0 else ""
            lines.append(f"| {key} | {sign}{value} |")
    lines.append("")
    return "\n".join(lines)
