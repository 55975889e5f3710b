"""Tabular and graphical rendering of evaluation results.

Summary renderers take pre-built rows and emit one of three formats:
"table" (aligned text), "csv", or "json". Numeric cells are formatted in
table/csv output (alignment percentages to one decimal, F1 to two) and
kept as raw numbers in JSON.

Alignment summary rows are built from counts plus an explicit
denominator rather than from an AlignmentReport alone. Published
alignment tables report percentages of all generated steps, and a row's
four categories need not exhaust that denominator, so the renderer must
not re-normalize counts to 100.

Figure writers render to files with the Agg backend and return the path
written; they never open a window.
"""

from __future__ import annotations

import csv
import io
import json
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

from .comparator import CATEGORY_ORDER, AlignmentCategory, AlignmentReport, StepAlignment
from .errors import ProcessLensError
from .metrics import ClassificationReport, ConfusionMatrix, row_normalize
from .pipeline import AnalysisRun, ValueLabel, label_distribution

FORMATS = ("table", "csv", "json")

CATEGORY_COLUMNS: Mapping[AlignmentCategory, str] = {
    AlignmentCategory.EXACT: "Exact Match",
    AlignmentCategory.FUNCTIONAL: "Functional Equivalence",
    AlignmentCategory.GRANULARITY: "Granularity Difference",
    AlignmentCategory.NO_MATCH: "No Match",
}


class UnknownFormat(ProcessLensError):
    """Requested output format is not one of table/csv/json."""


def _check_format(fmt: str) -> None:
    if fmt not in FORMATS:
        raise UnknownFormat(f"unknown format {fmt!r}, expected one of {', '.join(FORMATS)}")


def render_table(
    headers: Sequence[str], rows: Sequence[Sequence[str]], align: str = "right"
) -> str:
    """Aligned text table. ``align`` sets value columns: "right" suits
    numbers, "left" suits text listings; the first column is always left."""
    widths = [
        max(len(headers[i]), *(len(r[i]) for r in rows)) if rows else len(headers[i])
        for i in range(len(headers))
    ]
    pad = str.rjust if align == "right" else str.ljust

    def line(cells: Sequence[str]) -> str:
        out = [cells[0].ljust(widths[0])]
        out += [pad(cells[i], widths[i]) for i in range(1, len(cells))]
        return "  ".join(out).rstrip()

    return "\n".join([line(headers)] + [line(r) for r in rows]) + "\n"


def _format_csv(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(headers)
    writer.writerows(rows)
    return buf.getvalue()


def _emit(headers, keys, cell_format, raw_rows, fmt):
    _check_format(fmt)
    if fmt == "json":
        payload = [{h: row[k] for h, k in zip(headers, keys)} for row in raw_rows]
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"
    formatted = [
        [row[keys[0]]] + [cell_format(row[k]) for k in keys[1:]] for row in raw_rows
    ]
    if fmt == "table":
        return render_table(headers, formatted)
    return _format_csv(headers, formatted)


@dataclass(frozen=True)
class AlignmentSummaryRow:
    """One configuration's four category percentages."""

    label: str
    percentages: Mapping[AlignmentCategory, float]


def alignment_summary_row(
    label: str, counts: Mapping[AlignmentCategory, int], total_generated: int
) -> AlignmentSummaryRow:
    if total_generated <= 0:
        raise ProcessLensError("total_generated must be positive")
    percentages = {c: 100.0 * counts.get(c, 0) / total_generated for c in CATEGORY_ORDER}
    return AlignmentSummaryRow(label, percentages)


def alignment_summary_from_report(label: str, report: AlignmentReport) -> AlignmentSummaryRow:
    return AlignmentSummaryRow(label, dict(report.percentages))


def render_alignment_summary(rows: Iterable[AlignmentSummaryRow], fmt: str = "table") -> str:
    """Four-column alignment summary, one row per configuration."""
    headers = ["Configuration"] + [CATEGORY_COLUMNS[c] for c in CATEGORY_ORDER]
    raw = [
        {"label": r.label, **{c: r.percentages[c] for c in CATEGORY_ORDER}} for r in rows
    ]
    return _emit(headers, ["label", *CATEGORY_ORDER], lambda v: f"{v:.1f}", raw, fmt)


def render_classification_summary(
    rows: Iterable[tuple[str, ClassificationReport]], fmt: str = "table"
) -> str:
    """Overall and NVA F1 per configuration."""
    headers = ["Configuration", "F1 (Overall)", "F1 (NVA)"]
    raw = [
        {"label": label, "macro": report.macro_f1, "nva": report.nva_f1}
        for label, report in rows
    ]
    return _emit(headers, ["label", "macro", "nva"], lambda v: f"{v:.2f}", raw, fmt)


def confusion_payload(matrix: ConfusionMatrix) -> dict:
    """Counts plus row-normalized percentages, JSON-ready."""
    percentages = row_normalize(matrix)
    return {
        "labels": list(matrix.labels),
        "counts": [list(r) for r in matrix.counts],
        "row_percentages": [list(r) for r in percentages.values],
        "zero_rows": list(percentages.zero_rows),
    }


def render_confusion(matrix: ConfusionMatrix, fmt: str = "table") -> str:
    """Gold-label rows with predicted counts and row percentages."""
    _check_format(fmt)
    if fmt == "json":
        return json.dumps(confusion_payload(matrix), indent=2, sort_keys=True) + "\n"
    percentages = row_normalize(matrix)
    headers = (
        ["Gold"]
        + [f"{l} (n)" for l in matrix.labels]
        + [f"{l} (%)" for l in matrix.labels]
    )
    rows = [
        [label]
        + [str(v) for v in matrix.counts[i]]
        + [f"{v:.1f}" for v in percentages.values[i]]
        for i, label in enumerate(matrix.labels)
    ]
    if fmt == "table":
        return render_table(headers, rows)
    return _format_csv(headers, rows)


def alignment_steps_csv(
    triples: Iterable[tuple[str, str, StepAlignment]]
) -> str:
    """Per-step alignment export: one row per generated step."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        [
            "process_id",
            "activity_id",
            "step_id",
            "generated_text",
            "category",
            "matched_gold_ids",
            "rationale",
            "flagged",
        ]
    )
    for process_id, activity_id, alignment in triples:
        writer.writerow(
            [
                process_id,
                activity_id,
                alignment.generated_step_id,
                alignment.generated_text,
                alignment.category.value,
                ";".join(alignment.matched_ground_truth_ids),
                alignment.rationale,
                "yes" if alignment.flagged else "no",
            ]
        )
    return buf.getvalue()


def distribution_payload(run: AnalysisRun) -> dict:
    distribution = label_distribution(run)
    return {
        "run_id": run.run_id,
        "total": len(run.classifications),
        "labels": {
            label.value: {"count": count, "fraction": fraction}
            for label, (count, fraction) in distribution.items()
        },
    }


# Fixed label colors shared with the review UI: NVA stands out as waste.
LABEL_COLORS = {
    ValueLabel.VA: "#2a9d8f",
    ValueLabel.BVA: "#457b9d",
    ValueLabel.NVA: "#e63946",
}


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def save_confusion_heatmap(matrix: ConfusionMatrix, path) -> Path:
    plt = _pyplot()
    percentages = row_normalize(matrix)
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    image = ax.imshow(percentages.values, cmap="Blues", vmin=0.0, vmax=100.0)
    ax.set_xticks(range(len(matrix.labels)), matrix.labels)
    ax.set_yticks(range(len(matrix.labels)), matrix.labels)
    ax.set_xlabel("Predicted")
    ax.set_ylabel("Gold")
    for i in range(len(matrix.labels)):
        for j in range(len(matrix.labels)):
            share = percentages.values[i][j]
            color = "white" if share > 55.0 else "black"
            ax.text(
                j,
                i,
                f"{percentages.values[i][j]:.1f}%\n({matrix.counts[i][j]})",
                ha="center",
                va="center",
                color=color,
                fontsize=8,
            )
    fig.colorbar(image, ax=ax, label="% of gold row")
    fig.tight_layout()
    return _save(fig, path)


def save_alignment_bars(rows: Iterable[AlignmentSummaryRow], path) -> Path:
    plt = _pyplot()
    rows = list(rows)
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    categories = list(CATEGORY_ORDER)
    width = 0.8 / max(len(rows), 1)
    for k, row in enumerate(rows):
        xs = [i + k * width for i in range(len(categories))]
        ax.bar(xs, [row.percentages[c] for c in categories], width=width, label=row.label)
    ax.set_xticks(
        [i + width * (len(rows) - 1) / 2 for i in range(len(categories))],
        [CATEGORY_COLUMNS[c] for c in categories],
        fontsize=8,
    )
    ax.set_ylabel("% of generated steps")
    if rows:
        ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def save_distribution_bar(run: AnalysisRun, path) -> Path:
    plt = _pyplot()
    distribution = label_distribution(run)
    fig, ax = plt.subplots(figsize=(5.4, 1.8))
    left = 0.0
    for label in ValueLabel:
        count, fraction = distribution[label]
        share = 100.0 * fraction
        ax.barh(0, share, left=left, color=LABEL_COLORS[label])
        if count:
            ax.text(
                left + share / 2,
                0,
                f"{label.value} {share:.1f}%",
                ha="center",
                va="center",
                color="white",
                fontsize=9,
            )
        left += share
    ax.set_xlim(0, 100)
    ax.set_yticks([])
    ax.set_xlabel("% of steps")
    fig.tight_layout()
    return _save(fig, path)


def save_score_series(series: Sequence[float], path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.4, 3.2))
    ax.plot(range(1, len(series) + 1), series, marker=".")
    ax.set_xlabel("Evaluation")
    ax.set_ylabel("Best score so far")
    fig.tight_layout()
    return _save(fig, path)


def _save(fig, path) -> Path:
    path = Path(path)
    # Strip the Software tag so regenerated PNGs differ only when data does.
    fig.savefig(path, metadata={"Software": None})
    _pyplot().close(fig)
    return path
