"""Corpus-level evaluation: how well do generated breakdowns and labels
match the gold annotations?

Phase 1 is scored by pooling per-activity step alignments corpus-wide into
one four-category report. Phase 2 is scored in isolation by classifying
the gold breakdowns, so a weak breakdown cannot mask a strong classifier.

Runs are also scorable end to end: each generated step inherits the gold
label of its aligned reference step; NoMatch steps have no reference to
compare against, so they are excluded from the confusion matrix and
reported as an unmatched count instead. A granularity match citing
references with conflicting gold labels is ambiguous and excluded the same
way.
"""

from __future__ import annotations

from dataclasses import dataclass

from .comparator import (
    AlignmentCategory,
    AlignmentReport,
    GoldStep,
    StepAlignment,
    aggregate_alignment,
    align_activity,
)
from .datastore import GroundTruthProcess
from .errors import DatasetError, ProcessLensError
from .metrics import ClassificationReport, ConfusionMatrix, classification_report, confusion
from .pipeline import (
    ActivityStatus,
    AnalysisRun,
    Step,
    classify_activity_steps,
    make_step_id,
    run_breakdown,
)
from .prompts import PromptCatalog, load_default_catalog


def pooled_breakdown_report(
    processes,
    config,
    gateway,
    *,
    catalog: PromptCatalog | None = None,
    collect_alignments: list | None = None,
) -> AlignmentReport:
    """Run phase 1 over every process and pool the step alignments.

    ``collect_alignments`` receives (process_id, activity_id, StepAlignment)
    triples when provided, for per-step export.
    """
    processes = list(processes)
    if not processes:
        raise DatasetError("no processes to evaluate")
    catalog = catalog or load_default_catalog()
    alignments: list[StepAlignment] = []
    total_gold = 0
    for process in processes:
        steps, statuses = run_breakdown(process.model, config, gateway, catalog=catalog)
        by_activity: dict[str, list[Step]] = {}
        for s in steps:
            by_activity.setdefault(s.activity_id, []).append(s)
        for gold_activity in process.activities:
            total_gold += len(gold_activity.steps)
            if statuses.get(gold_activity.activity_id) is not ActivityStatus.OK:
                continue
            generated = [
                (s.step_id, s.text) for s in by_activity.get(gold_activity.activity_id, [])
            ]
            gold = [
                GoldStep(f"{gold_activity.activity_id}:g{i}", text)
                for i, text in enumerate(gold_activity.steps, 1)
            ]
            for alignment in align_activity(
                generated, gold, gateway, activity_name=gold_activity.activity_name
            ):
                alignments.append(alignment)
                if collect_alignments is not None:
                    collect_alignments.append(
                        (process.process_id, gold_activity.activity_id, alignment)
                    )
    return aggregate_alignment(alignments, len(alignments), total_gold)


def pooled_vaa_report(
    processes, config, gateway, *, catalog: PromptCatalog | None = None
) -> tuple[ClassificationReport, ConfusionMatrix, str]:
    """Classify the gold breakdowns and score against the gold labels."""
    processes = list(processes)
    if not processes:
        raise DatasetError("no processes to evaluate")
    catalog = catalog or load_default_catalog()
    predicted: list[str] = []
    gold_labels: list[str] = []
    skipped: list[str] = []
    for process in processes:
        for gold_activity in process.activities:
            steps = [
                Step(
                    make_step_id(process.process_id, gold_activity.activity_id, i),
                    gold_activity.activity_id,
                    i,
                    text,
                )
                for i, text in enumerate(gold_activity.steps, 1)
            ]
            try:
                classifications = classify_activity_steps(
                    catalog, config, process.model.name, steps, gateway
                )
            except ProcessLensError:
                skipped.append(f"{process.process_id}:{gold_activity.activity_id}")
                continue
            predicted.extend(c.label.value for c in classifications)
            gold_labels.extend(l.value for l in gold_activity.labels)
    if not predicted:
        raise DatasetError("classification failed on every activity")
    matrix = confusion(predicted, gold_labels)
    note = f"skipped: {', '.join(skipped)}" if skipped else ""
    return classification_report(matrix), matrix, note


@dataclass(frozen=True)
class RunScore:
    """End-to-end score of one run against its process's gold labels."""

    matrix: ConfusionMatrix
    report: ClassificationReport
    scored_steps: int
    unmatched_steps: int
    ambiguous_steps: int
    alignment: AlignmentReport


def score_run_against_gold(
    run: AnalysisRun,
    gold_process: GroundTruthProcess,
    gateway,
) -> RunScore:
    """Align the run's steps to gold, then compare labels over the pairs."""
    if run.process_id != gold_process.process_id:
        raise DatasetError(
            f"run is for {run.process_id!r}, gold for {gold_process.process_id!r}"
        )
    by_activity: dict[str, list[Step]] = {}
    for s in run.steps:
        by_activity.setdefault(s.activity_id, []).append(s)
    labels = {c.step_id: c.label.value for c in run.classifications}

    alignments: list[StepAlignment] = []
    gold_label_of: dict[str, str] = {}
    total_gold = 0
    for gold_activity in gold_process.activities:
        total_gold += len(gold_activity.steps)
        generated = [
            (s.step_id, s.text) for s in by_activity.get(gold_activity.activity_id, [])
        ]
        if not generated:
            continue
        gold = []
        for i, (text, label) in enumerate(
            zip(gold_activity.steps, gold_activity.labels), 1
        ):
            gold_id = f"{gold_activity.activity_id}:g{i}"
            gold.append(GoldStep(gold_id, text))
            gold_label_of[gold_id] = label.value
        alignments.extend(
            align_activity(
                generated, gold, gateway, activity_name=gold_activity.activity_name
            )
        )

    predicted: list[str] = []
    gold_seq: list[str] = []
    unmatched = 0
    ambiguous = 0
    for alignment in alignments:
        pred = labels.get(alignment.generated_step_id)
        if alignment.category is AlignmentCategory.NO_MATCH or pred is None:
            unmatched += 1
            continue
        matched = {gold_label_of[g] for g in alignment.matched_ground_truth_ids}
        if len(matched) != 1:
            ambiguous += 1
            continue
        predicted.append(pred)
        gold_seq.append(next(iter(matched)))
    if not predicted:
        raise DatasetError("no alignable, classified steps to score")
    matrix = confusion(predicted, gold_seq)
    return RunScore(
        matrix=matrix,
        report=classification_report(matrix),
        scored_steps=len(predicted),
        unmatched_steps=unmatched,
        ambiguous_steps=ambiguous,
        alignment=aggregate_alignment(alignments, len(alignments), total_gold),
    )
