"""Two-phase analysis orchestration: break activities into steps, then
label each step VA, BVA, or NVA.

A run is immutable once built. Analyst interventions (step edits, label
overrides, per-activity re-analysis) produce child runs whose revision is
parent + 1, so the audit trail is a chain of whole snapshots rather than
in-place mutations.

Failures are isolated per activity: a provider outage or an unparseable
response marks that one activity BreakdownFailed or ClassificationFailed
and the run proceeds. Each phase retries once with a format reminder
before giving up on an activity.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum

from .bpmn import ProcessModel, extract_activities, summarize_context
from .errors import (
    EmptyRun,
    EmptyStepList,
    NoActivities,
    ProcessLensError,
    UnknownActivity,
    UnknownStep,
    UnparseableResponse,
)
from .gateway import parse_classifications, parse_step_list
from .prompts import (
    Phase,
    PromptCatalog,
    PromptConfiguration,
    RenderedPrompt,
    ZERO_SHOT_LABEL,
    SLOTS,
    includes_justifications,
    load_default_catalog,
    render_breakdown_prompt,
    render_vaa_prompt,
    validate_configuration,
)


class ValueLabel(str, Enum):
    VA = "VA"
    BVA = "BVA"
    NVA = "NVA"


class ActivityStatus(str, Enum):
    OK = "Ok"
    BREAKDOWN_FAILED = "BreakdownFailed"
    CLASSIFICATION_FAILED = "ClassificationFailed"


STEP_ID_SEPARATOR = ":"


def make_step_id(process_id: str, activity_id: str, ordinal: int) -> str:
    return STEP_ID_SEPARATOR.join((process_id, activity_id, str(ordinal)))


@dataclass(frozen=True)
class Step:
    step_id: str
    activity_id: str
    ordinal: int
    text: str


@dataclass(frozen=True)
class StepClassification:
    step_id: str
    label: ValueLabel
    justification: str


@dataclass(frozen=True)
class AnalysisRun:
    run_id: str
    created_at: str
    process_id: str
    breakdown_config: PromptConfiguration | None
    vaa_config: PromptConfiguration | None
    provider_label: str
    statuses: dict[str, ActivityStatus]
    steps: tuple[Step, ...]
    classifications: tuple[StepClassification, ...]
    revision: int = 1
    parent_run: str | None = None
    review_note: str = ""

    def step(self, step_id: str) -> Step:
        for s in self.steps:
            if s.step_id == step_id:
                return s
        raise UnknownStep(f"run {self.run_id} has no step {step_id!r}")

    def classification(self, step_id: str) -> StepClassification:
        for c in self.classifications:
            if c.step_id == step_id:
                return c
        raise UnknownStep(f"run {self.run_id} has no classification for {step_id!r}")


def _ws(text: str) -> str:
    return " ".join(text.split())


_BREAKDOWN_REMINDER = (
    "Reminder: respond only with a fenced code block tagged `steps`, "
    "one numbered step per line, nothing else."
)
_VAA_REMINDER = (
    "Reminder: respond only with a fenced code block tagged `vaa`, one line "
    "per step in the form `N. <VA|BVA|NVA> | <justification>`, nothing else."
)


def _with_reminder(prompt: RenderedPrompt, reminder: str) -> RenderedPrompt:
    return replace(prompt, user_text=prompt.user_text + "\n\n" + reminder)


def _complete_with_retry(gateway, prompt: RenderedPrompt, reminder: str, parse):
    """Parse the completion; on an unparseable response ask once more."""
    try:
        return parse(gateway.complete(prompt).response_text)
    except UnparseableResponse:
        retry = _with_reminder(prompt, reminder)
        return parse(gateway.complete(retry).response_text)


def breakdown_activity(catalog, config, context, gateway) -> list[str]:
    """Step texts for one activity, whitespace-normalized."""
    prompt = render_breakdown_prompt(catalog, config, context)

    def parse(text: str) -> list[str]:
        items = [_ws(s) for s in parse_step_list(text)]
        items = [s for s in items if s]
        if not items:
            raise UnparseableResponse("response contained no usable steps")
        return items

    return _complete_with_retry(gateway, prompt, _BREAKDOWN_REMINDER, parse)


def run_breakdown(
    model: ProcessModel,
    config: PromptConfiguration | None,
    gateway,
    *,
    catalog: PromptCatalog | None = None,
) -> tuple[list[Step], dict[str, ActivityStatus]]:
    """Phase 1 over every activity of the model, document order."""
    catalog = catalog or load_default_catalog()
    if config is not None:
        validate_configuration(catalog, config)
    activities = extract_activities(model)
    if not activities:
        raise NoActivities(f"process {model.process_id!r} has no named activities")
    steps: list[Step] = []
    statuses: dict[str, ActivityStatus] = {}
    for node in activities:
        context = summarize_context(model, node.node_id)
        try:
            texts = breakdown_activity(catalog, config, context, gateway)
        except ProcessLensError:
            statuses[node.node_id] = ActivityStatus.BREAKDOWN_FAILED
            continue
        for i, text in enumerate(texts, 1):
            steps.append(
                Step(make_step_id(model.process_id, node.node_id, i), node.node_id, i, text)
            )
        statuses[node.node_id] = ActivityStatus.OK
    return steps, statuses


def classify_activity_steps(
    catalog, config, process_name: str, steps: list[Step], gateway
) -> list[StepClassification]:
    """Phase 2 for one activity's step list, one prompt."""
    prompt = render_vaa_prompt(catalog, config, process_name, [s.text for s in steps])
    justifications_required = includes_justifications(config)

    def parse(text: str) -> list[tuple[str, str]]:
        pairs = parse_classifications(text, len(steps))
        if justifications_required and any(not j.strip() for _, j in pairs):
            raise UnparseableResponse("classification lines missing justifications")
        return pairs

    pairs = _complete_with_retry(gateway, prompt, _VAA_REMINDER, parse)
    return [
        StepClassification(step.step_id, ValueLabel(label), justification.strip())
        for step, (label, justification) in zip(steps, pairs)
    ]


def _group_by_activity(steps) -> dict[str, list[Step]]:
    grouped: dict[str, list[Step]] = {}
    for step in steps:
        grouped.setdefault(step.activity_id, []).append(step)
    return grouped


def run_vaa(
    steps,
    config: PromptConfiguration | None,
    gateway,
    *,
    process_name: str,
    catalog: PromptCatalog | None = None,
) -> tuple[list[StepClassification], set[str]]:
    """Phase 2 over steps grouped by activity.

    Returns the classifications plus the ids of activities whose
    classification failed unrecoverably.
    """
    steps = list(steps)
    if not steps:
        raise EmptyStepList("no steps to classify")
    catalog = catalog or load_default_catalog()
    if config is not None:
        validate_configuration(catalog, config)
    classifications: list[StepClassification] = []
    failed: set[str] = set()
    for activity_id, group in _group_by_activity(steps).items():
        try:
            classifications.extend(
                classify_activity_steps(catalog, config, process_name, group, gateway)
            )
        except ProcessLensError:
            failed.add(activity_id)
    return classifications, failed


def _config_payload(config: PromptConfiguration | None):
    if config is None:
        return None
    assignment = {slot: config.assignment[slot] for slot in SLOTS[config.phase]}
    return {"phase": config.phase.value, "assignment": assignment, "label": config.label}


def _config_from_payload(data) -> PromptConfiguration | None:
    if data is None:
        return None
    return PromptConfiguration(
        phase=Phase(data["phase"]),
        assignment=dict(data["assignment"]),
        label=data.get("label", ""),
    )


def config_label(config: PromptConfiguration | None) -> str:
    return ZERO_SHOT_LABEL if config is None else config.display_label()


def run_to_json(run: AnalysisRun) -> dict:
    """Deterministic export payload. Excludes created_at on purpose: the
    same analysis must export byte-identically across invocations."""
    return {
        "run_id": run.run_id,
        "process_id": run.process_id,
        "revision": run.revision,
        "parent_run": run.parent_run,
        "provider_label": run.provider_label,
        "breakdown_config": _config_payload(run.breakdown_config),
        "vaa_config": _config_payload(run.vaa_config),
        "statuses": {aid: status.value for aid, status in run.statuses.items()},
        "steps": [
            {
                "step_id": s.step_id,
                "activity_id": s.activity_id,
                "ordinal": s.ordinal,
                "text": s.text,
            }
            for s in run.steps
        ],
        "classifications": [
            {"step_id": c.step_id, "label": c.label.value, "justification": c.justification}
            for c in run.classifications
        ],
        "review_note": run.review_note,
    }


def run_from_json(data: dict, created_at: str = "") -> AnalysisRun:
    return AnalysisRun(
        run_id=data["run_id"],
        created_at=created_at or data.get("created_at", ""),
        process_id=data["process_id"],
        breakdown_config=_config_from_payload(data.get("breakdown_config")),
        vaa_config=_config_from_payload(data.get("vaa_config")),
        provider_label=data.get("provider_label", ""),
        statuses={aid: ActivityStatus(v) for aid, v in data["statuses"].items()},
        steps=tuple(
            Step(s["step_id"], s["activity_id"], s["ordinal"], s["text"])
            for s in data["steps"]
        ),
        classifications=tuple(
            StepClassification(c["step_id"], ValueLabel(c["label"]), c["justification"])
            for c in data["classifications"]
        ),
        revision=data.get("revision", 1),
        parent_run=data.get("parent_run"),
        review_note=data.get("review_note", ""),
    )


def run_to_csv(run: AnalysisRun) -> str:
    """(activity, ordinal, step text, label, justification) rows."""
    import csv
    import io

    labels = {c.step_id: c for c in run.classifications}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["activity_id", "ordinal", "step_text", "label", "justification"])
    for step in run.steps:
        c = labels.get(step.step_id)
        writer.writerow(
            [
                step.activity_id,
                step.ordinal,
                step.text,
                c.label.value if c else "",
                c.justification if c else "",
            ]
        )
    return buf.getvalue()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _assemble(
    process_id: str,
    breakdown_config,
    vaa_config,
    provider_label: str,
    statuses: dict[str, ActivityStatus],
    steps,
    classifications,
    *,
    revision: int = 1,
    parent_run: str | None = None,
    review_note: str = "",
) -> AnalysisRun:
    run = AnalysisRun(
        run_id="",
        created_at=_now(),
        process_id=process_id,
        breakdown_config=breakdown_config,
        vaa_config=vaa_config,
        provider_label=provider_label,
        statuses=dict(statuses),
        steps=tuple(steps),
        classifications=tuple(classifications),
        revision=revision,
        parent_run=parent_run,
        review_note=review_note,
    )
    # The id is a digest of the exported content, so identical analyses get
    # identical ids and exports stay reproducible byte for byte.
    payload = run_to_json(run)
    del payload["run_id"]
    digest = hashlib.sha256(
        json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()
    return replace(run, run_id=f"r-{digest[:16]}")


def run_full(
    model: ProcessModel,
    breakdown_config: PromptConfiguration | None,
    vaa_config: PromptConfiguration | None,
    gateway,
    *,
    store=None,
    catalog: PromptCatalog | None = None,
    provider_label: str | None = None,
) -> AnalysisRun:
    """Both phases plus persistence; per-activity failures stay isolated."""
    catalog = catalog or load_default_catalog()
    steps, statuses = run_breakdown(model, breakdown_config, gateway, catalog=catalog)
    classifications: list[StepClassification] = []
    if steps:
        classifications, failed = run_vaa(
            steps, vaa_config, gateway, process_name=model.name, catalog=catalog
        )
        for activity_id in failed:
            statuses[activity_id] = ActivityStatus.CLASSIFICATION_FAILED
    run = _assemble(
        model.process_id,
        breakdown_config,
        vaa_config,
        gateway.label if provider_label is None else provider_label,
        statuses,
        steps,
        classifications,
    )
    if store is not None:
        store.save_run(run)
    return run


def _child(
    run: AnalysisRun,
    *,
    statuses=None,
    steps=None,
    classifications=None,
    review_note: str = "",
) -> AnalysisRun:
    return _assemble(
        run.process_id,
        run.breakdown_config,
        run.vaa_config,
        run.provider_label,
        run.statuses if statuses is None else statuses,
        run.steps if steps is None else steps,
        run.classifications if classifications is None else classifications,
        revision=run.revision + 1,
        parent_run=run.run_id,
        review_note=review_note,
    )


def reanalyze_activity(
    run: AnalysisRun,
    model: ProcessModel,
    activity_id: str,
    gateway,
    *,
    catalog: PromptCatalog | None = None,
    store=None,
    note: str = "",
) -> AnalysisRun:
    """Re-run both phases for one activity; everything else is copied."""
    if activity_id not in run.statuses:
        raise UnknownActivity(f"run {run.run_id} does not cover activity {activity_id!r}")
    catalog = catalog or load_default_catalog()
    context = summarize_context(model, activity_id)

    new_steps: list[Step] = []
    new_classifications: list[StepClassification] = []
    status = ActivityStatus.OK
    try:
        texts = breakdown_activity(catalog, run.breakdown_config, context, gateway)
        new_steps = [
            Step(make_step_id(run.process_id, activity_id, i), activity_id, i, text)
            for i, text in enumerate(texts, 1)
        ]
    except ProcessLensError:
        status = ActivityStatus.BREAKDOWN_FAILED
    if new_steps:
        try:
            new_classifications = classify_activity_steps(
                catalog, run.vaa_config, model.name, new_steps, gateway
            )
        except ProcessLensError:
            status = ActivityStatus.CLASSIFICATION_FAILED

    statuses = dict(run.statuses)
    statuses[activity_id] = status
    # Rebuild in activity document order (statuses preserve it), so a
    # re-analysis never reorders the untouched activities' steps.
    by_activity = _group_by_activity(run.steps)
    by_activity[activity_id] = new_steps
    steps = [s for aid in statuses for s in by_activity.get(aid, [])]
    # Step ids repeat across revisions (same process/activity/ordinal), so
    # the re-analyzed activity must draw labels only from its fresh results.
    parent_cls = {c.step_id: c for c in run.classifications}
    new_cls = {c.step_id: c for c in new_classifications}
    classifications = []
    for s in steps:
        source = new_cls if s.activity_id == activity_id else parent_cls
        if s.step_id in source:
            classifications.append(source[s.step_id])

    child = _child(
        run,
        statuses=statuses,
        steps=steps,
        classifications=classifications,
        review_note=note,
    )
    if store is not None:
        store.save_run(child)
    return child


def edit_step(
    run: AnalysisRun, step_id: str, new_text: str, *, note: str = "", store=None
) -> AnalysisRun:
    """Child run with one step's text replaced; its label is kept."""
    new_text = _ws(new_text)
    if not new_text:
        raise EmptyStepList("edited step text must be non-empty")
    target = run.step(step_id)
    steps = tuple(
        replace(s, text=new_text) if s.step_id == target.step_id else s for s in run.steps
    )
    child = _child(run, steps=steps, review_note=note)
    if store is not None:
        store.save_run(child)
    return child


def override_label(
    run: AnalysisRun, step_id: str, label, *, note: str = "", store=None
) -> AnalysisRun:
    """Child run with one classification replaced by the reviewer's label."""
    label = ValueLabel(label)
    target = run.classification(step_id)
    justification = note.strip() or "reviewer override"
    classifications = tuple(
        StepClassification(c.step_id, label, justification)
        if c.step_id == target.step_id
        else c
        for c in run.classifications
    )
    child = _child(run, classifications=classifications, review_note=note)
    if store is not None:
        store.save_run(child)
    return child


def label_distribution(run: AnalysisRun) -> dict[ValueLabel, tuple[int, float]]:
    """Count and fraction per label over the run's classifications."""
    if not run.classifications:
        raise EmptyRun(f"run {run.run_id} has no classifications")
    total = len(run.classifications)
    out: dict[ValueLabel, tuple[int, float]] = {}
    for label in ValueLabel:
        count = sum(1 for c in run.classifications if c.label is label)
        out[label] = (count, count / total)
    return out
