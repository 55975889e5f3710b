"""Greedy coordinate search over prompt configurations.

One slot is optimized at a time with all others held at the incumbent;
after the first sweep, revisit passes rerun the sweep because an earlier
choice can become suboptimal once later slots move. Ties keep the
incumbent, every evaluated assignment is memoized and never re-evaluated,
and the search stops early once a full pass changes nothing.

eval_fn failures are not fatal: the config scores -inf and is recorded in
the trace, so one broken candidate cannot sink a whole search.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

from .comparator import AlignmentCategory, AlignmentReport
from .errors import EmptySpace
from .evaluation import pooled_breakdown_report, pooled_vaa_report
from .metrics import ClassificationReport
from .prompts import (
    Phase,
    PromptCatalog,
    PromptConfiguration,
    baseline_config,
)


@dataclass(frozen=True)
class SearchSpace:
    phase: Phase
    slots: dict[str, list[str]]
    baseline: PromptConfiguration

    @staticmethod
    def from_catalog(
        catalog: PromptCatalog, phase: Phase, baseline: PromptConfiguration | None = None
    ) -> "SearchSpace":
        slots = {slot: list(catalog.variant_names(phase, slot)) for slot in catalog.slots(phase)}
        return SearchSpace(
            phase=phase,
            slots=slots,
            baseline=baseline or baseline_config(catalog, phase),
        )

    def size(self) -> int:
        n = 1
        for variants in self.slots.values():
            n *= len(variants)
        return n


@dataclass(frozen=True)
class Objective:
    """Scalar fitness; higher is better.

    kind "breakdown_score" scores an AlignmentReport as a weighted sum of
    the four category percentages (Exact, FuncEq, Gran, NoMatch order);
    "macro_f1" and "nva_f1" score a ClassificationReport.
    """

    kind: str
    weights: tuple[float, float, float, float] = (1.0, 1.0, 0.0, -1.0)

    @staticmethod
    def breakdown_score(
        w_exact: float = 1.0,
        w_func: float = 1.0,
        w_gran: float = 0.0,
        w_nomatch: float = -1.0,
    ) -> "Objective":
        return Objective("breakdown_score", (w_exact, w_func, w_gran, w_nomatch))

    @staticmethod
    def macro_f1() -> "Objective":
        return Objective("macro_f1")

    @staticmethod
    def nva_f1() -> "Objective":
        return Objective("nva_f1")

    def score_alignment(self, report: AlignmentReport) -> float:
        if self.kind != "breakdown_score":
            raise ValueError(f"objective {self.kind!r} does not score alignment reports")
        p = report.percentages
        order = (
            AlignmentCategory.EXACT,
            AlignmentCategory.FUNCTIONAL,
            AlignmentCategory.GRANULARITY,
            AlignmentCategory.NO_MATCH,
        )
        return sum(w * p[c] for w, c in zip(self.weights, order))

    def score_classification(self, report: ClassificationReport) -> float:
        if self.kind == "macro_f1":
            return report.macro_f1
        if self.kind == "nva_f1":
            return report.nva_f1
        raise ValueError(f"objective {self.kind!r} does not score classification reports")


@dataclass
class TraceEntry:
    iteration: int
    slot: str
    assignment: dict[str, str]
    score: float
    accepted: bool
    cache_hit: bool
    note: str = ""


@dataclass
class SearchTrace:
    entries: list[TraceEntry] = field(default_factory=list)
    best_score_series: list[float] = field(default_factory=list)
    passes_run: int = 0

    def fresh_evaluations(self) -> int:
        return sum(1 for e in self.entries if not e.cache_hit)


def _key(assignment: dict[str, str], slots) -> tuple[str, ...]:
    return tuple(assignment[s] for s in slots)


def greedy_coordinate_search(
    space: SearchSpace, eval_fn, passes: int = 2
) -> tuple[PromptConfiguration, SearchTrace]:
    """Coordinate ascent in catalog slot order.

    ``eval_fn(config)`` returns a score, or (score, note). Exceptions score
    -inf. Returns the best configuration found and the full trace.
    """
    if passes < 1:
        raise ValueError("passes must be >= 1")
    if not space.slots or any(not v for v in space.slots.values()):
        raise EmptySpace(f"search space for {space.phase.value} has an empty slot")
    for slot, variants in space.slots.items():
        if space.baseline.assignment.get(slot) not in variants:
            raise EmptySpace(f"baseline is outside the space at slot {slot!r}")

    trace = SearchTrace()
    memo: dict[tuple[str, ...], tuple[float, str]] = {}
    best_seen = -math.inf

    def evaluate(assignment: dict[str, str], slot: str) -> tuple[float, str, bool]:
        nonlocal best_seen
        key = _key(assignment, space.slots)
        cached = key in memo
        if cached:
            score, note = memo[key]
        else:
            config = PromptConfiguration(space.phase, dict(assignment))
            try:
                result = eval_fn(config)
            except Exception as exc:  # count the failure, keep searching
                result = (-math.inf, f"evaluation failed: {exc}")
            if isinstance(result, tuple):
                score, note = result
            else:
                score, note = result, ""
            memo[key] = (score, note)
        best_seen = max(best_seen, score)
        trace.entries.append(
            TraceEntry(
                iteration=len(trace.entries),
                slot=slot,
                assignment=dict(assignment),
                score=score,
                accepted=False,
                cache_hit=cached,
                note=note,
            )
        )
        trace.best_score_series.append(best_seen)
        return score, note, cached

    current = dict(space.baseline.assignment)
    current_score, _, _ = evaluate(current, "")
    trace.entries[-1].accepted = True

    for _ in range(passes):
        trace.passes_run += 1
        changed = False
        for slot, variants in space.slots.items():
            best_variant = current[slot]
            best_score = current_score
            best_entry = None
            for variant in variants:
                if variant == current[slot]:
                    continue
                candidate = dict(current)
                candidate[slot] = variant
                score, _, _ = evaluate(candidate, slot)
                # Strictly greater: ties keep the incumbent.
                if score > best_score:
                    best_score = score
                    best_variant = variant
                    best_entry = trace.entries[-1]
            if best_variant != current[slot]:
                current[slot] = best_variant
                current_score = best_score
                best_entry.accepted = True
                changed = True
        if not changed:
            break

    best = PromptConfiguration(space.phase, current)
    return best, trace


def trace_to_json(trace: SearchTrace) -> dict:
    return {
        "passes_run": trace.passes_run,
        "fresh_evaluations": trace.fresh_evaluations(),
        "best_score_series": trace.best_score_series,
        "entries": [
            {
                "iteration": e.iteration,
                "slot": e.slot,
                "assignment": e.assignment,
                "score": e.score,
                "accepted": e.accepted,
                "cache_hit": e.cache_hit,
                "note": e.note,
            }
            for e in trace.entries
        ],
    }


def trace_to_csv(trace: SearchTrace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iteration", "slot", "assignment", "score", "accepted", "cache_hit", "note"])
    for e in trace.entries:
        writer.writerow(
            [
                e.iteration,
                e.slot,
                json.dumps(e.assignment, sort_keys=True),
                e.score,
                e.accepted,
                e.cache_hit,
                e.note,
            ]
        )
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Fitness evaluation over a development set
# ---------------------------------------------------------------------------


def evaluate_breakdown_config(
    config,
    dev,
    gateway,
    *,
    catalog: PromptCatalog | None = None,
    objective: Objective | None = None,
) -> float:
    objective = objective or Objective.breakdown_score()
    report = pooled_breakdown_report(dev, config, gateway, catalog=catalog)
    return objective.score_alignment(report)


def evaluate_vaa_config(
    config,
    dev,
    gateway,
    *,
    catalog: PromptCatalog | None = None,
    objective: Objective | None = None,
) -> tuple[float, str]:
    objective = objective or Objective.macro_f1()
    report, _, note = pooled_vaa_report(dev, config, gateway, catalog=catalog)
    score = objective.score_classification(report)
    if objective.kind == "nva_f1" and report.per_class["NVA"].support == 0:
        note = (note + "; " if note else "") + "no NVA gold labels, score 0 by convention"
    return score, note


def make_eval_fn(phase: Phase, dev, gateway, *, catalog=None, objective=None):
    """eval_fn closure for greedy_coordinate_search over a dev set."""
    if phase is Phase.BREAKDOWN:
        return lambda config: evaluate_breakdown_config(
            config, dev, gateway, catalog=catalog, objective=objective
        )
    return lambda config: evaluate_vaa_config(
        config, dev, gateway, catalog=catalog, objective=objective
    )
