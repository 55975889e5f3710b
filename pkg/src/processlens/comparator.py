"""Alignment of generated step lists against expert reference steps.

Every generated step receives exactly one of four categories. Exact matches
are decided by a deterministic normalization pre-pass so they are objective
and cost no judge calls; the rest go to an LLM judge in one prompt per
activity. Reference consumption is one-to-one for ExactMatch and
FunctionalEquivalence; GranularityDifference may reuse reference steps
(many-to-one and one-to-many both occur at mixed detail levels).

The judge's output is validated, never trusted: claimed exact matches that
fail normalized equality are demoted, equivalence claims against consumed
references are rejected, unknown ids are dropped. Anything unusable falls
back to NoMatch and the step is flagged in the report rather than aborting
a corpus evaluation.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

from .errors import CountMismatch
from .prompts import RenderedPrompt, _substitute


class AlignmentCategory(str, Enum):
    EXACT = "ExactMatch"
    FUNCTIONAL = "FunctionalEquivalence"
    GRANULARITY = "GranularityDifference"
    NO_MATCH = "NoMatch"


CATEGORY_ORDER = (
    AlignmentCategory.EXACT,
    AlignmentCategory.FUNCTIONAL,
    AlignmentCategory.GRANULARITY,
    AlignmentCategory.NO_MATCH,
)

_CATEGORY_LOOKUP = {
    "exactmatch": AlignmentCategory.EXACT,
    "exact": AlignmentCategory.EXACT,
    "functionalequivalence": AlignmentCategory.FUNCTIONAL,
    "granularitydifference": AlignmentCategory.GRANULARITY,
    "nomatch": AlignmentCategory.NO_MATCH,
}

JUDGE_PARSE_FAILURE = "judge-parse-failure"


@dataclass(frozen=True)
class GoldStep:
    gold_id: str
    text: str


@dataclass(frozen=True)
class StepAlignment:
    generated_step_id: str
    generated_text: str
    category: AlignmentCategory
    matched_ground_truth_ids: tuple[str, ...]
    rationale: str
    flagged: bool = False


@dataclass(frozen=True)
class AlignmentReport:
    counts: dict[AlignmentCategory, int]
    percentages: dict[AlignmentCategory, float]
    total_generated: int
    total_ground_truth: int
    flagged_step_ids: tuple[str, ...] = ()

    @property
    def equivalent_share(self) -> float:
        """Exactly-or-functionally-equivalent percentage."""
        return (
            self.percentages[AlignmentCategory.EXACT]
            + self.percentages[AlignmentCategory.FUNCTIONAL]
        )


_TERMINAL_PUNCT = ".!?;:,"


def normalize(text: str) -> str:
    collapsed = " ".join(text.split()).lower()
    return collapsed.rstrip(_TERMINAL_PUNCT).rstrip()


def exact_prepass(generated, gold) -> tuple[dict[str, StepAlignment], set[str]]:
    """Greedy in-order pairing of normalized-equal texts.

    ``generated`` is a sequence of (step_id, text); ``gold`` of GoldStep.
    Returns alignments keyed by step_id plus the consumed gold ids. Each
    gold step matches at most once, so a duplicated generated text falls
    through to the judge.
    """
    normalized_gold = [(g.gold_id, normalize(g.text)) for g in gold]
    matches: dict[str, StepAlignment] = {}
    consumed: set[str] = set()
    for step_id, text in generated:
        wanted = normalize(text)
        for gold_id, gold_norm in normalized_gold:
            if gold_id not in consumed and gold_norm == wanted:
                matches[step_id] = StepAlignment(
                    generated_step_id=step_id,
                    generated_text=text,
                    category=AlignmentCategory.EXACT,
                    matched_ground_truth_ids=(gold_id,),
                    rationale="",
                )
                consumed.add(gold_id)
                break
    return matches, consumed


_judge_template_cache: dict[str, str] = {}


def load_judge_template(directory: str | Path | None = None) -> str:
    """The judge prompt text; packaged asset unless a directory overrides it."""
    key = str(directory) if directory is not None else ""
    if key not in _judge_template_cache:
        if directory is None:
            text = (resources.files("processlens") / "catalog" / "judge.txt").read_text(
                encoding="utf-8"
            )
        else:
            text = (Path(directory) / "judge.txt").read_text(encoding="utf-8")
        _judge_template_cache[key] = text
    return _judge_template_cache[key]


def render_judge_prompt(
    activity_name: str,
    pending,
    gold,
    *,
    consumed_gold_ids=frozenset(),
    template: str | None = None,
) -> tuple[RenderedPrompt, dict[str, str], dict[str, str]]:
    """Build the judging prompt plus the G-id and T-id lookup tables."""
    if template is None:
        template = load_judge_template()
    gen_ids: dict[str, str] = {}
    gen_lines = []
    for i, (step_id, text) in enumerate(pending, 1):
        gen_ids[f"G{i}"] = step_id
        gen_lines.append(f"G{i}. {text}")
    gold_ids: dict[str, str] = {}
    gold_lines = []
    taken = []
    for i, g in enumerate(gold, 1):
        gold_ids[f"T{i}"] = g.gold_id
        gold_lines.append(f"T{i}. {g.text}")
        if g.gold_id in consumed_gold_ids:
            taken.append(f"T{i}")
    user_text = _substitute(
        template,
        {
            "activity_name": activity_name,
            "generated_block": "\n".join(gen_lines),
            "reference_block": "\n".join(gold_lines),
            "already_matched": ", ".join(taken) if taken else "-",
        },
    )
    prompt = RenderedPrompt(
        phase="judge", system_text="", user_text=user_text, config_label="judge"
    )
    return prompt, gen_ids, gold_ids


_ALIGN_FENCE_RE = re.compile(r"```alignment\s*\n(.*?)```", re.S)
_ALIGN_LINE_RE = re.compile(
    r"^\s*(G\d+)\s*\|\s*([A-Za-z -]+?)\s*\|\s*([^|]*?)\s*\|\s*(.*\S)?\s*$"
)


def _no_match(step_id: str, text: str, rationale: str, *, flagged: bool) -> StepAlignment:
    return StepAlignment(step_id, text, AlignmentCategory.NO_MATCH, (), rationale, flagged)


def _validated(
    step_id: str,
    text: str,
    category: AlignmentCategory,
    gold_refs: list[str],
    rationale: str,
    pending_norm: str,
    gold_norms: dict[str, str],
    consumed: set[str],
) -> StepAlignment:
    """Apply the category-specific id rules; salvage what the contract allows."""
    flagged = False
    if category is AlignmentCategory.NO_MATCH:
        # NoMatch carries no ids; citing some is judge noise, not an error.
        return _no_match(step_id, text, rationale, flagged=bool(gold_refs))

    if not gold_refs:
        return _no_match(step_id, text, JUDGE_PARSE_FAILURE, flagged=True)

    if category is AlignmentCategory.EXACT:
        ref = gold_refs[0]
        if gold_norms.get(ref) == pending_norm and ref not in consumed:
            consumed.add(ref)
            return StepAlignment(
                step_id, text, category, (ref,), rationale, flagged=len(gold_refs) > 1
            )
        # Claimed exact but texts differ (or the reference is taken):
        # keep the weaker equivalence claim instead of trusting it.
        category = AlignmentCategory.FUNCTIONAL
        flagged = True

    if category is AlignmentCategory.FUNCTIONAL:
        ref = gold_refs[0]
        if ref in consumed:
            return _no_match(
                step_id, text, f"equivalence-conflict: {ref} already matched", flagged=True
            )
        consumed.add(ref)
        return StepAlignment(
            step_id, text, category, (ref,), rationale, flagged=flagged or len(gold_refs) > 1
        )

    # GranularityDifference: any number of ids, reuse allowed.
    return StepAlignment(step_id, text, category, tuple(gold_refs), rationale, flagged=flagged)


def judge_alignments(
    pending,
    gold,
    gateway,
    *,
    activity_name: str,
    consumed_gold_ids=frozenset(),
    template: str | None = None,
) -> dict[str, StepAlignment]:
    """Categorize steps the pre-pass left over, one gateway call.

    ``pending`` is a sequence of (step_id, text). Provider errors propagate;
    a response the parser cannot use degrades to flagged NoMatch per step.
    """
    pending = list(pending)
    if not pending:
        return {}
    gold = list(gold)
    prompt, gen_ids, gold_ids = render_judge_prompt(
        activity_name, pending, gold, consumed_gold_ids=consumed_gold_ids, template=template
    )
    exchange = gateway.complete(prompt)

    texts = dict(pending)
    gold_norms = {g.gold_id: normalize(g.text) for g in gold}
    consumed = set(consumed_gold_ids)
    out: dict[str, StepAlignment] = {}

    fence = _ALIGN_FENCE_RE.search(exchange.response_text)
    body = fence.group(1) if fence else exchange.response_text
    for line in body.splitlines():
        m = _ALIGN_LINE_RE.match(line)
        if not m:
            continue
        gen_ref, category_text, ids_text, rationale = m.groups()
        step_id = gen_ids.get(gen_ref)
        if step_id is None or step_id in out:
            continue
        text = texts[step_id]
        category = _CATEGORY_LOOKUP.get(re.sub(r"[^a-z]", "", category_text.lower()))
        if category is None:
            out[step_id] = _no_match(step_id, text, JUDGE_PARSE_FAILURE, flagged=True)
            continue
        cited = [t for t in re.split(r"[,\s]+", ids_text.strip()) if t and t != "-"]
        gold_refs = []
        dropped = False
        for t in cited:
            if t in gold_ids:
                gold_refs.append(gold_ids[t])
            else:
                dropped = True
        alignment = _validated(
            step_id,
            text,
            category,
            gold_refs,
            rationale or "",
            normalize(text),
            gold_norms,
            consumed,
        )
        if dropped and not alignment.flagged:
            alignment = StepAlignment(
                alignment.generated_step_id,
                alignment.generated_text,
                alignment.category,
                alignment.matched_ground_truth_ids,
                alignment.rationale,
                flagged=True,
            )
        out[step_id] = alignment

    for step_id, text in pending:
        if step_id not in out:
            out[step_id] = _no_match(step_id, text, JUDGE_PARSE_FAILURE, flagged=True)
    return out


def align_activity(
    generated,
    gold,
    gateway,
    *,
    activity_name: str,
    template: str | None = None,
) -> list[StepAlignment]:
    """Pre-pass plus judge, returned in generated order."""
    generated = list(generated)
    gold = list(gold)
    matches, consumed = exact_prepass(generated, gold)
    pending = [(sid, text) for sid, text in generated if sid not in matches]
    judged = judge_alignments(
        pending,
        gold,
        gateway,
        activity_name=activity_name,
        consumed_gold_ids=consumed,
        template=template,
    )
    return [matches.get(sid) or judged[sid] for sid, _ in generated]


def aggregate_alignment(alignments, total_generated: int, total_gold: int) -> AlignmentReport:
    alignments = list(alignments)
    if len(alignments) != total_generated:
        raise CountMismatch(
            f"{len(alignments)} alignments for {total_generated} generated steps"
        )
    if total_generated == 0:
        raise CountMismatch("cannot aggregate an empty alignment set")
    counts = {category: 0 for category in CATEGORY_ORDER}
    flagged = []
    for a in alignments:
        counts[a.category] += 1
        if a.flagged:
            flagged.append(a.generated_step_id)
    percentages = {c: 100.0 * n / total_generated for c, n in counts.items()}
    return AlignmentReport(
        counts=counts,
        percentages=percentages,
        total_generated=total_generated,
        total_ground_truth=total_gold,
        flagged_step_ids=tuple(flagged),
    )
