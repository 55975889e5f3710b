"""Exception taxonomy shared across the package.

Every error raised by the library derives from ProcessLensError so callers
can catch one base class at API boundaries (CLI exit code 1, HTTP error
envelope) while tests assert on the precise subclass.
"""

from __future__ import annotations


class ProcessLensError(Exception):
    """Base class for all library errors."""


# --- BPMN model ---

class XmlSyntaxError(ProcessLensError):
    """Input bytes are not well-formed XML."""


class NoProcessFound(ProcessLensError):
    """Well-formed XML without a single BPMN process element."""


class StrictValidationError(ProcessLensError):
    """Strict-mode parse: a lenient-mode warning promoted to an error."""


class UnknownActivity(ProcessLensError):
    """Activity id not present in the process model."""


class UnknownStep(ProcessLensError):
    """Step id not present in the run being edited."""


# --- Prompt catalog / rendering ---

class CatalogError(ProcessLensError):
    """Base for catalog load/validation failures."""


class MissingSlot(CatalogError):
    """Catalog file lacks a required slot for its phase."""


class UnknownSlot(CatalogError):
    """Slot name that does not belong to the phase."""


class DuplicateVariant(CatalogError):
    """Two variants under one slot share a name."""


class UnknownPlaceholder(CatalogError):
    """Variant text uses a placeholder outside the documented set."""


class CatalogMismatch(ProcessLensError):
    """Prompt configuration references a slot/variant the catalog lacks."""


class EmptyStepList(ProcessLensError):
    """A classification prompt or run was requested for zero steps."""


# --- LLM gateway ---

class ProviderUnavailable(ProcessLensError):
    """Provider unreachable or still failing after retries."""


class AuthError(ProcessLensError):
    """Provider rejected credentials; never retried."""


class ContextOverflow(ProcessLensError):
    """Estimated prompt tokens exceed the configured context window."""


class ReplayMiss(ProviderUnavailable):
    """Replay-mode cache lookup failed; network is forbidden in replay."""


class UnparseableResponse(ProcessLensError):
    """Model output did not contain the demanded structured block."""


class MissingSteps(UnparseableResponse):
    """Classification response does not cover every step ordinal."""

    def __init__(self, missing: list[int]):
        super().__init__(f"response missing ordinals: {missing}")
        self.missing = missing


class UnknownLabel(UnparseableResponse):
    """Classification response used a label outside VA/BVA/NVA."""


# --- Pipeline ---

class NoActivities(ProcessLensError):
    """Process model contains no named activities to analyze."""


class BreakdownFailed(ProcessLensError):
    """Breakdown for one activity failed after the retry."""


class EmptyRun(ProcessLensError):
    """Run holds no classified steps (e.g. distribution over nothing)."""


# --- Comparator ---

class CountMismatch(ProcessLensError):
    """Alignment aggregation totals disagree with the per-step records."""


# --- Metrics ---

class LengthMismatch(ProcessLensError):
    """Paired label sequences differ in length."""


class EmptyMatrix(ProcessLensError):
    """Confusion matrix for empty input where counts are required."""


class NoPairableItems(ProcessLensError):
    """Agreement matrix has no item with two or more ratings."""


# --- Optimizer ---

class EmptySpace(ProcessLensError):
    """Search space has no slots or a slot with no variants."""


class DatasetError(ProcessLensError):
    """Evaluation dataset empty or missing gold annotations."""


# --- Datastore ---

class IndexMissing(ProcessLensError):
    """Corpus directory lacks an index file."""


class AnnotationMismatch(ProcessLensError):
    """Gold annotation disagrees with the parsed BPMN model."""


class ManifestIdUnknown(ProcessLensError):
    """Split manifest references a process id the corpus lacks."""


class StoreError(ProcessLensError):
    """Run store I/O failure."""


class RunNotFound(ProcessLensError):
    """Run id not present (or not complete) in the store."""
