"""Classification metrics and inter-annotator agreement.

The confusion matrix is always 3x3 over the fixed label order VA, BVA, NVA
(rows are gold, columns are predictions). Per-class precision, recall, and
F1 treat 0/0 as 0 so absent classes never poison a macro average.

Krippendorff's alpha uses the nominal-distance coincidence-matrix
formulation. Missing ratings are allowed; items with fewer than two ratings
carry no pairable information and are excluded entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import EmptyMatrix, LengthMismatch, NoPairableItems, UnknownLabel

LABEL_ORDER: tuple[str, str, str] = ("VA", "BVA", "NVA")
_LABEL_INDEX = {label: i for i, label in enumerate(LABEL_ORDER)}


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[gold][predicted] over LABEL_ORDER."""

    counts: tuple[tuple[int, int, int], ...]

    @property
    def labels(self) -> tuple[str, str, str]:
        return LABEL_ORDER

    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def row(self, label: str) -> tuple[int, int, int]:
        return self.counts[_LABEL_INDEX[label]]


@dataclass(frozen=True)
class RowPercentages:
    """Row-normalized view of a confusion matrix, values in percent.

    Nonzero rows sum to 100 (within float error); all-zero rows stay
    all-zero and their labels are flagged in ``zero_rows``.
    """

    values: tuple[tuple[float, float, float], ...]
    zero_rows: tuple[str, ...]


@dataclass(frozen=True)
class ClassLine:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class ClassificationReport:
    per_class: dict[str, ClassLine]
    macro_f1: float

    @property
    def nva_f1(self) -> float:
        return self.per_class["NVA"].f1


def _check_labels(labels) -> None:
    for value in labels:
        if value not in _LABEL_INDEX:
            raise UnknownLabel(f"label {value!r} is not one of {LABEL_ORDER}")


def confusion(predicted, gold) -> ConfusionMatrix:
    """Count (gold, predicted) pairs into the fixed 3x3 grid."""
    predicted = list(predicted)
    gold = list(gold)
    if len(predicted) != len(gold):
        raise LengthMismatch(f"{len(predicted)} predictions vs {len(gold)} gold labels")
    if not predicted:
        raise EmptyMatrix("no labeled steps to count")
    _check_labels(predicted)
    _check_labels(gold)
    grid = [[0, 0, 0], [0, 0, 0], [0, 0, 0]]
    for p, g in zip(predicted, gold):
        grid[_LABEL_INDEX[g]][_LABEL_INDEX[p]] += 1
    return ConfusionMatrix(tuple(tuple(row) for row in grid))


def row_normalize(matrix: ConfusionMatrix) -> RowPercentages:
    values = []
    zero_rows = []
    for label, row in zip(LABEL_ORDER, matrix.counts):
        total = sum(row)
        if total == 0:
            values.append((0.0, 0.0, 0.0))
            zero_rows.append(label)
        else:
            values.append(tuple(100.0 * c / total for c in row))
    return RowPercentages(tuple(values), tuple(zero_rows))


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def classification_report(matrix: ConfusionMatrix) -> ClassificationReport:
    per_class: dict[str, ClassLine] = {}
    f1s = []
    for i, label in enumerate(LABEL_ORDER):
        tp = matrix.counts[i][i]
        fp = sum(matrix.counts[r][i] for r in range(3)) - tp
        fn = sum(matrix.counts[i]) - tp
        precision, recall, f1 = _prf(tp, fp, fn)
        per_class[label] = ClassLine(precision, recall, f1, support=sum(matrix.counts[i]))
        f1s.append(f1)
    return ClassificationReport(per_class=per_class, macro_f1=sum(f1s) / 3.0)


@dataclass(frozen=True)
class AnnotationMatrix:
    """Items x annotators grid of optional nominal labels (None = missing)."""

    rows: tuple[tuple[object, ...], ...]
    annotators: tuple[str, ...] = ()

    @staticmethod
    def from_rows(rows, annotators=()) -> "AnnotationMatrix":
        return AnnotationMatrix(
            rows=tuple(tuple(row) for row in rows),
            annotators=tuple(annotators),
        )


def annotation_matrix_from_json(data) -> AnnotationMatrix:
    """Accepts a bare list of rows or {"annotators": [...], "rows": [...]}."""
    if isinstance(data, dict):
        return AnnotationMatrix.from_rows(data["rows"], data.get("annotators", ()))
    return AnnotationMatrix.from_rows(data)


def krippendorff_alpha_nominal(matrix) -> float:
    """Krippendorff's alpha with the nominal difference function.

    ``matrix`` is an AnnotationMatrix or any items-by-annotators nested
    sequence with None for missing ratings. Perfect agreement returns
    exactly 1.0; so does zero expected disagreement (a single label in the
    whole matrix), where the ratio is undefined but nothing disagrees.
    """
    rows = matrix.rows if isinstance(matrix, AnnotationMatrix) else [tuple(r) for r in matrix]
    units = []
    for row in rows:
        values = [v for v in row if v is not None]
        if len(values) >= 2:
            units.append(values)
    if not units:
        raise NoPairableItems("no item carries two or more ratings")

    labels = sorted({v for unit in units for v in unit}, key=str)
    index = {label: i for i, label in enumerate(labels)}
    k = len(labels)
    coincidence = [[0.0] * k for _ in range(k)]
    for unit in units:
        m = len(unit)
        weight = 1.0 / (m - 1)
        for i, vi in enumerate(unit):
            for j, vj in enumerate(unit):
                if i != j:
                    coincidence[index[vi]][index[vj]] += weight

    n_c = [sum(coincidence[c]) for c in range(k)]
    n = sum(n_c)
    observed_off = sum(
        coincidence[c][d] for c in range(k) for d in range(k) if c != d
    )
    if observed_off == 0.0:
        return 1.0
    expected_off = sum(n_c[c] * n_c[d] for c in range(k) for d in range(k) if c != d)
    if expected_off == 0.0:
        return 1.0
    d_o = observed_off / n
    d_e = expected_off / (n * (n - 1))
    return 1.0 - d_o / d_e
