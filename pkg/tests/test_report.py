import csv
import io
import json
import math

import pytest

from processlens.bpmn import parse_bpmn
from processlens.comparator import AlignmentCategory, StepAlignment, aggregate_alignment
from processlens.errors import ProcessLensError
from processlens.metrics import classification_report, confusion
from processlens.pipeline import run_full
from processlens.report import (
    UnknownFormat,
    alignment_steps_csv,
    alignment_summary_from_report,
    alignment_summary_row,
    confusion_payload,
    distribution_payload,
    render_alignment_summary,
    render_classification_summary,
    render_confusion,
    save_alignment_bars,
    save_confusion_heatmap,
    save_distribution_bar,
    save_score_series,
)

from helpers import mock_gateway

C = AlignmentCategory

PUBLISHED_BPE_COUNTS = {C.EXACT: 208, C.FUNCTIONAL: 389, C.GRANULARITY: 101, C.NO_MATCH: 282}


def hand_report():
    return classification_report(confusion(["VA", "BVA", "BVA", "NVA"], ["VA", "VA", "BVA", "NVA"]))


class TestAlignmentSummary:
    def test_published_row_reproduced(self):
        # Counts in the ratio 20.8 : 38.9 : 10.1 : 28.2 against a
        # denominator of 1000 generated steps. The row does not sum to
        # 100, so the renderer must not re-normalize.
        row = alignment_summary_row("BPE", PUBLISHED_BPE_COUNTS, 1000)
        text = render_alignment_summary([row], fmt="table")
        lines = text.splitlines()
        assert lines[0].split("  ")[0] == "Configuration"
        for column in ("Exact Match", "Functional Equivalence", "Granularity Difference", "No Match"):
            assert column in lines[0]
        assert lines[1].split() == ["BPE", "20.8", "38.9", "10.1", "28.2"]

    def test_csv_round_trip(self):
        row = alignment_summary_row("BPE", PUBLISHED_BPE_COUNTS, 1000)
        text = render_alignment_summary([row], fmt="csv")
        parsed = list(csv.reader(io.StringIO(text)))
        assert parsed[0][1] == "Exact Match"
        assert parsed[1] == ["BPE", "20.8", "38.9", "10.1", "28.2"]

    def test_json_keeps_raw_numbers(self):
        row = alignment_summary_row("zero-shot", {C.EXACT: 1, C.NO_MATCH: 2}, 3)
        payload = json.loads(render_alignment_summary([row], fmt="json"))
        assert payload[0]["Configuration"] == "zero-shot"
        assert math.isclose(payload[0]["Exact Match"], 100 / 3, abs_tol=1e-9)
        assert payload[0]["Functional Equivalence"] == 0.0

    def test_row_from_aggregated_report(self):
        alignments = [
            StepAlignment("s1", "a", C.EXACT, ("g1",), ""),
            StepAlignment("s2", "b", C.NO_MATCH, (), "x"),
        ]
        report = aggregate_alignment(alignments, 2, 2)
        row = alignment_summary_from_report("zero-shot", report)
        assert row.percentages[C.EXACT] == 50.0

    def test_zero_denominator_rejected(self):
        with pytest.raises(ProcessLensError):
            alignment_summary_row("x", {}, 0)

    def test_unknown_format(self):
        row = alignment_summary_row("x", {C.EXACT: 1}, 1)
        with pytest.raises(UnknownFormat):
            render_alignment_summary([row], fmt="yaml")


class TestClassificationSummary:
    def test_two_decimal_columns(self):
        text = render_classification_summary([("zero-shot", hand_report())], fmt="table")
        lines = text.splitlines()
        assert "F1 (Overall)" in lines[0] and "F1 (NVA)" in lines[0]
        assert lines[1].split() == ["zero-shot", "0.78", "1.00"]

    def test_json_values(self):
        payload = json.loads(render_classification_summary([("b", hand_report())], fmt="json"))
        assert math.isclose(payload[0]["F1 (Overall)"], 7 / 9, abs_tol=1e-9)
        assert payload[0]["F1 (NVA)"] == 1.0


class TestConfusionRendering:
    def matrix(self):
        return confusion(
            ["VA", "BVA", "BVA", "NVA", "NVA", "NVA", "VA"],
            ["VA", "VA", "BVA", "NVA", "NVA", "BVA", "VA"],
        )

    def test_table_counts_and_percentages(self):
        text = render_confusion(self.matrix(), fmt="table")
        lines = text.splitlines()
        assert lines[0].split("  ")[0] == "Gold"
        first = lines[1].split()
        assert first[0] == "VA"
        assert first[1:4] == ["2", "1", "0"]
        assert first[4:] == ["66.7", "33.3", "0.0"]

    def test_json_payload_with_zero_row(self):
        matrix = confusion(["VA", "BVA"], ["VA", "BVA"])
        payload = confusion_payload(matrix)
        assert payload["counts"] == [[1, 0, 0], [0, 1, 0], [0, 0, 0]]
        assert payload["zero_rows"] == ["NVA"]
        assert payload["row_percentages"][0] == [100.0, 0.0, 0.0]
        json.dumps(payload)

    def test_csv_shape(self):
        parsed = list(csv.reader(io.StringIO(render_confusion(self.matrix(), fmt="csv"))))
        assert parsed[0] == ["Gold", "VA (n)", "BVA (n)", "NVA (n)", "VA (%)", "BVA (%)", "NVA (%)"]
        assert len(parsed) == 4


class TestStepExport:
    def test_alignment_steps_csv(self):
        triples = [
            ("p1", "t1", StepAlignment("p1:t1:1", "Approve claim", C.EXACT, ("t1:g1",), "")),
            ("p1", "t2", StepAlignment("p1:t2:1", "Review", C.NO_MATCH, (), "no pendant", flagged=True)),
            ("p1", "t2", StepAlignment("p1:t2:2", "Span", C.GRANULARITY, ("t2:g1", "t2:g2"), "covers both")),
        ]
        parsed = list(csv.reader(io.StringIO(alignment_steps_csv(triples))))
        assert parsed[0][:3] == ["process_id", "activity_id", "step_id"]
        assert parsed[1][4] == "ExactMatch"
        assert parsed[2][7] == "yes"
        assert parsed[3][5] == "t2:g1;t2:g2"
        assert len(parsed) == 4


ONE_TASK = b"""
<definitions xmlns="http://www.omg.org/spec/BPMN/20100524/MODEL">
  <process id="p1" name="Claims">
    <task id="t1" name="Check claim then wait for approval"/>
  </process>
</definitions>
"""


def small_run():
    return run_full(parse_bpmn(ONE_TASK), None, None, mock_gateway())


class TestDistributionAndFigures:
    def test_distribution_payload(self):
        payload = distribution_payload(small_run())
        assert payload["total"] == 2
        assert payload["labels"]["BVA"]["count"] == 1
        assert payload["labels"]["NVA"]["fraction"] == 0.5
        assert sum(v["count"] for v in payload["labels"].values()) == payload["total"]

    def test_figures_written(self, tmp_path):
        run = small_run()
        matrix = confusion(["VA", "BVA", "NVA"], ["VA", "BVA", "NVA"])
        row = alignment_summary_row("zero-shot", PUBLISHED_BPE_COUNTS, 1000)
        paths = [
            save_confusion_heatmap(matrix, tmp_path / "confusion.png"),
            save_alignment_bars([row], tmp_path / "alignment.png"),
            save_distribution_bar(run, tmp_path / "distribution.png"),
            save_score_series([1.0, 2.0, 2.0, 3.0], tmp_path / "series.png"),
        ]
        for path in paths:
            data = path.read_bytes()
            assert data[:8] == b"\x89PNG\r\n\x1a\n"
            assert len(data) > 1000
