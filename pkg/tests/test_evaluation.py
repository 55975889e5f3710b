import math

import pytest

from processlens.bpmn import parse_bpmn
from processlens.comparator import AlignmentCategory, StepAlignment
from processlens.datastore import GoldActivity, GroundTruthProcess, load_corpus
from processlens.errors import DatasetError
from processlens.evaluation import (
    pooled_breakdown_report,
    pooled_vaa_report,
    score_run_against_gold,
)
from processlens.pipeline import ValueLabel, run_full
from processlens.prompts import Phase

from helpers import FaultyGateway, mock_gateway, scripted_gateway

MINI = "corpus/mini"

C = AlignmentCategory


def single_task_process(process_id, activity_name, gold_steps, gold_labels):
    xml = f"""
    <definitions xmlns="http://www.omg.org/spec/BPMN/20100524/MODEL">
      <process id="{process_id}" name="{process_id}">
        <task id="a1" name="{activity_name}"/>
      </process>
    </definitions>
    """.encode()
    model = parse_bpmn(xml)
    gold = GoldActivity(
        "a1",
        activity_name,
        tuple(gold_steps),
        tuple(ValueLabel(l) for l in gold_labels),
    )
    return model, GroundTruthProcess(process_id, "test", "<inline>", model, (gold,))


class TestPooledBreakdown:
    def test_mini_corpus_zero_shot_counts(self):
        # Hand-tallied from the mock rules over the three fixture processes:
        # 36 generated steps against 32 gold, landing 22/1/8/5.
        report = pooled_breakdown_report(load_corpus(MINI), None, mock_gateway())
        assert report.total_generated == 36
        assert report.total_ground_truth == 32
        assert report.counts[C.EXACT] == 22
        assert report.counts[C.FUNCTIONAL] == 1
        assert report.counts[C.GRANULARITY] == 8
        assert report.counts[C.NO_MATCH] == 5
        assert math.isclose(report.percentages[C.EXACT], 2200 / 36, abs_tol=1e-6)
        assert math.isclose(report.percentages[C.NO_MATCH], 500 / 36, abs_tol=1e-6)
        assert math.isclose(sum(report.percentages.values()), 100.0, abs_tol=0.01)

    def test_collect_alignments_hook(self):
        triples = []
        report = pooled_breakdown_report(
            load_corpus(MINI), None, mock_gateway(), collect_alignments=triples
        )
        assert len(triples) == report.total_generated
        assert {p for p, _, _ in triples} == {
            "equipment-rental",
            "invoice-handling",
            "patient-intake",
        }
        assert all(isinstance(a, StepAlignment) for _, _, a in triples)
        for category, count in report.counts.items():
            assert sum(1 for _, _, a in triples if a.category is category) == count

    def test_failed_activity_keeps_gold_in_denominator(self):
        # Fail breakdown for rental t2 only: its 3 generated steps (1 Exact,
        # 1 Gran, 1 FuncEq) vanish, but its 3 gold steps still count.
        rental = [p for p in load_corpus(MINI) if p.process_id == "equipment-rental"]
        gateway = FaultyGateway(
            mock_gateway(),
            lambda p: p.phase is Phase.BREAKDOWN and "Select suitable equipment" in p.user_text,
        )
        report = pooled_breakdown_report(rental, None, gateway)
        assert report.total_generated == 9
        assert report.total_ground_truth == 13
        assert report.counts[C.EXACT] == 8
        assert report.counts[C.FUNCTIONAL] == 0
        assert report.counts[C.GRANULARITY] == 0
        assert report.counts[C.NO_MATCH] == 1

    def test_empty_corpus_rejected(self):
        with pytest.raises(DatasetError):
            pooled_breakdown_report([], None, mock_gateway())


class TestPooledVaa:
    def test_mini_corpus_confusion(self):
        # Mock classification of the 32 gold steps disagrees with gold on
        # exactly three: rental t3 g1 (VA->BVA), rental t4 g1 (BVA->VA),
        # invoice u4 g1 (NVA->BVA).
        report, matrix, note = pooled_vaa_report(load_corpus(MINI), None, mock_gateway())
        assert matrix.counts == ((11, 1, 0), (1, 14, 0), (0, 1, 4))
        assert note == ""
        assert math.isclose(report.per_class["VA"].f1, 11 / 12, abs_tol=1e-9)
        assert math.isclose(report.per_class["BVA"].f1, 28 / 31, abs_tol=1e-9)
        assert math.isclose(report.per_class["NVA"].f1, 8 / 9, abs_tol=1e-9)
        assert math.isclose(report.macro_f1, (11 / 12 + 28 / 31 + 8 / 9) / 3, abs_tol=1e-9)

    def test_failed_activity_skipped_and_noted(self):
        gateway = FaultyGateway(
            mock_gateway(),
            lambda p: p.phase is Phase.VAA and "select suitable equipment" in p.user_text.lower(),
        )
        _, matrix, note = pooled_vaa_report(load_corpus(MINI), None, gateway)
        assert note == "skipped: equipment-rental:t2"
        assert matrix.counts == ((9, 1, 0), (1, 13, 0), (0, 1, 4))

    def test_empty_corpus_rejected(self):
        with pytest.raises(DatasetError):
            pooled_vaa_report([], None, mock_gateway())


class TestScoreRun:
    def test_rental_run_frozen_score(self):
        corpus = load_corpus(MINI)
        rental = next(p for p in corpus if p.process_id == "equipment-rental")
        gateway = mock_gateway()
        run = run_full(rental.model, None, None, gateway)
        score = score_run_against_gold(run, rental, gateway)
        # 12 generated steps, one NoMatch ("Review"), no ambiguous pairs.
        assert score.scored_steps == 11
        assert score.unmatched_steps == 1
        assert score.ambiguous_steps == 0
        # Single label disagreement: "Check equipment availability" comes
        # back BVA against gold VA.
        assert score.matrix.counts == ((4, 1, 0), (0, 4, 0), (0, 0, 2))
        assert score.alignment.counts[C.EXACT] == 9
        assert score.alignment.total_ground_truth == 13

    def test_whole_corpus_run_totals(self):
        gateway = mock_gateway()
        totals = [[0] * 3 for _ in range(3)]
        scored = unmatched = 0
        for process in load_corpus(MINI):
            run = run_full(process.model, None, None, gateway)
            score = score_run_against_gold(run, process, gateway)
            scored += score.scored_steps
            unmatched += score.unmatched_steps
            for i, row in enumerate(score.matrix.counts):
                for j, v in enumerate(row):
                    totals[i][j] += v
        assert scored == 31
        assert unmatched == 5
        assert [tuple(r) for r in totals] == [(10, 1, 0), (0, 14, 0), (0, 0, 6)]

    def test_granularity_spanning_mixed_labels_is_ambiguous(self):
        model, gold = single_task_process(
            "orders",
            "Handle order",
            [
                "Receive input for Handle order",
                "Perform Handle order",
                "Part one",
                "Part two",
            ],
            ["VA", "VA", "VA", "BVA"],
        )
        run = run_full(model, None, None, mock_gateway())
        judge, _ = scripted_gateway(
            "```alignment\nG1 | GranularityDifference | T3,T4 | spans both parts\n```"
        )
        score = score_run_against_gold(run, gold, judge)
        assert score.ambiguous_steps == 1
        assert score.scored_steps == 2
        assert score.matrix.counts == ((2, 0, 0), (0, 0, 0), (0, 0, 0))

    def test_granularity_same_label_group_is_scored(self):
        model, gold = single_task_process(
            "orders",
            "Handle order",
            [
                "Receive input for Handle order",
                "Perform Handle order",
                "Part one",
                "Part two",
            ],
            ["VA", "VA", "BVA", "BVA"],
        )
        run = run_full(model, None, None, mock_gateway())
        judge, _ = scripted_gateway(
            "```alignment\nG1 | GranularityDifference | T3,T4 | spans both parts\n```"
        )
        score = score_run_against_gold(run, gold, judge)
        assert score.ambiguous_steps == 0
        assert score.scored_steps == 3
        # "Record outcome of Handle order" classifies BVA, matching the
        # shared label of the spanned gold pair.
        assert score.matrix.counts == ((2, 0, 0), (0, 1, 0), (0, 0, 0))

    def test_process_mismatch_rejected(self):
        corpus = load_corpus(MINI)
        rental = next(p for p in corpus if p.process_id == "equipment-rental")
        invoice = next(p for p in corpus if p.process_id == "invoice-handling")
        gateway = mock_gateway()
        run = run_full(rental.model, None, None, gateway)
        with pytest.raises(DatasetError):
            score_run_against_gold(run, invoice, gateway)

    def test_nothing_scorable_rejected(self):
        model, gold = single_task_process(
            "misc", "Quux flibbet", ["Totally unrelated wording"], ["VA"]
        )
        gateway = mock_gateway()
        run = run_full(model, None, None, gateway)
        with pytest.raises(DatasetError):
            score_run_against_gold(run, gold, gateway)
