import logging
import math

import numpy as np
import pytest

from rewardlab.errors import ValidationError
from rewardlab.sxs import (
    AGGREGATE_TASK,
    CandidatePool,
    DisagreementPair,
    DuplicateResponseError,
    SxSRecord,
    UnknownAssignmentError,
    build_annotation_plan,
    default_tasks,
    ingest_sxs,
    load_pairs,
    load_plan,
    load_sxs_log,
    report_to_json_bytes,
    select_disagreement_pairs,
    task_question,
    write_pairs,
    write_plan,
    write_sxs_log,
)
from tests.conftest import linear_probe_model, make_example


def logit(p):
    return math.log(p / (1 - p))


def make_pool(score_table):
    """score_table: prompt -> list of (score_a, score_b) per item.

    Embedding dim 2 carries the two models' logits; model A reads dim 0 and
    model B reads dim 1, so scores are exact by construction.
    """
    items = []
    for prompt, rows in score_table.items():
        for j, (sa, sb) in enumerate(rows):
            items.append(
                make_example(
                    len(items),
                    prompt,
                    [logit(sa), logit(sb)],
                    metadata={"image_ref": f"img://{prompt}/{j}", "prompt_text": f"text {prompt}"},
                )
            )
    return CandidatePool(items=items, source_tag="unit")


MODEL_A = linear_probe_model([1.0, 0.0])
MODEL_B = linear_probe_model([0.0, 1.0])


class TestSelectPairs:
    def test_identical_models_yield_nothing(self):
        pool = make_pool({"p0": [(0.9, 0.9), (0.1, 0.1)], "p1": [(0.4, 0.4), (0.6, 0.6)]})
        pairs = select_disagreement_pairs(pool, MODEL_A, MODEL_A, k=5)
        assert pairs == []

    def test_gap_formula(self):
        pool = make_pool({"p0": [(0.9, 0.2), (0.1, 0.8)]})
        pairs = select_disagreement_pairs(pool, MODEL_A, MODEL_B, k=1)
        assert len(pairs) == 1
        pair = pairs[0]
        assert pair.score_gap == pytest.approx(1.4, abs=1e-9)
        assert pair.item_a == "ex-0000"
        assert pair.item_b == "ex-0001"
        assert pair.item_a_ref == "img://p0/0"
        assert pair.prompt_text == "text p0"

    def test_exact_k_returned(self):
        table = {}
        rng = np.random.default_rng(0)
        for p in range(220):
            lo, hi = sorted(rng.uniform(0.05, 0.95, size=2))
            table[f"p{p:03d}"] = [(hi, lo), (lo, hi)]  # models always disagree
        pool = make_pool(table)
        pairs = select_disagreement_pairs(pool, MODEL_A, MODEL_B, k=194)
        assert len(pairs) == 194
        gaps = [p.score_gap for p in pairs]
        assert gaps == sorted(gaps, reverse=True)

    def test_shortfall_warns_and_returns_all(self, caplog):
        pool = make_pool({"p0": [(0.9, 0.2), (0.1, 0.8)]})
        with caplog.at_level(logging.WARNING):
            pairs = select_disagreement_pairs(pool, MODEL_A, MODEL_B, k=50)
        assert len(pairs) == 1
        assert any("eligible" in record.message for record in caplog.records)

    def test_item_order_invariance(self):
        table = {f"p{i}": [(0.8, 0.3), (0.2, 0.7), (0.5, 0.5)] for i in range(6)}
        pool = make_pool(table)
        shuffled = CandidatePool(items=list(reversed(pool.items)), source_tag="unit")
        a = select_disagreement_pairs(pool, MODEL_A, MODEL_B, k=6)
        b = select_disagreement_pairs(shuffled, MODEL_A, MODEL_B, k=6)
        assert a == b

    def test_score_diff_mode(self):
        # per-item disagreement: item 0 is A-favored, item 2 B-favored
        pool = make_pool({"p0": [(0.9, 0.1), (0.6, 0.55), (0.2, 0.95)]})
        pairs = select_disagreement_pairs(pool, MODEL_A, MODEL_B, k=1, mode="score-diff")
        assert pairs[0].item_a == "ex-0000"
        assert pairs[0].item_b == "ex-0002"
        expected_gap = (0.9 - 0.1) - (0.2 - 0.95)
        assert pairs[0].score_gap == pytest.approx(expected_gap, abs=1e-9)

    def test_small_group_rejected(self):
        pool = make_pool({"p0": [(0.9, 0.1)]})
        with pytest.raises(ValidationError):
            select_disagreement_pairs(pool, MODEL_A, MODEL_B, k=1)

    def test_bad_k_rejected(self):
        pool = make_pool({"p0": [(0.9, 0.1), (0.1, 0.9)]})
        with pytest.raises(ValidationError):
            select_disagreement_pairs(pool, MODEL_A, MODEL_B, k=0)


def make_pairs(n):
    return [
        DisagreementPair(
            pair_id=f"pair-{i:04d}",
            prompt_id=f"p{i:04d}",
            item_a=f"a{i}",
            item_b=f"b{i}",
            score_gap=1.0,
            item_a_ref=f"ref-a{i}",
            item_b_ref=f"ref-b{i}",
            prompt_text=f"prompt {i}",
        )
        for i in range(n)
    ]


class TestBuildPlan:
    def test_reference_protocol_cardinality(self):
        tasks = default_tasks([f"attr{i}" for i in range(8)])
        assert len(tasks) == 9
        plan = build_annotation_plan(make_pairs(194), tasks, raters_per_pair=3, seed=0)
        assert len(plan.assignments) == 194 * 9 * 3

    def test_deterministic_sides(self):
        pairs = make_pairs(20)
        a = build_annotation_plan(pairs, ["aggregate", "bright"], 2, seed=5)
        b = build_annotation_plan(pairs, ["aggregate", "bright"], 2, seed=5)
        assert [x.left_model for x in a.assignments] == [x.left_model for x in b.assignments]
        c = build_annotation_plan(pairs, ["aggregate", "bright"], 2, seed=6)
        assert [x.left_model for x in a.assignments] != [x.left_model for x in c.assignments]

    def test_side_balance(self):
        tasks = default_tasks([f"attr{i}" for i in range(8)])
        plan = build_annotation_plan(make_pairs(194), tasks, 3, seed=1)
        share = np.mean([a.left_model == "A" for a in plan.assignments])
        assert 0.45 <= share <= 0.55

    def test_slot_order_groups_tasks_and_shuffles_pairs(self):
        pairs = make_pairs(10)
        plan = build_annotation_plan(pairs, ["aggregate", "bright"], 2, seed=3)
        for slot in range(2):
            rows = plan.assignments_for_slot(slot)
            assert [a.task for a in rows] == ["aggregate"] * 10 + ["bright"] * 10
            first_block = [a.pair_id for a in rows[:10]]
            assert sorted(first_block) == [p.pair_id for p in pairs]
        slot0 = [a.pair_id for a in plan.assignments_for_slot(0)]
        slot1 = [a.pair_id for a in plan.assignments_for_slot(1)]
        assert slot0 != slot1  # each slot gets its own shuffle

    def test_empty_tasks_rejected(self):
        with pytest.raises(ValidationError):
            build_annotation_plan(make_pairs(2), [], 1, seed=0)

    def test_question_phrasing(self):
        assert task_question(AGGREGATE_TASK) == "Which image do you prefer?"
        assert task_question("visually_compelling") == "Which image is more visually compelling?"


def record(pair_id, task, rater, choice, left_model="A", ms=1000):
    return SxSRecord(
        pair_id=pair_id, task=task, rater_id=rater, choice=choice,
        left_model=left_model, response_ms=ms, timestamp="2026-01-01T00:00:00+00:00",
    )


class TestIngest:
    def plan_for(self, n_pairs, tasks=(AGGREGATE_TASK,), raters=1):
        return build_annotation_plan(make_pairs(n_pairs), list(tasks), raters, seed=0)

    def test_reference_share_fixture(self):
        # 1000 aggregate votes: 256 for model A, 249 for model B, 495 unsure
        plan = self.plan_for(1000)
        sides = {a.pair_id: a.left_model for a in plan.assignments}
        records = []
        for i, pair in enumerate(make_pairs(1000)):
            left = sides[pair.pair_id]
            if i < 256:
                choice = "left" if left == "A" else "right"
            elif i < 256 + 249:
                choice = "left" if left == "B" else "right"
            else:
                choice = "unsure"
            records.append(record(pair.pair_id, AGGREGATE_TASK, "r0", choice, left))
        report = ingest_sxs(records, plan)
        stats = report.tasks[AGGREGATE_TASK]
        assert stats.pct_model_a == pytest.approx(25.6, abs=0.01)
        assert stats.pct_model_b == pytest.approx(24.9, abs=0.01)
        assert stats.pct_unsure == pytest.approx(49.5, abs=0.01)
        assert stats.pct_model_a + stats.pct_model_b + stats.pct_unsure == pytest.approx(100.0, abs=0.1)

    def test_reference_timing_fixture(self):
        plan = self.plan_for(10)
        sides = {a.pair_id: a.left_model for a in plan.assignments}
        records = [
            record(p.pair_id, AGGREGATE_TASK, "r0", "unsure", sides[p.pair_id], ms=52700)
            for p in make_pairs(10)
        ]
        report = ingest_sxs(records, plan)
        assert report.tasks[AGGREGATE_TASK].mean_response_seconds == 52.7

    def test_single_unsure(self):
        plan = self.plan_for(1)
        left = plan.assignments[0].left_model
        report = ingest_sxs([record("pair-0000", AGGREGATE_TASK, "r0", "unsure", left)], plan)
        stats = report.tasks[AGGREGATE_TASK]
        assert (stats.pct_model_a, stats.pct_model_b, stats.pct_unsure) == (0.0, 0.0, 100.0)

    def test_side_mapping_round_trip(self):
        plan = self.plan_for(2)
        report = ingest_sxs(
            [
                record("pair-0000", AGGREGATE_TASK, "r0", "left", left_model="B"),
                record("pair-0001", AGGREGATE_TASK, "r0", "right", left_model="B"),
            ],
            plan,
        )
        stats = report.tasks[AGGREGATE_TASK]
        assert stats.pct_model_b == 50.0
        assert stats.pct_model_a == 50.0

    def test_duplicate_rejected(self):
        plan = self.plan_for(1)
        row = record("pair-0000", AGGREGATE_TASK, "r0", "unsure")
        with pytest.raises(DuplicateResponseError):
            ingest_sxs([row, row], plan)

    def test_unknown_pair_and_task(self):
        plan = self.plan_for(1)
        with pytest.raises(UnknownAssignmentError):
            ingest_sxs([record("pair-9999", AGGREGATE_TASK, "r0", "unsure")], plan)
        with pytest.raises(UnknownAssignmentError):
            ingest_sxs([record("pair-0000", "sideways", "r0", "unsure")], plan)

    def test_record_order_invariance(self):
        plan = self.plan_for(30, tasks=(AGGREGATE_TASK, "bright"), raters=2)
        rng = np.random.default_rng(0)
        records = []
        for a in plan.assignments:
            choice = ["left", "right", "unsure"][int(rng.integers(0, 3))]
            records.append(
                record(a.pair_id, a.task, f"rater{a.slot}", choice, a.left_model,
                       ms=int(rng.integers(500, 60000)))
            )
        base = report_to_json_bytes(ingest_sxs(records, plan))
        shuffled = list(records)
        rng.shuffle(shuffled)
        assert report_to_json_bytes(ingest_sxs(shuffled, plan)) == base

    def test_percentages_sum_to_100(self):
        plan = self.plan_for(50, tasks=(AGGREGATE_TASK, "bright", "funny"), raters=3)
        rng = np.random.default_rng(7)
        records = [
            record(a.pair_id, a.task, f"rater{a.slot}",
                   ["left", "right", "unsure"][int(rng.integers(0, 3))], a.left_model)
            for a in plan.assignments
        ]
        report = ingest_sxs(records, plan)
        for stats in report.tasks.values():
            assert stats.pct_model_a + stats.pct_model_b + stats.pct_unsure == pytest.approx(100.0, abs=0.1)


class TestFileFormats:
    def test_pairs_round_trip(self, tmp_path):
        pairs = make_pairs(5)
        path = tmp_path / "pairs.jsonl"
        write_pairs(pairs, path)
        assert load_pairs(path) == pairs

    def test_plan_round_trip(self, tmp_path):
        plan = build_annotation_plan(make_pairs(4), ["aggregate", "bright"], 2, seed=9)
        path = tmp_path / "plan.jsonl"
        write_plan(plan, path)
        loaded = load_plan(path)
        assert loaded == plan

    def test_log_round_trip(self, tmp_path):
        rows = [
            record("pair-0000", AGGREGATE_TASK, "r1", "left"),
            record("pair-0001", AGGREGATE_TASK, "r1", "unsure", "B", ms=4000),
        ]
        path = tmp_path / "log.jsonl"
        write_sxs_log(rows, path)
        assert load_sxs_log(path) == rows

    def test_record_validation(self):
        with pytest.raises(ValidationError):
            record("p", AGGREGATE_TASK, "r", "maybe").validate()
        with pytest.raises(ValidationError):
            record("p", AGGREGATE_TASK, "r", "left", ms=-5).validate()
