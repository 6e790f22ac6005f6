"""Rejection-sampling side-by-side harness.

Two reward models score a candidate pool; per prompt group the pair of items
each model ranks highest (when they differ) becomes a disagreement pair.
Pairs fan out into an annotation plan - one assignment per (pair, task,
rater slot) with a seeded left/right coin - and collected judgments roll up
into per-task preference shares and mean response times.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rewardlab.dataset import Example
from rewardlab.errors import RewardLabError, ValidationError
from rewardlab.reward import RewardModel, score
from rewardlab.util import expect_header, read_jsonl, write_jsonl

logger = logging.getLogger(__name__)

PAIRS_FORMAT = "rewardlab-pairs"
PLAN_FORMAT = "rewardlab-plan"
LOG_FORMAT = "rewardlab-sxs-log"
FORMAT_VERSION = 1

AGGREGATE_TASK = "aggregate"
CHOICES = ("left", "right", "unsure")
MODEL_A = "A"
MODEL_B = "B"


class UnknownAssignmentError(RewardLabError):
    """Response references a pair/task/rater combination not in the plan."""


class DuplicateResponseError(RewardLabError):
    """A (pair, task, rater) judgment was already stored."""


@dataclass
class CandidatePool:
    items: list[Example]
    source_tag: str = ""

    def validate(self) -> None:
        if not self.items:
            raise ValidationError("candidate pool is empty")


@dataclass
class DisagreementPair:
    pair_id: str
    prompt_id: str
    item_a: str  # preferred by model A
    item_b: str  # preferred by model B
    score_gap: float
    item_a_ref: str = ""
    item_b_ref: str = ""
    prompt_text: str = ""


@dataclass
class Assignment:
    assignment_id: str
    pair_id: str
    task: str
    slot: int
    left_model: str  # MODEL_A or MODEL_B
    order: int


@dataclass
class AnnotationPlan:
    tasks: list[str]
    raters_per_pair: int
    seed: int
    pairs: list[DisagreementPair]
    assignments: list[Assignment]

    def pairs_by_id(self) -> dict[str, DisagreementPair]:
        return {p.pair_id: p for p in self.pairs}

    def assignments_for_slot(self, slot: int) -> list[Assignment]:
        rows = [a for a in self.assignments if a.slot == slot]
        rows.sort(key=lambda a: a.order)
        return rows


@dataclass
class SxSRecord:
    pair_id: str
    task: str
    rater_id: str
    choice: str
    left_model: str
    response_ms: int
    timestamp: str = ""

    def validate(self) -> None:
        if self.choice not in CHOICES:
            raise ValidationError(f"choice must be one of {CHOICES}, got {self.choice!r}")
        if self.left_model not in (MODEL_A, MODEL_B):
            raise ValidationError(f"left_model must be A or B, got {self.left_model!r}")
        if self.response_ms < 0:
            raise ValidationError("response_ms must be nonnegative")


@dataclass
class TaskStats:
    n_records: int
    pct_model_a: float
    pct_model_b: float
    pct_unsure: float
    mean_response_seconds: float


@dataclass
class SxSReport:
    tasks: dict[str, TaskStats] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Pair selection


def _example_ref(ex: Example) -> str:
    return ex.metadata.get("image_ref", ex.example_id)


def select_disagreement_pairs(
    pool: CandidatePool,
    model_a: RewardModel,
    model_b: RewardModel,
    k: int,
    mode: str = "dual-argmax",
) -> list[DisagreementPair]:
    """Top-k maximal-disagreement pairs, one at most per prompt group.

    dual-argmax (default): item_a/item_b are the argmax picks of each model
    within the group; the gap is (s_a(a*) - s_a(b*)) + (s_b(b*) - s_b(a*)).
    score-diff: item_a/item_b maximize s_a - s_b and s_b - s_a per item.
    Groups are ordered by example_id first, so the result does not depend on
    pool item order; final ties break on prompt_id.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    if mode not in ("dual-argmax", "score-diff"):
        raise ValidationError(f"unknown selection mode {mode!r}")
    pool.validate()
    groups: dict[str, list[Example]] = {}
    for ex in pool.items:
        groups.setdefault(ex.prompt_id, []).append(ex)
    small = [pid for pid, items in groups.items() if len(items) < 2]
    if small:
        raise ValidationError(
            f"{len(small)} prompt group(s) have fewer than 2 items, first {small[0]!r}"
        )

    pairs = []
    for prompt_id in sorted(groups):
        items = sorted(groups[prompt_id], key=lambda ex: ex.example_id)
        x = np.stack([ex.model_input() for ex in items])
        s_a = np.asarray(score(model_a, x))
        s_b = np.asarray(score(model_b, x))
        if mode == "dual-argmax":
            ia = int(np.argmax(s_a))
            ib = int(np.argmax(s_b))
            gap = float((s_a[ia] - s_a[ib]) + (s_b[ib] - s_b[ia]))
        else:
            diff = s_a - s_b
            ia = int(np.argmax(diff))
            ib = int(np.argmax(-diff))
            gap = float(diff[ia] - diff[ib])
        if ia == ib:
            continue
        pairs.append(
            DisagreementPair(
                pair_id=f"sxs-{prompt_id}",
                prompt_id=prompt_id,
                item_a=items[ia].example_id,
                item_b=items[ib].example_id,
                score_gap=gap,
                item_a_ref=_example_ref(items[ia]),
                item_b_ref=_example_ref(items[ib]),
                prompt_text=items[0].metadata.get("prompt_text", prompt_id),
            )
        )
    pairs.sort(key=lambda p: (-p.score_gap, p.prompt_id))
    if len(pairs) < k:
        logger.warning(
            "only %d eligible disagreement pairs, %d requested", len(pairs), k
        )
    return pairs[:k]


# ---------------------------------------------------------------------------
# Annotation plan


def build_annotation_plan(
    pairs: list[DisagreementPair],
    tasks: list[str],
    raters_per_pair: int = 3,
    seed: int = 0,
) -> AnnotationPlan:
    """One assignment per (pair, task, rater slot).

    The shown-left model is a seeded coin per assignment; each slot works
    through the tasks in order with the pair order reshuffled per task, so a
    rater session sees one question type at a time in randomized pair order.
    """
    if not tasks:
        raise ValidationError("task list is empty")
    if len(set(tasks)) != len(tasks):
        raise ValidationError("task names must be unique")
    if raters_per_pair < 1:
        raise ValidationError("raters_per_pair must be >= 1")
    pair_ids = [p.pair_id for p in pairs]
    if len(set(pair_ids)) != len(pair_ids):
        raise ValidationError("pair ids must be unique")
    rng = np.random.default_rng(seed)
    assignments = []
    for slot in range(raters_per_pair):
        position = 0
        for task in tasks:
            order = rng.permutation(len(pairs))
            for idx in order:
                left = MODEL_A if rng.random() < 0.5 else MODEL_B
                assignments.append(
                    Assignment(
                        assignment_id=f"asg-{len(assignments):06d}",
                        pair_id=pairs[int(idx)].pair_id,
                        task=task,
                        slot=slot,
                        left_model=left,
                        order=position,
                    )
                )
                position += 1
    return AnnotationPlan(
        tasks=list(tasks),
        raters_per_pair=raters_per_pair,
        seed=seed,
        pairs=list(pairs),
        assignments=assignments,
    )


def default_tasks(attribute_names: list[str]) -> list[str]:
    return [AGGREGATE_TASK, *attribute_names]


def task_question(task: str) -> str:
    if task == AGGREGATE_TASK:
        return "Which image do you prefer?"
    return f"Which image is more {task.replace('_', ' ')}?"


# ---------------------------------------------------------------------------
# Ingestion and reporting


def ingest_sxs(records: list[SxSRecord], plan: AnnotationPlan) -> SxSReport:
    """Aggregate judgments into per-task preference shares.

    Choices map back to models through each record's stored side assignment;
    'unsure' is its own bucket.  Duplicate (pair, task, rater) submissions
    and references outside the plan are rejected.
    """
    known_pairs = {p.pair_id for p in plan.pairs}
    known_tasks = set(plan.tasks)
    seen = set()
    counts: dict[str, dict[str, float]] = {}
    for record in records:
        record.validate()
        if record.pair_id not in known_pairs:
            raise UnknownAssignmentError(f"unknown pair_id {record.pair_id!r}")
        if record.task not in known_tasks:
            raise UnknownAssignmentError(f"unknown task {record.task!r}")
        key = (record.pair_id, record.task, record.rater_id)
        if key in seen:
            raise DuplicateResponseError(
                f"duplicate response for pair {record.pair_id!r}, task "
                f"{record.task!r}, rater {record.rater_id!r}"
            )
        seen.add(key)
        bucket = counts.setdefault(
            record.task, {"a": 0, "b": 0, "unsure": 0, "ms": 0.0}
        )
        if record.choice == "unsure":
            bucket["unsure"] += 1
        else:
            chosen = record.left_model if record.choice == "left" else (
                MODEL_B if record.left_model == MODEL_A else MODEL_A
            )
            bucket["a" if chosen == MODEL_A else "b"] += 1
        bucket["ms"] += record.response_ms

    report = SxSReport()
    for task in plan.tasks:
        if task not in counts:
            continue
        bucket = counts[task]
        total = bucket["a"] + bucket["b"] + bucket["unsure"]
        report.tasks[task] = TaskStats(
            n_records=int(total),
            pct_model_a=100.0 * bucket["a"] / total,
            pct_model_b=100.0 * bucket["b"] / total,
            pct_unsure=100.0 * bucket["unsure"] / total,
            mean_response_seconds=bucket["ms"] / total / 1000.0,
        )
    return report


def report_to_json_bytes(report: SxSReport) -> bytes:
    """Canonical report serialization; online and offline aggregation of the
    same log must produce identical bytes."""
    doc = {
        "format": "rewardlab-sxs-report",
        "version": FORMAT_VERSION,
        "tasks": {
            task: {
                "n_records": stats.n_records,
                "pct_model_a": stats.pct_model_a,
                "pct_model_b": stats.pct_model_b,
                "pct_unsure": stats.pct_unsure,
                "mean_response_seconds": stats.mean_response_seconds,
            }
            for task, stats in report.tasks.items()
        },
    }
    return (json.dumps(doc, indent=1) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# File formats


def write_pairs(pairs: list[DisagreementPair], path: str | Path) -> None:
    header = {"format": PAIRS_FORMAT, "version": FORMAT_VERSION}
    rows = (
        {
            "pair_id": p.pair_id,
            "prompt_id": p.prompt_id,
            "item_a": p.item_a,
            "item_b": p.item_b,
            "score_gap": float(p.score_gap),
            "item_a_ref": p.item_a_ref,
            "item_b_ref": p.item_b_ref,
            "prompt_text": p.prompt_text,
        }
        for p in pairs
    )
    write_jsonl(path, header, rows)


def load_pairs(path: str | Path) -> list[DisagreementPair]:
    path = Path(path)
    records = read_jsonl(path)
    lineno, header = next(records)
    expect_header(path, header, lineno, PAIRS_FORMAT)
    return [
        DisagreementPair(
            pair_id=obj["pair_id"],
            prompt_id=obj["prompt_id"],
            item_a=obj["item_a"],
            item_b=obj["item_b"],
            score_gap=float(obj["score_gap"]),
            item_a_ref=obj.get("item_a_ref", ""),
            item_b_ref=obj.get("item_b_ref", ""),
            prompt_text=obj.get("prompt_text", ""),
        )
        for _, obj in records
    ]


def write_plan(plan: AnnotationPlan, path: str | Path) -> None:
    header = {
        "format": PLAN_FORMAT,
        "version": FORMAT_VERSION,
        "tasks": plan.tasks,
        "raters_per_pair": plan.raters_per_pair,
        "seed": plan.seed,
    }

    def rows():
        for p in plan.pairs:
            yield {
                "kind": "pair",
                "pair_id": p.pair_id,
                "prompt_id": p.prompt_id,
                "item_a": p.item_a,
                "item_b": p.item_b,
                "score_gap": float(p.score_gap),
                "item_a_ref": p.item_a_ref,
                "item_b_ref": p.item_b_ref,
                "prompt_text": p.prompt_text,
            }
        for a in plan.assignments:
            yield {
                "kind": "assignment",
                "assignment_id": a.assignment_id,
                "pair_id": a.pair_id,
                "task": a.task,
                "slot": a.slot,
                "left_model": a.left_model,
                "order": a.order,
            }

    write_jsonl(path, header, rows())


def load_plan(path: str | Path) -> AnnotationPlan:
    path = Path(path)
    records = read_jsonl(path)
    lineno, header = next(records)
    header = expect_header(path, header, lineno, PLAN_FORMAT)
    pairs, assignments = [], []
    for _, obj in records:
        if obj.get("kind") == "pair":
            pairs.append(
                DisagreementPair(
                    pair_id=obj["pair_id"],
                    prompt_id=obj["prompt_id"],
                    item_a=obj["item_a"],
                    item_b=obj["item_b"],
                    score_gap=float(obj["score_gap"]),
                    item_a_ref=obj.get("item_a_ref", ""),
                    item_b_ref=obj.get("item_b_ref", ""),
                    prompt_text=obj.get("prompt_text", ""),
                )
            )
        else:
            assignments.append(
                Assignment(
                    assignment_id=obj["assignment_id"],
                    pair_id=obj["pair_id"],
                    task=obj["task"],
                    slot=int(obj["slot"]),
                    left_model=obj["left_model"],
                    order=int(obj["order"]),
                )
            )
    return AnnotationPlan(
        tasks=list(header.get("tasks", [])),
        raters_per_pair=int(header.get("raters_per_pair", 1)),
        seed=int(header.get("seed", 0)),
        pairs=pairs,
        assignments=assignments,
    )


def record_to_json(record: SxSRecord) -> dict:
    return {
        "pair_id": record.pair_id,
        "task": record.task,
        "rater_id": record.rater_id,
        "choice": record.choice,
        "left_model": record.left_model,
        "response_ms": int(record.response_ms),
        "timestamp": record.timestamp,
    }


def record_from_json(obj: dict) -> SxSRecord:
    record = SxSRecord(
        pair_id=str(obj["pair_id"]),
        task=str(obj["task"]),
        rater_id=str(obj["rater_id"]),
        choice=str(obj["choice"]),
        left_model=str(obj["left_model"]),
        response_ms=int(obj["response_ms"]),
        timestamp=str(obj.get("timestamp", "")),
    )
    record.validate()
    return record


def write_sxs_log(records: list[SxSRecord], path: str | Path) -> None:
    header = {"format": LOG_FORMAT, "version": FORMAT_VERSION}
    write_jsonl(path, header, (record_to_json(r) for r in records))


def load_sxs_log(path: str | Path) -> list[SxSRecord]:
    path = Path(path)
    records = read_jsonl(path)
    lineno, header = next(records)
    expect_header(path, header, lineno, LOG_FORMAT)
    return [record_from_json(obj) for _, obj in records]
