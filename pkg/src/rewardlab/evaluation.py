"""ROC-AUC, annotation-cost accounting, and learning-curve sweeps.

The sweep trains one model per (kind, attribute set, train size, seed) cell
on a nested subsample of the train split - smaller N is a prefix of larger N
for the same seed, so curves are comparable - and evaluates ROC-AUC on the
full test split, attaching the annotation cost of the cell's labels.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rewardlab.dataset import Dataset, FeedbackVector
from rewardlab.errors import ValidationError
from rewardlab.mlp import MlpConfig
from rewardlab.reward import KIND_CBM, KIND_COARSE, score, train_cbm, train_coarse
from rewardlab.util import atomic_write_text, derive_seed, dump_json_line

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ("model_name", "n_train", "cost", "auc", "seed")


def roc_auc(scores, labels) -> float:
    """Mann-Whitney ROC-AUC with the midrank tie convention.

    Equals the mean over all (positive, negative) pairs of
    [s_p > s_n] + 0.5 [s_p = s_n], computed in O(n log n) via rank sums.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.ndim != 1 or s.shape != y.shape:
        raise ValidationError("scores and labels must be aligned vectors")
    if not np.all(np.isfinite(s)):
        raise ValidationError("scores must be finite")
    if not np.all((y == 0) | (y == 1)):
        raise ValidationError("labels must be 0/1")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("both classes must be present")

    order = np.argsort(s, kind="mergesort")
    sorted_scores = s[order]
    n = s.shape[0]
    # midranks per tie group (1-based)
    boundary = np.empty(n, dtype=bool)
    boundary[0] = True
    boundary[1:] = sorted_scores[1:] != sorted_scores[:-1]
    starts = np.flatnonzero(boundary)
    ends = np.append(starts[1:], n)
    group_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(n)
    ranks[order] = group_rank[np.cumsum(boundary) - 1]

    rank_sum = float(ranks[y == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


# ---------------------------------------------------------------------------
# Cost accounting


@dataclass
class CostModel:
    coarse_cost: float = 1.0
    attribute_costs: dict[str, float] = field(default_factory=dict)
    include_coarse_for_cbm: bool = True
    default_attribute_cost: float = 1.0

    def validate(self) -> None:
        if self.coarse_cost <= 0 or self.default_attribute_cost <= 0:
            raise ValidationError("costs must be positive")
        for name, value in self.attribute_costs.items():
            if value <= 0:
                raise ValidationError(f"cost for attribute {name!r} must be positive")

    def attribute_cost(self, name: str) -> float:
        return self.attribute_costs.get(name, self.default_attribute_cost)


def annotation_cost(
    cost_model: CostModel,
    n: int,
    attributes: list[str] | None = None,
    kind: str = KIND_COARSE,
    known_attributes: list[str] | None = None,
) -> float:
    """Total cost of labeling n examples for the given model kind.

    coarse: n * coarse_cost.  cbm: n * (sum of attribute costs, plus the
    coarse cost when the model's Stage 2 target is counted as collected).
    """
    if n < 0:
        raise ValidationError("n must be nonnegative")
    cost_model.validate()
    if kind == KIND_COARSE:
        return n * cost_model.coarse_cost
    if kind != KIND_CBM:
        raise ValidationError(f"unknown model kind {kind!r}")
    attributes = attributes or []
    if known_attributes is not None:
        unknown = [a for a in attributes if a not in known_attributes]
        if unknown:
            raise ValidationError(f"unknown attribute(s) {unknown}")
    per_example = sum(cost_model.attribute_cost(a) for a in attributes)
    if cost_model.include_coarse_for_cbm:
        per_example += cost_model.coarse_cost
    return n * per_example


# ---------------------------------------------------------------------------
# Sweeps


@dataclass
class SweepSpec:
    train_sizes: list[int]
    attribute_sets: dict[str, list[str]]
    seeds: list[int]
    model_kinds: list[str] = field(default_factory=lambda: [KIND_COARSE, KIND_CBM])

    def validate(self, dataset: Dataset) -> None:
        if not self.train_sizes or not self.seeds or not self.model_kinds:
            raise ValidationError("train_sizes, seeds and model_kinds must be nonempty")
        if any(n <= 0 for n in self.train_sizes):
            raise ValidationError("train sizes must be positive")
        unknown = set(self.model_kinds) - {KIND_COARSE, KIND_CBM}
        if unknown:
            raise ValidationError(f"unknown model kinds {sorted(unknown)}")
        if KIND_CBM in self.model_kinds and not self.attribute_sets:
            raise ValidationError("cbm sweeps need at least one attribute set")
        available = len(dataset.examples_in_split("train"))
        too_big = [n for n in self.train_sizes if n > available]
        if too_big:
            raise ValidationError(
                f"train sizes {too_big} exceed the {available} available train examples"
            )
        for set_name, attrs in self.attribute_sets.items():
            bad = [a for a in attrs if a not in dataset.attribute_names]
            if bad:
                raise ValidationError(f"attribute set {set_name!r}: unknown attribute(s) {bad}")


@dataclass
class CurvePoint:
    model_name: str
    n_train: int
    cost: float
    auc: float
    seed: int


@dataclass
class SweepError:
    model_name: str
    n_train: int
    seed: int
    message: str


def _sort_key(point: CurvePoint):
    return (point.model_name, point.n_train, point.cost, point.auc, point.seed)


def run_sweep(
    dataset: Dataset,
    feedback: dict[str, FeedbackVector],
    coarse_labels: dict[str, int],
    spec: SweepSpec,
    cost_model: CostModel,
    config: MlpConfig,
    jobs: int = 1,
) -> tuple[list[CurvePoint], list[SweepError]]:
    """Train/evaluate every sweep cell; failed cells become error rows and
    the sweep continues.  Output order is deterministic regardless of the
    worker count."""
    spec.validate(dataset)
    cost_model.validate()
    train_ids_all = sorted(ex.example_id for ex in dataset.examples_in_split("train"))
    test = dataset.examples_in_split("test")
    if not test:
        raise ValidationError("test split is empty")
    missing = [ex.example_id for ex in test if ex.example_id not in coarse_labels]
    if missing:
        raise ValidationError(f"coarse label missing for test example {missing[0]!r}")
    x_test = np.stack([ex.model_input() for ex in test])
    y_test = np.asarray([coarse_labels[ex.example_id] for ex in test])

    # One nested subsample order per seed, shared by every model so curves
    # see identical data.
    subsample_order = {
        seed: np.random.default_rng(derive_seed(seed, "sweep-subsample")).permutation(
            len(train_ids_all)
        )
        for seed in spec.seeds
    }

    cells = []
    for kind in spec.model_kinds:
        set_items = spec.attribute_sets.items() if kind == KIND_CBM else [(None, None)]
        for set_name, attrs in set_items:
            name = KIND_COARSE if kind == KIND_COARSE else f"cbm:{set_name}"
            for n in spec.train_sizes:
                for seed in spec.seeds:
                    cells.append((kind, name, attrs, n, seed))

    def run_cell(cell):
        kind, name, attrs, n, seed = cell
        try:
            ids = [train_ids_all[i] for i in subsample_order[seed][:n]]
            cfg = dataclasses.replace(config, seed=derive_seed(seed, "sweep-model", name, n))
            if kind == KIND_COARSE:
                model = train_coarse(dataset, coarse_labels, cfg, train_ids=ids)
                cost = annotation_cost(cost_model, n, kind=KIND_COARSE)
            else:
                model = train_cbm(
                    dataset, feedback, attrs, cfg, train_ids=ids, coarse_labels=coarse_labels
                )
                cost = annotation_cost(
                    cost_model, n, attributes=attrs, kind=KIND_CBM,
                    known_attributes=dataset.attribute_names,
                )
            auc = roc_auc(score(model, x_test), y_test)
            return CurvePoint(model_name=name, n_train=n, cost=cost, auc=auc, seed=seed)
        except Exception as exc:  # keep sweeping, report the cell
            logger.warning("sweep cell %s failed: %s", cell, exc)
            return SweepError(model_name=name, n_train=n, seed=seed, message=str(exc))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_cell, cells))
    else:
        results = [run_cell(c) for c in cells]

    points = sorted((r for r in results if isinstance(r, CurvePoint)), key=_sort_key)
    errors = [r for r in results if isinstance(r, SweepError)]
    return points, errors


def render_report(points: list[CurvePoint], fmt: str = "csv") -> str:
    """Stable column order, rows sorted lexicographically by field tuple."""
    rows = sorted(points, key=_sort_key)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for p in rows:
            writer.writerow([p.model_name, p.n_train, repr(float(p.cost)), repr(float(p.auc)), p.seed])
        return buf.getvalue()
    if fmt == "jsonl":
        lines = [
            dump_json_line(
                {
                    "model_name": p.model_name,
                    "n_train": p.n_train,
                    "cost": float(p.cost),
                    "auc": float(p.auc),
                    "seed": p.seed,
                }
            )
            for p in rows
        ]
        return "\n".join(lines) + ("\n" if lines else "")
    raise ValidationError(f"unknown report format {fmt!r}")


def emit_report(points: list[CurvePoint], path: str | Path, fmt: str = "csv") -> None:
    atomic_write_text(path, render_report(points, fmt))


def parse_report_csv(text: str) -> list[CurvePoint]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != REPORT_COLUMNS:
        raise ValidationError(f"unexpected report columns {header}")
    return [
        CurvePoint(
            model_name=row[0],
            n_train=int(row[1]),
            cost=float(row[2]),
            auc=float(row[3]),
            seed=int(row[4]),
        )
        for row in reader
        if row
    ]
