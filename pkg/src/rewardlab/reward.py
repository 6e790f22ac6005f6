"""Reward models: the coarse single-stage predictor and the two-stage
concept-bottleneck model (attribute MLP + linear aggregator), with sequential
training, scoring, and an exact-round-trip file format.

Model files are JSON with every float written as its shortest round-tripping
decimal, so reload-then-score is bit-identical to the in-memory model.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from rewardlab.aggregator import LinearAggregator, aggregator_train
from rewardlab.dataset import Dataset, FeedbackVector
from rewardlab.errors import DataFormatError, ValidationError
from rewardlab.mlp import MlpConfig, MlpModel, mlp_forward, mlp_train
from rewardlab.util import atomic_write_text

MODEL_FORMAT = "rewardlab-model"
MODEL_VERSION = 1

KIND_COARSE = "coarse"
KIND_CBM = "cbm"


@dataclass
class RewardModel:
    kind: str
    stage1: MlpModel
    stage2: LinearAggregator | None
    attribute_names: list[str]

    def validate(self) -> None:
        if self.kind == KIND_COARSE:
            if self.stage1.n_heads != 1 or self.stage2 is not None:
                raise ValidationError("coarse model must have one head and no aggregator")
        elif self.kind == KIND_CBM:
            if self.stage2 is None:
                raise ValidationError("cbm model requires an aggregator")
            if self.stage1.n_heads != len(self.attribute_names):
                raise ValidationError("cbm heads must match attribute count")
            if self.stage2.weights.shape[0] != len(self.attribute_names):
                raise ValidationError("aggregator width must match attribute count")
        else:
            raise ValidationError(f"unknown model kind {self.kind!r}")
        self.stage1.validate()

    @property
    def input_dim(self) -> int:
        return self.stage1.config.input_dim


def _training_matrix(dataset: Dataset, ids: list[str]) -> np.ndarray:
    by_id = {ex.example_id: ex for ex in dataset.examples}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise ValidationError(f"unknown example id(s), first {missing[0]!r}")
    return np.stack([by_id[i].model_input() for i in ids])


def _train_ids(dataset: Dataset, train_ids: list[str] | None) -> list[str]:
    if train_ids is None:
        train_ids = [ex.example_id for ex in dataset.examples_in_split("train")]
    if not train_ids:
        raise ValidationError("train split is empty")
    return list(train_ids)


def train_cbm(
    dataset: Dataset,
    feedback: dict[str, FeedbackVector],
    attributes: list[str],
    config: MlpConfig,
    train_ids: list[str] | None = None,
    coarse_labels: dict[str, int] | None = None,
    backend=None,
) -> RewardModel:
    """Sequential two-stage training.

    Stage 1 fits the multi-headed MLP on (embedding -> selected attribute
    labels); Stage 2 then fits the aggregator on Stage-1 probabilities over
    the same train examples against the coarse labels (taken from
    `coarse_labels` when given, else from the feedback vectors).  Stage-2
    training never touches Stage-1 parameters.
    """
    if not attributes:
        raise ValidationError("attribute subset is empty")
    unknown = [a for a in attributes if a not in dataset.attribute_names]
    if unknown:
        raise ValidationError(f"unknown attribute(s) {unknown}")
    ids = _train_ids(dataset, train_ids)
    x = _training_matrix(dataset, ids)

    rows = []
    for example_id in ids:
        if example_id not in feedback:
            raise ValidationError(f"feedback missing for example {example_id!r}")
        labels = feedback[example_id].attribute_labels
        try:
            rows.append([labels[a] for a in attributes])
        except KeyError as exc:
            raise ValidationError(
                f"attribute {exc.args[0]!r} missing for example {example_id!r}"
            ) from None
    y = np.asarray(rows, dtype=np.float64)

    cfg = dataclasses.replace(
        config, input_dim=x.shape[1], n_heads=len(attributes)
    )
    stage1 = mlp_train(cfg, x, y, backend=backend)

    coarse = []
    for example_id in ids:
        if coarse_labels is not None:
            if example_id not in coarse_labels:
                raise ValidationError(f"coarse label missing for example {example_id!r}")
            coarse.append(coarse_labels[example_id])
        else:
            value = feedback[example_id].coarse_label
            if value is None:
                raise ValidationError(
                    f"example {example_id!r} has no coarse label; assign a target first"
                )
            coarse.append(value)
    probs = mlp_forward(stage1, x, backend=backend)
    stage2 = aggregator_train(probs, np.asarray(coarse, dtype=np.float64))

    model = RewardModel(
        kind=KIND_CBM, stage1=stage1, stage2=stage2, attribute_names=list(attributes)
    )
    model.validate()
    return model


def train_coarse(
    dataset: Dataset,
    coarse_labels: dict[str, int],
    config: MlpConfig,
    train_ids: list[str] | None = None,
    backend=None,
) -> RewardModel:
    """Single-head MLP straight from embeddings to the coarse label."""
    ids = _train_ids(dataset, train_ids)
    x = _training_matrix(dataset, ids)
    missing = [i for i in ids if i not in coarse_labels]
    if missing:
        raise ValidationError(f"coarse label missing for example {missing[0]!r}")
    y = np.asarray([[coarse_labels[i]] for i in ids], dtype=np.float64)
    if np.all(y == y[0, 0]):
        raise ValidationError("coarse labels are constant; need both classes")
    cfg = dataclasses.replace(config, input_dim=x.shape[1], n_heads=1)
    stage1 = mlp_train(cfg, x, y, backend=backend)
    model = RewardModel(
        kind=KIND_COARSE, stage1=stage1, stage2=None, attribute_names=list(dataset.attribute_names)
    )
    model.validate()
    return model


def score(model: RewardModel, x: np.ndarray, backend=None):
    """Reward in (0, 1) for one embedding vector or a batch."""
    single = np.asarray(x).ndim == 1
    probs = mlp_forward(model.stage1, np.atleast_2d(np.asarray(x, dtype=np.float64)), backend=backend)
    if model.kind == KIND_COARSE:
        out = probs[:, 0]
    else:
        out = model.stage2.score(probs)
    return float(out[0]) if single else out


def stage1_probabilities(model: RewardModel, x: np.ndarray, backend=None) -> np.ndarray:
    """Per-attribute probabilities (the inspectable bottleneck)."""
    return mlp_forward(model.stage1, np.atleast_2d(np.asarray(x, dtype=np.float64)), backend=backend)


def inspect_aggregator(model: RewardModel) -> list[tuple[str, float]]:
    """Named aggregator weights for audit/reporting; bias is on
    model.stage2.bias."""
    if model.kind != KIND_CBM:
        raise ValidationError("only cbm models have an aggregator to inspect")
    return [
        (name, float(w))
        for name, w in zip(model.attribute_names, model.stage2.weights)
    ]


# ---------------------------------------------------------------------------
# Serialization


def _config_to_json(config: MlpConfig) -> dict:
    return {
        "input_dim": config.input_dim,
        "n_heads": config.n_heads,
        "hidden_dims": list(config.hidden_dims),
        "learning_rate": config.learning_rate,
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "seed": config.seed,
        "optimizer": config.optimizer,
        "head_loss_weights": config.head_loss_weights,
    }


def model_to_json(model: RewardModel) -> dict:
    model.validate()
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": model.kind,
        "attribute_names": list(model.attribute_names),
        "config": _config_to_json(model.stage1.config),
        "stage1": {
            "weights": [[list(map(float, row)) for row in w] for w in model.stage1.weights],
            "biases": [list(map(float, b)) for b in model.stage1.biases],
        },
    }
    if model.stage2 is None:
        doc["stage2"] = None
    else:
        doc["stage2"] = {
            "weights": list(map(float, model.stage2.weights)),
            "bias": float(model.stage2.bias),
            "class_weights": [float(v) for v in model.stage2.class_weights],
            "n_iter": model.stage2.n_iter,
            "converged": model.stage2.converged,
        }
    return doc


def save_model(model: RewardModel, path: str | Path) -> None:
    atomic_write_text(path, json.dumps(model_to_json(model), indent=1) + "\n")


def load_model(path: str | Path) -> RewardModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(path, exc.lineno, f"invalid model file: {exc.msg}") from exc
    if doc.get("format") != MODEL_FORMAT:
        raise DataFormatError(path, 1, f"expected a {MODEL_FORMAT!r} file")
    cfg = doc["config"]
    config = MlpConfig(
        input_dim=cfg["input_dim"],
        n_heads=cfg["n_heads"],
        hidden_dims=list(cfg["hidden_dims"]),
        learning_rate=cfg["learning_rate"],
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        seed=cfg["seed"],
        optimizer=cfg.get("optimizer", "adam"),
        head_loss_weights=cfg.get("head_loss_weights"),
    )
    stage1 = MlpModel(
        weights=[np.asarray(w, dtype=np.float64) for w in doc["stage1"]["weights"]],
        biases=[np.asarray(b, dtype=np.float64) for b in doc["stage1"]["biases"]],
        config=config,
    )
    stage2 = None
    if doc.get("stage2") is not None:
        s2 = doc["stage2"]
        stage2 = LinearAggregator(
            weights=np.asarray(s2["weights"], dtype=np.float64),
            bias=float(s2["bias"]),
            class_weights=(s2["class_weights"][0], s2["class_weights"][1]),
            n_iter=int(s2.get("n_iter", 0)),
            converged=bool(s2.get("converged", True)),
        )
    model = RewardModel(
        kind=doc["kind"],
        stage1=stage1,
        stage2=stage2,
        attribute_names=list(doc["attribute_names"]),
    )
    model.validate()
    return model
