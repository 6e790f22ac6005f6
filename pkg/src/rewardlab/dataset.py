"""Data model and file handling for prompt-image feedback datasets.

A dataset file is UTF-8 JSON lines: one header record declaring the schema
(embedding dimensions, attribute names, rater count, optional thresholds and
split assignment), then one record per example.  Floats are serialized with
the shortest round-tripping decimal repr, so write -> load -> write is exact.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rewardlab.errors import DataFormatError, ValidationError
from rewardlab.util import expect_header, read_jsonl, write_jsonl

DATASET_FORMAT = "rewardlab-dataset"
FEEDBACK_FORMAT = "rewardlab-feedback"
LABELS_FORMAT = "rewardlab-labels"
FORMAT_VERSION = 1

SPLITS = ("train", "val", "test")
DEFAULT_FRACTIONS = (0.5, 0.25, 0.25)

# Canonical image-quality attribute names; the first three are the ones the
# built-in decision-tree target tests, so small synthetic runs get exactly
# those.  Extra synthetic attributes beyond eight are numbered.
DEFAULT_ATTRIBUTES = (
    "photorealistic",
    "visually_compelling",
    "chaotic",
    "distorted",
    "bright",
    "captivating",
    "disturbing",
    "funny",
)


@dataclass
class Example:
    """One prompt-image datum: embeddings, raw scores, identifiers."""

    example_id: str
    prompt_id: str
    image_embedding: np.ndarray
    text_embedding: np.ndarray | None = None
    raw_attribute_scores: dict[str, float] = field(default_factory=dict)
    raw_human_scores: list[float] = field(default_factory=list)
    metadata: dict[str, str] = field(default_factory=dict)

    def model_input(self) -> np.ndarray:
        """Embedding fed to reward models: image, with text concatenated when present."""
        if self.text_embedding is None:
            return self.image_embedding
        return np.concatenate([self.image_embedding, self.text_embedding])


@dataclass
class FeedbackVector:
    """Binarized per-attribute labels plus the (optional) coarse label."""

    attribute_labels: dict[str, int]
    coarse_label: int | None = None


@dataclass
class Dataset:
    examples: list[Example]
    attribute_names: list[str]
    n_raters: int | None = None
    thresholds: dict[str, float] = field(default_factory=dict)
    coarse_threshold: float | None = None
    split_assignment: dict[str, str] = field(default_factory=dict)

    @property
    def embedding_dim(self) -> int:
        return int(self.examples[0].image_embedding.shape[0]) if self.examples else 0

    @property
    def text_embedding_dim(self) -> int | None:
        if not self.examples or self.examples[0].text_embedding is None:
            return None
        return int(self.examples[0].text_embedding.shape[0])

    def split_of(self, example: Example) -> str | None:
        return self.split_assignment.get(example.prompt_id)

    def examples_in_split(self, split: str) -> list[Example]:
        return [ex for ex in self.examples if self.split_of(ex) == split]

    def example_ids(self) -> list[str]:
        return [ex.example_id for ex in self.examples]

    def validate(self) -> None:
        seen = set()
        declared = set(self.attribute_names)
        for ex in self.examples:
            if ex.example_id in seen:
                raise ValidationError(f"duplicate example_id {ex.example_id!r}")
            seen.add(ex.example_id)
            if ex.image_embedding.shape[0] != self.embedding_dim:
                raise ValidationError(
                    f"example {ex.example_id!r}: embedding length "
                    f"{ex.image_embedding.shape[0]}, expected {self.embedding_dim}"
                )
            if (ex.text_embedding is None) != (self.text_embedding_dim is None):
                raise ValidationError(
                    f"example {ex.example_id!r}: text embedding presence inconsistent"
                )
            if ex.text_embedding is not None and ex.text_embedding.shape[0] != self.text_embedding_dim:
                raise ValidationError(
                    f"example {ex.example_id!r}: text embedding length "
                    f"{ex.text_embedding.shape[0]}, expected {self.text_embedding_dim}"
                )
            unknown = set(ex.raw_attribute_scores) - declared
            if unknown:
                raise ValidationError(
                    f"example {ex.example_id!r}: unknown attribute name(s) {sorted(unknown)}"
                )
            if self.n_raters is not None and ex.raw_human_scores:
                if len(ex.raw_human_scores) != self.n_raters:
                    raise ValidationError(
                        f"example {ex.example_id!r}: {len(ex.raw_human_scores)} human "
                        f"scores, declared rater count is {self.n_raters}"
                    )
        for name, thr in self.thresholds.items():
            if name not in declared:
                raise ValidationError(f"threshold for unknown attribute {name!r}")
            if not np.isfinite(thr):
                raise ValidationError(f"threshold for {name!r} is not finite")
        if self.coarse_threshold is not None and not np.isfinite(self.coarse_threshold):
            raise ValidationError("coarse threshold is not finite")
        for prompt_id, split in self.split_assignment.items():
            if split not in SPLITS:
                raise ValidationError(f"prompt {prompt_id!r}: unknown split {split!r}")


# ---------------------------------------------------------------------------
# File format


def _vector_from(obj, path, lineno, key, expected_dim):
    vec = obj.get(key)
    if vec is None:
        return None
    if not isinstance(vec, list) or not all(isinstance(v, (int, float)) for v in vec):
        raise DataFormatError(path, lineno, f"{key} must be a list of numbers")
    if expected_dim is not None and len(vec) != expected_dim:
        raise DataFormatError(
            path, lineno, f"{key} has length {len(vec)}, dataset declares {expected_dim}"
        )
    return np.asarray(vec, dtype=np.float64)


def load_dataset(path: str | Path) -> Dataset:
    """Load a dataset file, validating it against its own header schema."""
    path = Path(path)
    records = read_jsonl(path)
    try:
        lineno, header = next(records)
    except StopIteration:
        raise DataFormatError(path, 1, "empty file, expected a header record") from None
    header = expect_header(path, header, lineno, DATASET_FORMAT)
    attribute_names = list(header.get("attributes", []))
    if len(set(attribute_names)) != len(attribute_names):
        raise DataFormatError(path, lineno, "attribute names must be unique")
    embedding_dim = header.get("embedding_dim")
    text_dim = header.get("text_embedding_dim")
    n_raters = header.get("n_raters")
    declared = set(attribute_names)

    examples = []
    for lineno, obj in records:
        if not isinstance(obj, dict):
            raise DataFormatError(path, lineno, "example record must be an object")
        try:
            example_id = str(obj["example_id"])
            prompt_id = str(obj["prompt_id"])
        except KeyError as exc:
            raise DataFormatError(path, lineno, f"missing field {exc.args[0]!r}") from None
        image = _vector_from(obj, path, lineno, "image_embedding", embedding_dim)
        if image is None:
            raise DataFormatError(path, lineno, "missing field 'image_embedding'")
        text = _vector_from(obj, path, lineno, "text_embedding", text_dim)
        if (text is None) != (text_dim is None):
            raise DataFormatError(path, lineno, "text_embedding presence must match header")
        scores = obj.get("attribute_scores", {})
        for name in scores:
            if name not in declared:
                raise DataFormatError(path, lineno, f"unknown attribute name {name!r}")
        human = [float(v) for v in obj.get("human_scores", [])]
        if n_raters is not None and human and len(human) != n_raters:
            raise DataFormatError(
                path, lineno, f"{len(human)} human scores, header declares {n_raters}"
            )
        examples.append(
            Example(
                example_id=example_id,
                prompt_id=prompt_id,
                image_embedding=image,
                text_embedding=text,
                raw_attribute_scores={k: float(v) for k, v in scores.items()},
                raw_human_scores=human,
                metadata={str(k): str(v) for k, v in obj.get("metadata", {}).items()},
            )
        )

    dataset = Dataset(
        examples=examples,
        attribute_names=attribute_names,
        n_raters=n_raters,
        thresholds={k: float(v) for k, v in header.get("thresholds", {}).items()},
        coarse_threshold=header.get("coarse_threshold"),
        split_assignment={str(k): str(v) for k, v in header.get("splits", {}).items()},
    )
    try:
        dataset.validate()
    except ValidationError as exc:
        raise DataFormatError(path, 1, str(exc)) from exc
    return dataset


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    header = {
        "format": DATASET_FORMAT,
        "version": FORMAT_VERSION,
        "embedding_dim": dataset.embedding_dim,
        "text_embedding_dim": dataset.text_embedding_dim,
        "attributes": list(dataset.attribute_names),
        "n_raters": dataset.n_raters,
    }
    if dataset.thresholds:
        header["thresholds"] = {k: float(v) for k, v in dataset.thresholds.items()}
    if dataset.coarse_threshold is not None:
        header["coarse_threshold"] = float(dataset.coarse_threshold)
    if dataset.split_assignment:
        header["splits"] = dict(dataset.split_assignment)

    def rows():
        for ex in dataset.examples:
            row = {
                "example_id": ex.example_id,
                "prompt_id": ex.prompt_id,
                "image_embedding": [float(v) for v in ex.image_embedding],
            }
            if ex.text_embedding is not None:
                row["text_embedding"] = [float(v) for v in ex.text_embedding]
            if ex.raw_attribute_scores:
                row["attribute_scores"] = {k: float(v) for k, v in ex.raw_attribute_scores.items()}
            if ex.raw_human_scores:
                row["human_scores"] = [float(v) for v in ex.raw_human_scores]
            if ex.metadata:
                row["metadata"] = dict(ex.metadata)
            yield row

    write_jsonl(path, header, rows())


def write_feedback(feedback: dict[str, FeedbackVector], attribute_names, path: str | Path,
                   thresholds: dict[str, float] | None = None,
                   coarse_threshold: float | None = None) -> None:
    header = {
        "format": FEEDBACK_FORMAT,
        "version": FORMAT_VERSION,
        "attributes": list(attribute_names),
    }
    if thresholds:
        header["thresholds"] = {k: float(v) for k, v in thresholds.items()}
    if coarse_threshold is not None:
        header["coarse_threshold"] = float(coarse_threshold)
    rows = (
        {
            "example_id": example_id,
            "attributes": {k: int(v) for k, v in fv.attribute_labels.items()},
            "coarse": None if fv.coarse_label is None else int(fv.coarse_label),
        }
        for example_id, fv in feedback.items()
    )
    write_jsonl(path, header, rows)


def load_feedback(path: str | Path) -> tuple[dict[str, FeedbackVector], list[str]]:
    path = Path(path)
    records = read_jsonl(path)
    lineno, header = next(records)
    header = expect_header(path, header, lineno, FEEDBACK_FORMAT)
    attribute_names = list(header.get("attributes", []))
    feedback: dict[str, FeedbackVector] = {}
    for lineno, obj in records:
        labels = obj.get("attributes", {})
        for name, value in labels.items():
            if name not in attribute_names:
                raise DataFormatError(path, lineno, f"unknown attribute name {name!r}")
            if value not in (0, 1):
                raise DataFormatError(path, lineno, f"label for {name!r} must be 0 or 1")
        coarse = obj.get("coarse")
        if coarse not in (None, 0, 1):
            raise DataFormatError(path, lineno, "coarse label must be 0, 1 or null")
        feedback[str(obj["example_id"])] = FeedbackVector(
            attribute_labels={k: int(v) for k, v in labels.items()},
            coarse_label=None if coarse is None else int(coarse),
        )
    return feedback, attribute_names


def write_labels(labels: dict[str, int], path: str | Path) -> None:
    header = {"format": LABELS_FORMAT, "version": FORMAT_VERSION}
    rows = ({"example_id": k, "label": int(v)} for k, v in labels.items())
    write_jsonl(path, header, rows)


def load_labels(path: str | Path) -> dict[str, int]:
    path = Path(path)
    records = read_jsonl(path)
    lineno, header = next(records)
    expect_header(path, header, lineno, LABELS_FORMAT)
    labels = {}
    for lineno, obj in records:
        value = obj.get("label")
        if value not in (0, 1):
            raise DataFormatError(path, lineno, "label must be 0 or 1")
        labels[str(obj["example_id"])] = int(value)
    return labels


# ---------------------------------------------------------------------------
# Operations


def aggregate_human_scores(example: Example) -> float:
    """Unweighted mean of all rater scores for one example."""
    if not example.raw_human_scores:
        raise ValidationError(f"example {example.example_id!r} has no human scores")
    return float(np.mean(example.raw_human_scores))


def compute_median_thresholds(
    dataset: Dataset, coarse_values: dict[str, float] | None = None
) -> tuple[dict[str, float], float | None]:
    """Class-balancing thresholds: per-attribute medians over the train split.

    The coarse threshold is the median of the aggregated human means (or of
    `coarse_values` when supplied); None when no coarse source exists.
    """
    train = dataset.examples_in_split("train")
    if not train:
        raise ValidationError("median threshold policy needs a nonempty train split")
    thresholds = {}
    for name in dataset.attribute_names:
        scores = [ex.raw_attribute_scores[name] for ex in train if name in ex.raw_attribute_scores]
        if not scores:
            raise ValidationError(f"no train-split scores for attribute {name!r}")
        thresholds[name] = float(np.median(scores))
    coarse_threshold = None
    values = []
    for ex in train:
        if coarse_values is not None:
            if ex.example_id in coarse_values:
                values.append(coarse_values[ex.example_id])
        elif ex.raw_human_scores:
            values.append(aggregate_human_scores(ex))
    if values:
        coarse_threshold = float(np.median(values))
    return thresholds, coarse_threshold


def binarize(
    dataset: Dataset,
    attribute_thresholds: dict[str, float],
    coarse_threshold: float | None = None,
    coarse_values: dict[str, float] | None = None,
) -> dict[str, FeedbackVector]:
    """Map raw scores to binary labels: 1 iff score > threshold (ties -> 0).

    The coarse source is the aggregated human mean, or `coarse_values` when
    given (e.g. a precomputed target).  A coarse source that is already
    binary (all values 0/1, as a decision-tree target is) passes through
    unchanged without needing a threshold.
    """
    missing = [a for a in dataset.attribute_names if a not in attribute_thresholds]
    if missing:
        raise ValidationError(f"threshold missing for declared attribute(s) {missing}")

    raw_coarse: dict[str, float] = {}
    for ex in dataset.examples:
        if coarse_values is not None:
            if ex.example_id in coarse_values:
                raw_coarse[ex.example_id] = float(coarse_values[ex.example_id])
        elif ex.raw_human_scores:
            raw_coarse[ex.example_id] = aggregate_human_scores(ex)
    coarse_is_binary = bool(raw_coarse) and all(v in (0.0, 1.0) for v in raw_coarse.values())
    if raw_coarse and not coarse_is_binary and coarse_threshold is None:
        raise ValidationError("coarse threshold required for non-binary coarse scores")

    out: dict[str, FeedbackVector] = {}
    for ex in dataset.examples:
        labels = {}
        for name, score in ex.raw_attribute_scores.items():
            labels[name] = int(score > attribute_thresholds[name])
        coarse = None
        if ex.example_id in raw_coarse:
            value = raw_coarse[ex.example_id]
            coarse = int(value) if coarse_is_binary else int(value > coarse_threshold)
        out[ex.example_id] = FeedbackVector(attribute_labels=labels, coarse_label=coarse)
    return out


def _largest_remainder_counts(n: int, fractions) -> list[int]:
    quotas = [f * n for f in fractions]
    counts = [int(q) for q in quotas]
    remainder = n - sum(counts)
    order = sorted(range(len(fractions)), key=lambda i: (counts[i] - quotas[i], i))
    for i in order[:remainder]:
        counts[i] += 1
    return counts


def split_by_prompt(
    dataset: Dataset,
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS,
    seed: int = 0,
) -> Dataset:
    """Assign every prompt (and therefore all of its images) to one split.

    Prompts are shuffled with a seeded generator and partitioned by the
    largest-remainder rule, so (0.5, 0.25, 0.25) on 100 prompts gives exactly
    50/25/25.  Returns a new Dataset; the input is untouched.
    """
    if any(f <= 0 for f in fractions) or len(fractions) != 3:
        raise ValidationError("fractions must be three positive reals")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError(f"fractions sum to {sum(fractions)}, expected 1")
    prompts = sorted({ex.prompt_id for ex in dataset.examples})
    if len(prompts) < 3:
        raise ValidationError(f"need at least 3 prompts to split, got {len(prompts)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(prompts))
    counts = _largest_remainder_counts(len(prompts), fractions)
    assignment = {}
    pos = 0
    for split, count in zip(SPLITS, counts):
        for idx in order[pos : pos + count]:
            assignment[prompts[idx]] = split
        pos += count
    return dataclasses.replace(dataset, split_assignment=assignment)


@dataclass
class SyntheticSpec:
    """Recipe for a desk-scale synthetic dataset with known latent attributes."""

    n_examples: int
    embedding_dim: int
    n_attributes: int
    attribute_marginals: list[float]
    noise_sigma: float
    seed: int
    attribute_names: list[str] | None = None
    examples_per_prompt: int = 1

    def validate(self) -> None:
        if self.n_examples <= 0 or self.embedding_dim <= 0 or self.n_attributes <= 0:
            raise ValidationError("n_examples, embedding_dim, n_attributes must be positive")
        if len(self.attribute_marginals) != self.n_attributes:
            raise ValidationError("need one marginal per attribute")
        if any(not (0.0 < m < 1.0) for m in self.attribute_marginals):
            raise ValidationError("attribute marginals must lie in (0, 1)")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be nonnegative")
        if self.attribute_names is not None and len(self.attribute_names) != self.n_attributes:
            raise ValidationError("need one name per attribute")
        if self.examples_per_prompt < 1:
            raise ValidationError("examples_per_prompt must be >= 1")

    def resolved_names(self) -> list[str]:
        if self.attribute_names is not None:
            return list(self.attribute_names)
        names = list(DEFAULT_ATTRIBUTES[: self.n_attributes])
        names.extend(f"attr_{i:02d}" for i in range(len(names), self.n_attributes))
        return names


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, dict[str, FeedbackVector]]:
    """Draw a linear-Gaussian synthetic dataset.

    Latent binary attributes a ~ Bernoulli(marginals) per example; the
    embedding is W a + noise with W a seeded Gaussian matrix fixed by the
    spec.  The returned feedback carries the latent attributes exactly; the
    coarse label is left unset (a target assigns it later).
    """
    spec.validate()
    names = spec.resolved_names()
    rng = np.random.default_rng(spec.seed)
    mixing = rng.standard_normal((spec.embedding_dim, spec.n_attributes))
    marginals = np.asarray(spec.attribute_marginals)
    latent = (rng.random((spec.n_examples, spec.n_attributes)) < marginals).astype(np.float64)
    embeddings = latent @ mixing.T
    if spec.noise_sigma > 0:
        embeddings = embeddings + spec.noise_sigma * rng.standard_normal(embeddings.shape)

    examples = []
    feedback = {}
    for i in range(spec.n_examples):
        example_id = f"ex-{i:06d}"
        examples.append(
            Example(
                example_id=example_id,
                prompt_id=f"prompt-{i // spec.examples_per_prompt:06d}",
                image_embedding=embeddings[i].copy(),
                raw_attribute_scores={name: float(latent[i, j]) for j, name in enumerate(names)},
            )
        )
        feedback[example_id] = FeedbackVector(
            attribute_labels={name: int(latent[i, j]) for j, name in enumerate(names)}
        )
    dataset = Dataset(examples=examples, attribute_names=names)
    return dataset, feedback
