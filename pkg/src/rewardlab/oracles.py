"""Simulated fine-grained feedback utilities.

Covers the model-facing math kept from the original feedback pipeline
(yes/no softmax normalization), a self-contained rule-based question
categorizer with an editable lexicon, per-category alignment aggregation,
and attribute-agreement diagnostics.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from rewardlab.dataset import FeedbackVector
from rewardlab.errors import DataFormatError, ValidationError
from rewardlab.util import expect_header, read_jsonl

QUESTIONS_FORMAT = "rewardlab-questions"


class AlignmentCategory(enum.Enum):
    OBJECT_NOUN = "object_noun"
    ATTRIBUTE_ADJECTIVE = "attribute_adjective"
    ACTION_VERB = "action_verb"
    RELATION = "relation"


@dataclass
class AlignmentQuestion:
    question_text: str
    expected_answer: str = ""
    yes_probability: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.yes_probability <= 1.0):
            raise ValidationError(
                f"yes_probability {self.yes_probability} outside [0, 1]"
            )


def normalize_yes_no(yes_logit: float, no_logit: float) -> float:
    """Two-way softmax: probability mass on 'yes'.

    Computed with the max logit subtracted so inputs like (1000, 0) neither
    overflow nor lose the antisymmetry normalize(a,b) + normalize(b,a) = 1.
    """
    if not (math.isfinite(yes_logit) and math.isfinite(no_logit)):
        raise ValidationError("yes/no logits must be finite")
    m = max(yes_logit, no_logit)
    ey = math.exp(yes_logit - m)
    en = math.exp(no_logit - m)
    return ey / (ey + en)


# ---------------------------------------------------------------------------
# Question categorization


@dataclass
class Lexicon:
    relations: list[str] = field(default_factory=list)
    adjectives: set[str] = field(default_factory=set)
    verbs: set[str] = field(default_factory=set)


def _parse_lexicon(text: str, path) -> Lexicon:
    lex = Lexicon()
    section = None
    buckets = {"relations": [], "adjectives": [], "verbs": []}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in buckets:
                raise DataFormatError(path, lineno, f"unknown lexicon section {section!r}")
            continue
        if section is None:
            raise DataFormatError(path, lineno, "term before any [section] header")
        buckets[section].append(line.lower())
    lex.relations = buckets["relations"]
    lex.adjectives = set(buckets["adjectives"])
    lex.verbs = set(buckets["verbs"])
    return lex


def load_lexicon(path: str | Path | None = None) -> Lexicon:
    """Load a lexicon file; with no path, the bundled default."""
    if path is None:
        text = resources.files("rewardlab").joinpath("data/lexicon.txt").read_text("utf-8")
        return _parse_lexicon(text, "<bundled lexicon>")
    path = Path(path)
    return _parse_lexicon(path.read_text("utf-8"), path)


_DEFAULT_LEXICON: Lexicon | None = None


def _default_lexicon() -> Lexicon:
    global _DEFAULT_LEXICON
    if _DEFAULT_LEXICON is None:
        _DEFAULT_LEXICON = load_lexicon()
    return _DEFAULT_LEXICON


_WORD_RE = re.compile(r"[a-z0-9']+")


def categorize_question(
    question: AlignmentQuestion | str, lexicon: Lexicon | None = None
) -> AlignmentCategory:
    """Assign a question to one of the four alignment categories.

    Ordered rules, first hit wins:
      1. relation   - a spatial/relational cue phrase appears
      2. action     - "does/do/did ..." opener, or a gerund from the verb list
      3. attribute  - an adjective from the lexicon, or a "what color" opener
      4. object     - existential and "what is ..." questions, and the fallback
    Relational questions usually also contain nouns, hence the precedence.
    """
    text = question.question_text if isinstance(question, AlignmentQuestion) else question
    if not text or not text.strip():
        raise ValidationError("question text is empty")
    lex = lexicon if lexicon is not None else _default_lexicon()
    tokens = _WORD_RE.findall(text.lower())
    padded = f" {' '.join(tokens)} "

    for phrase in lex.relations:
        if f" {phrase} " in padded:
            return AlignmentCategory.RELATION
    if tokens and tokens[0] in ("does", "do", "did"):
        return AlignmentCategory.ACTION_VERB
    if any(tok.endswith("ing") and tok in lex.verbs for tok in tokens):
        return AlignmentCategory.ACTION_VERB
    if len(tokens) >= 2 and tokens[0] == "what" and tokens[1] in ("color", "colour"):
        return AlignmentCategory.ATTRIBUTE_ADJECTIVE
    if any(tok in lex.adjectives for tok in tokens):
        return AlignmentCategory.ATTRIBUTE_ADJECTIVE
    return AlignmentCategory.OBJECT_NOUN


def alignment_scores(
    questions: list[AlignmentQuestion], lexicon: Lexicon | None = None
) -> dict[AlignmentCategory, float]:
    """Per-category mean of yes-probabilities.

    Categories with no questions score 1.0: absence of a check counts as
    aligned, since only detected mismatches should pull an example down.
    Sums use math.fsum, so permuting the question list cannot change the
    result even at the last bit.
    """
    buckets: dict[AlignmentCategory, list[float]] = {cat: [] for cat in AlignmentCategory}
    for q in questions:
        buckets[categorize_question(q, lexicon)].append(q.yes_probability)
    return {
        cat: (math.fsum(values) / len(values)) if values else 1.0
        for cat, values in buckets.items()
    }


def read_question_scores(path: str | Path) -> list[tuple[str, AlignmentQuestion]]:
    """Read a question-score file: one {example_id, question_text,
    expected_answer, yes_probability} record per line."""
    path = Path(path)
    records = read_jsonl(path)
    lineno, header = next(records)
    expect_header(path, header, lineno, QUESTIONS_FORMAT)
    out = []
    for lineno, obj in records:
        try:
            question = AlignmentQuestion(
                question_text=str(obj["question_text"]),
                expected_answer=str(obj.get("expected_answer", "")),
                yes_probability=float(obj["yes_probability"]),
            )
        except KeyError as exc:
            raise DataFormatError(path, lineno, f"missing field {exc.args[0]!r}") from None
        except ValidationError as exc:
            raise DataFormatError(path, lineno, str(exc)) from exc
        out.append((str(obj["example_id"]), question))
    return out


# ---------------------------------------------------------------------------
# Agreement diagnostics


def attribute_agreement_matrix(
    labels: dict[str, FeedbackVector], attributes: list[str]
) -> np.ndarray:
    """Pairwise label agreement: entry (i, j) is the fraction of examples
    whose binary labels for attributes i and j coincide."""
    if not labels:
        raise ValidationError("agreement matrix needs at least one example")
    columns = np.empty((len(labels), len(attributes)), dtype=np.int8)
    for row, fv in enumerate(labels.values()):
        for col, name in enumerate(attributes):
            if name not in fv.attribute_labels:
                raise ValidationError(f"attribute {name!r} missing from a feedback vector")
            columns[row, col] = fv.attribute_labels[name]
    m = len(attributes)
    out = np.ones((m, m), dtype=np.float64)
    for i in range(m):
        for j in range(i + 1, m):
            agree = float(np.mean(columns[:, i] == columns[:, j]))
            out[i, j] = out[j, i] = agree
    return out
