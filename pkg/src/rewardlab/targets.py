"""Controlled preference targets: decision trees over binary attributes.

The built-in tree scores an image as good iff it is photorealistic AND
visually compelling AND NOT chaotic.  The node order follows the attribute
checks photorealistic -> visually compelling -> chaotic; the conjunction is
linearly separable, so a linear aggregator over the three attributes can
represent it exactly.  Trees are configurable through a small text format
(`if <attribute> then <subtree|leaf> else <subtree|leaf>`, leaves good/bad).
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from rewardlab.dataset import Dataset, FeedbackVector
from rewardlab.errors import DataFormatError, ValidationError


@dataclass(frozen=True)
class Leaf:
    value: int  # 1 = good, 0 = bad


@dataclass(frozen=True)
class Node:
    attribute: str
    on_true: "Node | Leaf"
    on_false: "Node | Leaf"


DecisionTreeTarget = Node | Leaf


def default_tree() -> Node:
    return Node(
        "photorealistic",
        on_true=Node(
            "visually_compelling",
            on_true=Node("chaotic", on_true=Leaf(0), on_false=Leaf(1)),
            on_false=Leaf(0),
        ),
        on_false=Leaf(0),
    )


def tree_attributes(tree: DecisionTreeTarget) -> list[str]:
    """Attribute names tested anywhere in the tree, in first-visit order."""
    seen: list[str] = []

    def visit(node):
        if isinstance(node, Node):
            if node.attribute not in seen:
                seen.append(node.attribute)
            visit(node.on_true)
            visit(node.on_false)

    visit(tree)
    return seen


# ---------------------------------------------------------------------------
# Text format


def format_tree(tree: DecisionTreeTarget) -> str:
    if isinstance(tree, Leaf):
        return "good" if tree.value else "bad"
    return (
        f"if {tree.attribute} then {format_tree(tree.on_true)} "
        f"else {format_tree(tree.on_false)}"
    )


def parse_tree(text: str, path: str = "<tree>") -> DecisionTreeTarget:
    """Parse the nested `if/then/else` tree format, reporting the line and
    column of the offending token on error."""
    tokens: list[tuple[str, int, int]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0]
        col = 0
        for part in stripped.split():
            col = stripped.index(part, col)
            tokens.append((part, lineno, col + 1))
            col += len(part)
    pos = 0

    def error(message):
        if pos < len(tokens):
            tok, line, col = tokens[pos]
            raise DataFormatError(path, line, f"column {col}: {message}, found {tok!r}")
        line = tokens[-1][1] if tokens else 1
        raise DataFormatError(path, line, f"{message}, found end of input")

    def expect(word):
        nonlocal pos
        if pos >= len(tokens) or tokens[pos][0] != word:
            error(f"expected {word!r}")
        pos += 1

    def parse_node() -> DecisionTreeTarget:
        nonlocal pos
        if pos >= len(tokens):
            error("expected 'if', 'good' or 'bad'")
        word = tokens[pos][0]
        if word == "good":
            pos += 1
            return Leaf(1)
        if word == "bad":
            pos += 1
            return Leaf(0)
        expect("if")
        if pos >= len(tokens) or tokens[pos][0] in ("if", "then", "else", "good", "bad"):
            error("expected an attribute name")
        attribute = tokens[pos][0]
        pos += 1
        expect("then")
        on_true = parse_node()
        expect("else")
        on_false = parse_node()
        return Node(attribute, on_true, on_false)

    tree = parse_node()
    if pos != len(tokens):
        error("trailing input after tree")
    return tree


def load_tree(path: str | Path) -> DecisionTreeTarget:
    path = Path(path)
    return parse_tree(path.read_text("utf-8"), str(path))


# ---------------------------------------------------------------------------
# Operations


def evaluate_tree(tree: DecisionTreeTarget, feedback: FeedbackVector | Mapping[str, int]) -> int:
    """Traverse from the root; the output depends only on attributes along
    the realized path."""
    labels = feedback.attribute_labels if isinstance(feedback, FeedbackVector) else feedback
    node = tree
    while isinstance(node, Node):
        if node.attribute not in labels:
            raise ValidationError(f"attribute {node.attribute!r} missing from feedback")
        node = node.on_true if labels[node.attribute] else node.on_false
    return node.value


def label_dataset_with_tree(
    dataset: Dataset, tree: DecisionTreeTarget, feedback: dict[str, FeedbackVector]
) -> dict[str, int]:
    """Tree-evaluate every example; the result serves as the coarse label."""
    missing = [ex.example_id for ex in dataset.examples if ex.example_id not in feedback]
    if missing:
        raise ValidationError(
            f"feedback missing for {len(missing)} example(s), first {missing[0]!r}"
        )
    return {
        ex.example_id: evaluate_tree(tree, feedback[ex.example_id])
        for ex in dataset.examples
    }


def phi_coefficient(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation of two binary vectors; 0.0 when either is constant."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = a.shape[0]
    n11 = float(np.sum((a == 1) & (b == 1)))
    n10 = float(np.sum((a == 1) & (b == 0)))
    n01 = float(np.sum((a == 0) & (b == 1)))
    n00 = float(np.sum((a == 0) & (b == 0)))
    denom = (n11 + n10) * (n01 + n00) * (n11 + n01) * (n10 + n00)
    if denom == 0.0:
        return 0.0
    return (n11 * n00 - n10 * n01) / np.sqrt(denom)


def rank_attributes_by_target_correlation(
    feedback: dict[str, FeedbackVector], target: dict[str, int]
) -> list[tuple[str, float]]:
    """Attributes sorted by descending |phi| against the target.

    Coefficients are reported signed; ties break on the attribute name so
    the ordering is deterministic.
    """
    ids = [k for k in feedback if k in target]
    if len(ids) < 2:
        raise ValidationError("need at least 2 examples with target labels")
    y = np.array([target[k] for k in ids], dtype=np.float64)
    if np.all(y == y[0]):
        raise ValidationError("target is constant, correlation undefined")
    attributes = list(next(iter(feedback.values())).attribute_labels)
    scored = []
    for name in attributes:
        col = np.array([feedback[k].attribute_labels[name] for k in ids], dtype=np.float64)
        scored.append((name, float(phi_coefficient(col, y))))
    scored.sort(key=lambda item: (-abs(item[1]), item[0]))
    return scored
