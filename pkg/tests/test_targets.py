import itertools

import numpy as np
import pytest

from rewardlab.aggregator import aggregator_train
from rewardlab.dataset import FeedbackVector, SyntheticSpec, generate_synthetic
from rewardlab.errors import DataFormatError, ValidationError
from rewardlab.targets import (
    Leaf,
    default_tree,
    evaluate_tree,
    format_tree,
    label_dataset_with_tree,
    parse_tree,
    phi_coefficient,
    rank_attributes_by_target_correlation,
    tree_attributes,
)

TREE_ATTRS = ("photorealistic", "visually_compelling", "chaotic")


def corner(p, v, c):
    return dict(zip(TREE_ATTRS, (p, v, c)))


class TestDefaultTree:
    def test_good_corner(self):
        assert evaluate_tree(default_tree(), corner(1, 1, 0)) == 1

    def test_root_short_circuit(self):
        for v, c in itertools.product([0, 1], repeat=2):
            assert evaluate_tree(default_tree(), corner(0, v, c)) == 0

    def test_single_satisfying_assignment(self):
        good = [
            bits
            for bits in itertools.product([0, 1], repeat=3)
            if evaluate_tree(default_tree(), corner(*bits)) == 1
        ]
        assert good == [(1, 1, 0)]

    def test_attributes_in_check_order(self):
        assert tree_attributes(default_tree()) == list(TREE_ATTRS)

    def test_off_path_flips_are_invisible(self):
        tree = default_tree()
        for v, c in itertools.product([0, 1], repeat=2):
            base = evaluate_tree(tree, corner(0, v, c))
            assert base == evaluate_tree(tree, corner(0, 1 - v, c))
            assert base == evaluate_tree(tree, corner(0, v, 1 - c))


class TestEvaluateTree:
    def test_constant_tree(self):
        for bits in itertools.product([0, 1], repeat=3):
            assert evaluate_tree(Leaf(1), corner(*bits)) == 1

    def test_missing_attribute(self):
        with pytest.raises(ValidationError, match="chaotic"):
            evaluate_tree(default_tree(), {"photorealistic": 1, "visually_compelling": 1})

    def test_accepts_feedback_vector(self):
        fv = FeedbackVector(attribute_labels=corner(1, 1, 0))
        assert evaluate_tree(default_tree(), fv) == 1


class TestTreeFormat:
    def test_round_trip(self):
        text = format_tree(default_tree())
        assert parse_tree(text) == default_tree()

    def test_multiline_with_comments(self):
        text = """
        # tree used in the controlled target runs
        if photorealistic then
            if visually_compelling then
                if chaotic then bad else good
            else bad
        else bad
        """
        assert parse_tree(text) == default_tree()

    def test_error_reports_position(self):
        with pytest.raises(DataFormatError) as err:
            parse_tree("if photorealistic then good els bad")
        assert "line 1" in str(err.value) or ":1:" in str(err.value)
        assert "els" in str(err.value)

    def test_truncated_input(self):
        with pytest.raises(DataFormatError, match="end of input"):
            parse_tree("if photorealistic then good else")

    def test_trailing_tokens_rejected(self):
        with pytest.raises(DataFormatError, match="trailing"):
            parse_tree("good bad")

    def test_keyword_cannot_be_attribute(self):
        with pytest.raises(DataFormatError):
            parse_tree("if then then good else bad")


class TestLabelDataset:
    def make_synthetic(self, n=1000, sigma=0.0, seed=5):
        spec = SyntheticSpec(
            n_examples=n,
            embedding_dim=8,
            n_attributes=3,
            attribute_marginals=[0.5, 0.5, 0.5],
            noise_sigma=sigma,
            seed=seed,
        )
        return generate_synthetic(spec)

    def test_all_good_feedback(self):
        ds, fb = self.make_synthetic(n=20)
        happy = {k: FeedbackVector(attribute_labels=corner(1, 1, 0)) for k in fb}
        labels = label_dataset_with_tree(ds, default_tree(), happy)
        assert set(labels.values()) == {1}

    def test_composition_with_evaluate(self):
        ds, fb = self.make_synthetic(n=200)
        labels = label_dataset_with_tree(ds, default_tree(), fb)
        for ex in ds.examples:
            assert labels[ex.example_id] == evaluate_tree(default_tree(), fb[ex.example_id])

    def test_positive_rate_matches_enumeration(self):
        # oracle: enumerate the 2^3 corners weighted by the marginals
        marginals = [0.5, 0.5, 0.5]
        expected = 0.0
        for bits in itertools.product([0, 1], repeat=3):
            weight = np.prod([m if b else 1 - m for m, b in zip(marginals, bits)])
            expected += weight * evaluate_tree(default_tree(), corner(*bits))
        assert expected == 0.125

        ds, fb = self.make_synthetic(n=1000)
        labels = label_dataset_with_tree(ds, default_tree(), fb)
        rate = np.mean(list(labels.values()))
        sigma = np.sqrt(expected * (1 - expected) / 1000)
        assert abs(rate - expected) < 5 * sigma

    def test_coverage_gap(self):
        ds, fb = self.make_synthetic(n=10)
        fb.pop("ex-000003")
        with pytest.raises(ValidationError, match="ex-000003"):
            label_dataset_with_tree(ds, default_tree(), fb)


class TestCorrelationRanking:
    def test_identical_attribute_ranks_first(self):
        fb = {
            f"e{i}": FeedbackVector({"same": b, "noise": i % 2})
            for i, b in enumerate([0, 1, 0, 1, 1, 0, 1, 0, 0, 1])
        }
        target = {k: v.attribute_labels["same"] for k, v in fb.items()}
        ranked = rank_attributes_by_target_correlation(fb, target)
        assert ranked[0] == ("same", 1.0)

    def test_orthogonal_attribute_scores_zero(self):
        # 2x2 balanced design: attribute independent of target
        fb = {}
        target = {}
        i = 0
        for a, t in itertools.product([0, 1], repeat=2):
            for _ in range(5):
                fb[f"e{i}"] = FeedbackVector({"ind": a})
                target[f"e{i}"] = t
                i += 1
        ranked = rank_attributes_by_target_correlation(fb, target)
        assert ranked == [("ind", 0.0)]

    def test_leaf_attributes_beat_nonleaf(self):
        spec = SyntheticSpec(
            n_examples=4000,
            embedding_dim=8,
            n_attributes=6,
            attribute_marginals=[0.5] * 6,
            noise_sigma=0.0,
            seed=11,
        )
        ds, fb = generate_synthetic(spec)
        target = label_dataset_with_tree(ds, default_tree(), fb)
        ranked = rank_attributes_by_target_correlation(fb, target)
        top3 = {name for name, _ in ranked[:3]}
        assert top3 == set(TREE_ATTRS)

    def test_signed_coefficients(self):
        ds_fb = {
            f"e{i}": FeedbackVector({"anti": 1 - b}) for i, b in enumerate([0, 1] * 8)
        }
        target = {f"e{i}": b for i, b in enumerate([0, 1] * 8)}
        ranked = rank_attributes_by_target_correlation(ds_fb, target)
        assert ranked[0] == ("anti", -1.0)

    def test_constant_target_rejected(self):
        fb = {"e0": FeedbackVector({"a": 0}), "e1": FeedbackVector({"a": 1})}
        with pytest.raises(ValidationError):
            rank_attributes_by_target_correlation(fb, {"e0": 1, "e1": 1})

    def test_phi_constant_attribute_is_zero(self):
        assert phi_coefficient(np.ones(10), np.array([0, 1] * 5)) == 0.0


class TestLinearSeparability:
    def test_aggregator_realizes_default_tree(self):
        # all 8 corners, exact labels: the conjunction is linearly separable
        corners = list(itertools.product([0, 1], repeat=3))
        x = np.array(corners * 10, dtype=float)
        y = np.array(
            [evaluate_tree(default_tree(), corner(*bits)) for bits in corners] * 10,
            dtype=float,
        )
        agg = aggregator_train(x, y)
        predictions = (agg.score(x) > 0.5).astype(int)
        assert np.array_equal(predictions, y.astype(int))
        assert agg.weights[0] > 0 and agg.weights[1] > 0 and agg.weights[2] < 0
