import numpy as np
import pytest

from rewardlab.dataset import Dataset, Example
from rewardlab.mlp import MlpConfig, MlpModel
from rewardlab.reward import KIND_COARSE, RewardModel


def make_example(i, prompt, embedding, scores=None, human=None, text=None, metadata=None):
    return Example(
        example_id=f"ex-{i:04d}",
        prompt_id=prompt,
        image_embedding=np.asarray(embedding, dtype=np.float64),
        text_embedding=None if text is None else np.asarray(text, dtype=np.float64),
        raw_attribute_scores=dict(scores or {}),
        raw_human_scores=list(human or []),
        metadata=dict(metadata or {}),
    )


@pytest.fixture
def small_dataset():
    """Four prompts x two images, two attributes, three raters."""
    examples = []
    scores = [0.1, 0.3, 0.45, 0.55, 0.6, 0.8, 0.9, 0.95]
    for i in range(8):
        examples.append(
            make_example(
                i,
                prompt=f"p{i // 2}",
                embedding=[float(i), float(i) / 2.0],
                scores={"bright": scores[i], "funny": scores[7 - i]},
                human=[1.0 + (i % 4), 2.0, 3.0],
            )
        )
    return Dataset(examples=examples, attribute_names=["bright", "funny"], n_raters=3)


def linear_probe_model(weights, bias=0.0):
    """Single-layer, single-head model: score = sigmoid(w . x + b).

    Lets tests prescribe exact scores through logits.
    """
    w = np.asarray(weights, dtype=np.float64).reshape(-1, 1)
    config = MlpConfig(input_dim=w.shape[0], n_heads=1, hidden_dims=[], seed=0)
    stage1 = MlpModel(weights=[w], biases=[np.array([float(bias)])], config=config)
    return RewardModel(kind=KIND_COARSE, stage1=stage1, stage2=None, attribute_names=[])
