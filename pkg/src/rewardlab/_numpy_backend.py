"""Pure numpy implementation of the MLP hot-path kernels.

Selected at import time when the compiled extension is unavailable (or when
REWARDLAB_BACKEND=python).  Semantics match rewardlab._kernels: ReLU trunk,
per-head sigmoid outputs, head-weighted binary cross-entropy averaged over
the batch, and bias-corrected Adam updates.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

NAME = "python"


def forward(weights: list[np.ndarray], biases: list[np.ndarray], x: np.ndarray) -> np.ndarray:
    h = x
    for w, b in zip(weights[:-1], biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
    return expit(h @ weights[-1] + biases[-1])


def loss_and_grad(
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    x: np.ndarray,
    y: np.ndarray,
    head_weights: np.ndarray,
):
    """Loss and parameter gradients for one batch.

    loss = mean_i sum_h head_weights[h] * bce(z_ih, y_ih), with the
    cross-entropy evaluated from logits (softplus form) for stability.
    """
    n = x.shape[0]
    acts = [x]
    for w, b in zip(weights[:-1], biases[:-1]):
        acts.append(np.maximum(acts[-1] @ w + b, 0.0))
    z = acts[-1] @ weights[-1] + biases[-1]

    per_element = np.logaddexp(0.0, z) - y * z
    loss = float((per_element @ head_weights).sum()) / n

    delta = (expit(z) - y) * head_weights / n
    grad_w = [np.empty_like(w) for w in weights]
    grad_b = [np.empty_like(b) for b in biases]
    grad_w[-1] = acts[-1].T @ delta
    grad_b[-1] = delta.sum(axis=0)
    for layer in range(len(weights) - 2, -1, -1):
        delta = delta @ weights[layer + 1].T
        delta *= acts[layer + 1] > 0.0
        grad_w[layer] = acts[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
    return loss, grad_w, grad_b


def adam_step(
    param: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    t: int,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
) -> None:
    """In-place bias-corrected Adam update on flat parameter views."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)
