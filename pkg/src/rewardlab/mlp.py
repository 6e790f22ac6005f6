"""Multi-headed MLP attribute predictor: ReLU trunk, one sigmoid head per
attribute, trained with mini-batch Adam on binary cross-entropy.

The per-batch forward/backward work is delegated to a numeric backend (see
rewardlab.backend); everything here - initialization, shuffling, the update
loop - is plain numpy and identical for both backends, so a (seed, config,
data) triple fully determines the trained parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rewardlab import backend as backend_mod
from rewardlab.errors import TrainingError, ValidationError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Keep head probabilities strictly inside (0, 1) even for saturated logits.
_PROB_FLOOR = 1e-15


@dataclass
class MlpConfig:
    input_dim: int
    n_heads: int
    hidden_dims: list[int] = field(default_factory=lambda: [256, 256])
    learning_rate: float = 1e-4
    epochs: int = 100
    batch_size: int = 128
    seed: int = 0
    optimizer: str = "adam"  # or "sgd", kept for ablation
    head_loss_weights: list[float] | None = None

    def validate(self) -> None:
        if self.input_dim <= 0 or self.n_heads <= 0:
            raise ValidationError("input_dim and n_heads must be positive")
        if any(h <= 0 for h in self.hidden_dims):
            raise ValidationError("hidden dims must be positive")
        if self.learning_rate <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise ValidationError("learning_rate, epochs, batch_size must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")
        if self.head_loss_weights is not None and len(self.head_loss_weights) != self.n_heads:
            raise ValidationError("need one head loss weight per head")


@dataclass
class MlpModel:
    """Trunk weights plus one affine output row per head."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    config: MlpConfig

    @property
    def n_heads(self) -> int:
        return int(self.weights[-1].shape[1])

    def validate(self) -> None:
        dims = [self.config.input_dim, *self.config.hidden_dims, self.config.n_heads]
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValidationError("layer count does not match config")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                raise ValidationError(f"layer {i} has shape {w.shape}, expected {(dims[i], dims[i+1])}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValidationError(f"layer {i} has non-finite parameters")


def _head_weights(config: MlpConfig) -> np.ndarray:
    # Unweighted mean over heads by default.
    if config.head_loss_weights is None:
        return np.full(config.n_heads, 1.0 / config.n_heads)
    return np.asarray(config.head_loss_weights, dtype=np.float64)


def init_params(config: MlpConfig, rng: np.random.Generator):
    """He-uniform weights (ReLU trunk), zero biases."""
    dims = [config.input_dim, *config.hidden_dims, config.n_heads]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _as_batch(x: np.ndarray, dim: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[np.newaxis, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValidationError(f"{what} has shape {x.shape}, expected (*, {dim})")
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{what} contains non-finite values")
    return np.ascontiguousarray(x)


def mlp_forward(model: MlpModel, x: np.ndarray, backend=None) -> np.ndarray:
    """Per-head probabilities for a single input vector or a batch."""
    impl = backend or backend_mod.get_backend()
    single = np.asarray(x).ndim == 1
    batch = _as_batch(x, model.config.input_dim, "input")
    probs = impl.forward(model.weights, model.biases, batch)
    probs = np.clip(probs, _PROB_FLOOR, 1.0 - _PROB_FLOOR)
    return probs[0] if single else probs


def mlp_loss(model: MlpModel, x: np.ndarray, y: np.ndarray, backend=None) -> float:
    impl = backend or backend_mod.get_backend()
    batch = _as_batch(x, model.config.input_dim, "inputs")
    labels = _as_batch(y, model.config.n_heads, "labels")
    loss, _, _ = impl.loss_and_grad(
        model.weights, model.biases, batch, labels, _head_weights(model.config)
    )
    return loss


def mlp_gradient(model: MlpModel, x: np.ndarray, y: np.ndarray, backend=None):
    """Analytic gradient of the per-example (or per-batch mean) loss.

    Returns (loss, grad_weights, grad_biases) with shapes matching the
    parameters.
    """
    impl = backend or backend_mod.get_backend()
    batch = _as_batch(x, model.config.input_dim, "input")
    labels = _as_batch(y, model.config.n_heads, "label")
    if batch.shape[0] != labels.shape[0]:
        raise ValidationError("input and label batch sizes differ")
    return impl.loss_and_grad(
        model.weights, model.biases, batch, labels, _head_weights(model.config)
    )


def mlp_train(config: MlpConfig, inputs, labels, backend=None) -> MlpModel:
    """Train with seeded shuffling and Adam (or plain SGD) for a fixed epoch
    count; no early stopping.  Deterministic given the seed."""
    config.validate()
    impl = backend or backend_mod.get_backend()
    x = _as_batch(inputs, config.input_dim, "inputs")
    y = _as_batch(labels, config.n_heads, "labels")
    n = x.shape[0]
    if n == 0:
        raise ValidationError("empty training set")
    if x.shape[0] != y.shape[0]:
        raise ValidationError(f"{x.shape[0]} inputs vs {y.shape[0]} label rows")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValidationError("labels must be 0/1 per head")

    rng = np.random.default_rng(config.seed)
    weights, biases = init_params(config, rng)
    head_w = _head_weights(config)
    batch = min(config.batch_size, n)
    # One shuffle per epoch, drawn up front from the same stream either path.
    perms = np.stack([rng.permutation(n) for _ in range(config.epochs)]).astype(np.int64)
    use_adam = config.optimizer == "adam"

    if hasattr(impl, "train_epochs"):
        abort_epoch, abort_step, _ = impl.train_epochs(
            weights, biases, x, y, head_w, perms, batch,
            config.learning_rate, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, use_adam,
        )
        if abort_epoch >= 0:
            raise TrainingError(
                f"non-finite loss at epoch {abort_epoch}, step {abort_step} "
                f"(lr={config.learning_rate}, batch={batch})"
            )
    else:
        _train_stepwise(impl, config, weights, biases, x, y, head_w, perms, use_adam)
    model = MlpModel(weights=weights, biases=biases, config=config)
    model.validate()
    return model


def _train_stepwise(impl, config, weights, biases, x, y, head_w, perms, use_adam):
    if use_adam:
        m_w = [np.zeros_like(w) for w in weights]
        v_w = [np.zeros_like(w) for w in weights]
        m_b = [np.zeros_like(b) for b in biases]
        v_b = [np.zeros_like(b) for b in biases]
    n = x.shape[0]
    step = 0
    for epoch in range(config.epochs):
        order = perms[epoch]
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grad_w, grad_b = impl.loss_and_grad(
                weights, biases, x[idx], y[idx], head_w
            )
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss {loss} at epoch {epoch}, step {step} "
                    f"(lr={config.learning_rate}, batch={len(idx)})"
                )
            step += 1
            if use_adam:
                for p, g, m, v in zip(
                    weights + biases, grad_w + grad_b, m_w + m_b, v_w + v_b
                ):
                    impl.adam_step(
                        p.ravel(), g.ravel(), m.ravel(), v.ravel(), step,
                        config.learning_rate, ADAM_BETA1, ADAM_BETA2, ADAM_EPS,
                    )
            else:
                for p, g in zip(weights + biases, grad_w + grad_b):
                    p -= config.learning_rate * g
