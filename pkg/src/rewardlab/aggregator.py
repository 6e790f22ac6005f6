"""Class-weighted, L2-regularized logistic regression.

Used as the linear aggregator on top of per-attribute probabilities.  The
objective is

    F(w, b) = 0.5 ||w||^2 + C * sum_i omega_i * logloss_i

with C = 1.0, the bias unpenalized, and balanced class weights
omega_i = n / (2 * n_class(i)).  The problem is smooth and strictly convex
in w, so a damped Newton iteration drives the gradient norm below 1e-8 in a
handful of steps; everything is deterministic (zero init, no sampling).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from rewardlab.errors import ConvergenceWarning, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_C = 1.0
GRAD_TOL = 1e-8
MAX_ITER = 10000


@dataclass
class LinearAggregator:
    weights: np.ndarray
    bias: float
    class_weights: tuple[float, float]  # (label 0, label 1)
    n_iter: int = 0
    converged: bool = True

    def decision(self, probs: np.ndarray) -> np.ndarray:
        probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
        if probs.shape[1] != self.weights.shape[0]:
            raise ValidationError(
                f"{probs.shape[1]} inputs for an aggregator over {self.weights.shape[0]}"
            )
        return probs @ self.weights + self.bias

    def score(self, probs: np.ndarray) -> np.ndarray:
        return expit(self.decision(probs))


def balanced_class_weights(labels: np.ndarray) -> tuple[float, float]:
    """n / (2 * n_c) per class, so both classes carry equal total weight."""
    labels = np.asarray(labels)
    n = labels.shape[0]
    n_pos = int(np.sum(labels == 1))
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("both classes must be present")
    return n / (2.0 * n_neg), n / (2.0 * n_pos)


def _objective(w, b, x, y, omega, c):
    z = x @ w + b
    # softplus(z) - y*z, computed stably
    loss = np.logaddexp(0.0, z) - y * z
    return 0.5 * float(w @ w) + c * float(omega @ loss)


def aggregator_objective(agg: LinearAggregator, inputs, labels, c: float = DEFAULT_C) -> float:
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    w0, w1 = agg.class_weights
    omega = np.where(y == 1, w1, w0)
    return _objective(agg.weights, agg.bias, x, y, omega, c)


def aggregator_gradient(agg: LinearAggregator, inputs, labels, c: float = DEFAULT_C) -> np.ndarray:
    """Full gradient [dF/dw, dF/db] at the aggregator's parameters."""
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    w0, w1 = agg.class_weights
    omega = np.where(y == 1, w1, w0)
    r = omega * (expit(x @ agg.weights + agg.bias) - y)
    return np.concatenate([agg.weights + c * (x.T @ r), [c * float(r.sum())]])


def aggregator_train(
    stage1_outputs,
    coarse_labels,
    c: float = DEFAULT_C,
    grad_tol: float = GRAD_TOL,
    max_iter: int = MAX_ITER,
) -> LinearAggregator:
    """Fit the aggregator by damped Newton iteration.

    Stops when the euclidean gradient norm drops to `grad_tol`; past
    `max_iter` a ConvergenceWarning is issued and the current iterate is
    returned with converged=False.
    """
    x = np.asarray(stage1_outputs, dtype=np.float64)
    y = np.asarray(coarse_labels, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, np.newaxis]
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValidationError("stage1 outputs and coarse labels must align")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValidationError("coarse labels must be 0/1")
    if not np.all(np.isfinite(x)):
        raise ValidationError("stage1 outputs contain non-finite values")
    weight_neg, weight_pos = balanced_class_weights(y)
    omega = np.where(y == 1, weight_pos, weight_neg)

    dim = x.shape[1]
    w = np.zeros(dim)
    b = 0.0
    f = _objective(w, b, x, y, omega, c)
    n_iter = 0
    converged = False

    def gradient_at(w_, b_):
        residual = omega * (expit(x @ w_ + b_) - y)
        return np.concatenate([w_ + c * (x.T @ residual), [c * float(residual.sum())]])

    def armijo(step, slope):
        # Objective-merit backtracking.  Near the optimum the objective
        # decrease underflows, so a None here is not yet the floor.
        t = 1.0
        for _ in range(60):
            w_new = w + t * step[:dim]
            b_new = b + t * step[dim]
            if np.array_equal(w_new, w) and b_new == b:
                return None  # update underflowed; smaller t cannot help
            f_new = _objective(w_new, b_new, x, y, omega, c)
            if f_new <= f + 1e-4 * t * slope and f_new < f:
                return w_new, b_new, f_new
            t *= 0.5
        return None

    def gradient_merit(step, gnorm):
        # Endgame merit: the gradient norm keeps resolving long after the
        # objective has flattened to float precision.
        t = 1.0
        for _ in range(60):
            w_new = w + t * step[:dim]
            b_new = b + t * step[dim]
            if np.array_equal(w_new, w) and b_new == b:
                return None
            if float(np.linalg.norm(gradient_at(w_new, b_new))) < gnorm:
                return w_new, b_new, _objective(w_new, b_new, x, y, omega, c)
            t *= 0.5
        return None

    best_gnorm = np.inf
    stagnant = 0
    for n_iter in range(1, max_iter + 1):
        grad = gradient_at(w, b)
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= grad_tol:
            converged = True
            n_iter -= 1
            break
        # Give up once many consecutive iterations fail to shrink the
        # gradient meaningfully: the float64 floor.
        if gnorm < best_gnorm * (1.0 - 1e-6):
            best_gnorm = gnorm
            stagnant = 0
        else:
            stagnant += 1
            if stagnant >= 100:
                break

        p = expit(x @ w + b)
        r = c * omega * p * (1.0 - p)
        xr = x * r[:, np.newaxis]
        hess = np.empty((dim + 1, dim + 1))
        hess[:dim, :dim] = x.T @ xr + np.eye(dim)
        hess[:dim, dim] = xr.sum(axis=0)
        hess[dim, :dim] = hess[:dim, dim]
        hess[dim, dim] = float(r.sum())
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            # Saturated probabilities can make the bias row vanish.
            step = np.linalg.solve(hess + 1e-10 * np.eye(dim + 1), -grad)

        accepted = (
            armijo(step, float(grad @ step))
            or gradient_merit(step, gnorm)
            or armijo(-grad, -float(grad @ grad))
            or gradient_merit(-grad, gnorm)
        )
        if accepted is None:
            break  # no float-representable progress in any direction
        w, b, f = accepted

    if not converged:
        warnings.warn(
            f"aggregator did not reach grad tol {grad_tol} after {n_iter} iterations",
            ConvergenceWarning,
        )
        logger.warning("aggregator non-convergence after %d iterations", n_iter)
    return LinearAggregator(
        weights=w,
        bias=float(b),
        class_weights=(weight_neg, weight_pos),
        n_iter=n_iter,
        converged=converged,
    )
