"""Loss functions and evaluation metrics for the regression pipeline.

MSE is the default training loss; WMSE re-weights squared errors by
1 + |normalized residual| to push refinement stages toward the worst points.
RMSE and the maximum absolute error are the two reported metrics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LossSpec", "mse", "wmse", "residual_weights", "rmse", "linf"]


def _check_pair(pred: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.ndim != 1 or target.ndim != 1:
        raise ValueError("metrics expect 1-D vectors")
    if pred.shape[0] != target.shape[0]:
        raise ValueError(f"length mismatch: {pred.shape[0]} vs {target.shape[0]}")
    if pred.shape[0] == 0:
        raise ValueError("metrics are undefined on empty vectors")
    return pred, target


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean squared difference."""
    pred, target = _check_pair(pred, target)
    d = pred - target
    return float(np.mean(d * d))


def wmse(pred: np.ndarray, target: np.ndarray, weights: np.ndarray) -> float:
    """Weighted mean squared difference, sum(w * (pred-target)^2) / N.

    With all-unit weights this reduces to mse() bit-for-bit: the per-sample
    products and the reduction are shared with the unweighted path.
    """
    pred, target = _check_pair(pred, target)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != pred.shape:
        raise ValueError(f"weights length {weights.shape} != {pred.shape}")
    d = pred - target
    return float(np.mean(weights * (d * d)))


def residual_weights(norm_residuals: np.ndarray) -> np.ndarray:
    """Per-sample weights 1 + |r| used by the WMSE loss; always >= 1."""
    r = np.asarray(norm_residuals, dtype=np.float64)
    return 1.0 + np.abs(r)


def rmse(pred: np.ndarray, target: np.ndarray) -> float:
    """Root mean squared difference."""
    return float(np.sqrt(mse(pred, target)))


def linf(pred: np.ndarray, target: np.ndarray) -> float:
    """Maximum absolute difference; the empirical worst-case error."""
    pred, target = _check_pair(pred, target)
    return float(np.max(np.abs(pred - target)))


@dataclass(frozen=True)
class LossSpec:
    """Training-loss selection: plain MSE, or WMSE with frozen per-sample weights.

    Weights are built once from the stage's target residuals via
    residual_weights() and stay fixed during that stage's optimization, so the
    objective seen by the optimizer is stationary.
    """

    kind: str = "mse"
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("mse", "wmse"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "wmse":
            if self.weights is None:
                raise ValueError("wmse loss requires weights")
            w = np.asarray(self.weights, dtype=np.float64)
            if w.ndim != 1:
                raise ValueError("weights must be a 1-D vector")
            if not np.all(np.isfinite(w)) or np.any(w < 1.0):
                raise ValueError("wmse weights must be finite and >= 1")
            object.__setattr__(self, "weights", w)
        elif self.weights is not None:
            raise ValueError("mse loss takes no weights")

    def value(self, pred: np.ndarray, target: np.ndarray) -> float:
        if self.kind == "wmse":
            return wmse(pred, target, self.weights)
        return mse(pred, target)
