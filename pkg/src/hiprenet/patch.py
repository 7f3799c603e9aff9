"""Post-hoc local correction around the worst-predicted validation point.

A patch is a small network trained on the model's normalized residuals over
the training points inside a Euclidean ball centered at the validation point
with the largest absolute error.  At inference the patch output, multiplied
by the neighborhood's residual magnitude, is added for inputs inside the
closed ball and nothing else changes: predictions outside the ball stay
bit-identical.  The discontinuity at the ball boundary is accepted as-is.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .boost import (
    DEGENERATE_SCALE,
    HiPreNetModel,
    _objective_for,
    compute_stage_residuals,
    predict,
)
from .feynman import Dataset
from .mlp import Mlp, MlpArchitecture, init_params
from .numeric import Rng
from .objectives import LossSpec
from .optimizer import BfgsOptions, bfgs_minimize

__all__ = ["Patch", "PatchNeighborhoodError", "find_max_error_point", "neighborhood", "train_patch"]

log = logging.getLogger(__name__)


class PatchNeighborhoodError(ValueError):
    """The patch ball holds too few training points to fit the network."""


@dataclass
class Patch:
    """Indicator-gated local correction: applies inside the closed ball."""

    center: np.ndarray
    radius: float
    scale: float
    net: Mlp

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        if self.center.ndim != 1:
            raise ValueError("patch center must be a vector")
        if not self.radius > 0.0:
            raise ValueError(f"patch radius must be positive, got {self.radius}")
        if not self.scale > 0.0:
            raise ValueError(f"patch scale must be positive, got {self.scale}")
        if self.net.arch.input_dim != self.center.shape[0]:
            raise ValueError("patch network input_dim does not match its center")


def find_max_error_point(
    model: HiPreNetModel, ds_val: Dataset
) -> tuple[int, np.ndarray, float]:
    """Validation sample with the largest absolute error; ties pick the lowest index."""
    if len(ds_val) == 0:
        raise ValueError("empty validation set")
    err = np.abs(ds_val.y - predict(model, ds_val.X))
    idx = int(np.argmax(err))
    return idx, ds_val.X[idx].copy(), float(err[idx])


def neighborhood(X: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Ascending indices of rows within Euclidean distance ``radius`` of center."""
    X = np.asarray(X, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    if radius <= 0.0:
        raise ValueError(f"radius must be positive, got {radius}")
    if X.ndim != 2 or center.shape != (X.shape[1],):
        raise ValueError(f"shape mismatch: X {X.shape}, center {center.shape}")
    dist = np.linalg.norm(X - center, axis=1)
    return np.flatnonzero(dist <= radius)


def train_patch(
    model: HiPreNetModel,
    ds_train: Dataset,
    ds_val: Dataset,
    radius: float,
    arch: MlpArchitecture,
    opts: BfgsOptions,
    rng: Rng,
) -> HiPreNetModel:
    """Fit one patch around the worst validation point and append it.

    The patch trains on the normalized residuals of the training points
    inside the ball; its scale is that neighborhood's residual magnitude.
    Returns the model unchanged when the neighborhood residuals are already
    at machine noise.

    Raises:
        PatchNeighborhoodError: fewer than max(10, parameter_count/4)
            training points fall inside the ball; advise a larger radius.
    """
    if arch.input_dim != model.input_dim:
        raise ValueError("patch architecture input_dim does not match the model")
    _, center, worst = find_max_error_point(model, ds_val)
    idx = neighborhood(ds_train.X, center, radius)
    needed = max(10, arch.parameter_count / 4)
    if len(idx) < needed:
        raise PatchNeighborhoodError(
            f"only {len(idx)} training points within radius {radius} of the worst "
            f"validation point; need at least {needed:.0f} for {arch.parameter_count} "
            f"parameters. Increase the radius."
        )
    X_nb = ds_train.X[idx]
    raw_nb = compute_stage_residuals(model, ds_train).raw[idx]
    scale = float(np.max(np.abs(raw_nb)))
    if scale <= DEGENERATE_SCALE:
        log.info("neighborhood residuals at machine noise; no patch appended")
        return model
    target = raw_nb / scale

    params, report = bfgs_minimize(
        _objective_for(arch, X_nb, target, LossSpec()), init_params(arch, rng), opts
    )
    log.info(
        "patch at %s (worst err %.3e): %d points, fit loss %.3e (%s)",
        np.array2string(center, precision=4),
        worst,
        len(idx),
        report.final_loss,
        report.termination,
    )
    patch = Patch(center=center, radius=float(radius), scale=scale, net=Mlp(arch, params))
    return replace(model, patches=[*model.patches, patch])
