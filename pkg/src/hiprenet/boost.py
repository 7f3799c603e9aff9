"""Progressive residual training: the staged ensemble and its training loops.

A model is one initial network plus an ordered list of refinement stages.
Each stage stores the L-infinity magnitude of the residual it was trained on
(its scale) and a network fitted to that residual divided by the scale, so
every stage learns a target whose maximum magnitude is exactly 1.  The
prediction is the initial output plus the scale-weighted stage outputs, plus
any local patch corrections.

Residuals are formed with an error-free summation of the prediction terms
(see numeric.compensated_row_sum): once stage residuals drop many orders of
magnitude below the targets, plain accumulation would leave rounding noise at
the magnitude of the prediction and poison both the next stage's training
target and the stagewise error bookkeeping.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

import numpy as np

from .feynman import Dataset
from .mlp import Mlp, MlpArchitecture, NonFiniteLossError, batch_forward, init_params, loss_and_gradient
from .numeric import Rng, compensated_row_sum
from .objectives import LossSpec, residual_weights, rmse, linf
from .optimizer import BfgsOptions, BfgsReport, bfgs_minimize

if TYPE_CHECKING:
    from .patch import Patch

__all__ = [
    "DEGENERATE_SCALE",
    "StageConfig",
    "Stage",
    "HiPreNetModel",
    "StageResiduals",
    "StageReport",
    "predict",
    "compute_stage_residuals",
    "sampling_distribution",
    "weighted_resample",
    "train_stage",
    "train_hiprenet",
]

log = logging.getLogger(__name__)

# residual scales at or below this are treated as converged-to-machine-noise
DEGENERATE_SCALE = 1e-15


@dataclass(frozen=True)
class StageConfig:
    """Settings for one refinement stage (or the initial fit)."""

    hidden_widths: tuple[int, ...]
    loss: str = "mse"
    optimizer: BfgsOptions = field(default_factory=BfgsOptions)
    sampling: str = "full"
    resample_count: int | None = None  # None: same size as the training set

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if not self.hidden_widths:
            raise ValueError("hidden_widths must be nonempty")
        if self.loss not in ("mse", "wmse"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.sampling not in ("full", "weighted"):
            raise ValueError(f"unknown sampling {self.sampling!r}")
        if self.resample_count is not None and self.resample_count < 1:
            raise ValueError("resample_count must be >= 1")


@dataclass
class Stage:
    """One refinement: multiplier applied to the network's normalized output."""

    scale: float
    net: Mlp


@dataclass
class HiPreNetModel:
    """Initial network, refinement stages, and optional local patches."""

    initial: Mlp
    stages: list[Stage] = field(default_factory=list)
    patches: list["Patch"] = field(default_factory=list)

    @property
    def input_dim(self) -> int:
        return self.initial.arch.input_dim

    def truncated(self, n_stages: int) -> "HiPreNetModel":
        """The model as it stood after ``n_stages`` refinements, without patches."""
        return HiPreNetModel(self.initial, list(self.stages[:n_stages]), [])


@dataclass
class StageResiduals:
    """Raw residuals, their max magnitude, and the unit-scaled training target."""

    raw: np.ndarray
    scale: float
    normalized: np.ndarray | None  # None when degenerate
    degenerate: bool


@dataclass
class StageReport:
    """Metrics for one training step of the pipeline.

    ``scale`` is the stage's multiplier (the residual magnitude it consumed);
    for the initial network row it is the residual magnitude it produced.
    ``contraction`` is the stage network's worst-case error on its unit-scaled
    target over the full training set, so the residual magnitude after the
    stage equals contraction * scale.  The initial row reuses its produced
    residual magnitude there, having no normalized target.
    """

    stage_index: int
    scale: float
    train_rmse: float
    train_linf: float
    val_rmse: float | None
    val_linf: float | None
    contraction: float
    optimizer: BfgsReport | None
    seconds: float
    appended: bool
    note: str = ""


def _prediction_terms(model: HiPreNetModel, X: np.ndarray) -> list[np.ndarray]:
    """Additive prediction terms per sample, stage-ascending then patches."""
    terms = [batch_forward(model.initial, X)]
    for st in model.stages:
        terms.append(st.scale * batch_forward(st.net, X))
    for p in model.patches:
        inside = np.linalg.norm(X - p.center, axis=1) <= p.radius
        t = np.zeros(X.shape[0])
        if inside.any():
            t[inside] = p.scale * batch_forward(p.net, X[inside])
        terms.append(t)
    return terms


def predict(model: HiPreNetModel, X: np.ndarray) -> np.ndarray:
    """Ensemble prediction: stage-ascending sequential sum plus patch terms."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ValueError(f"input shape {X.shape} does not match input_dim {model.input_dim}")
    terms = _prediction_terms(model, X)
    out = terms[0].copy()
    for t in terms[1:]:
        out += t
    return out


def compute_stage_residuals(model: HiPreNetModel, ds: Dataset) -> StageResiduals:
    """Residuals y - predict(model, X), their max magnitude, and the unit target.

    The subtraction is evaluated with error-free accumulation over the
    prediction terms, so the result is accurate relative to the residual
    itself (within ~1 ulp of the plain stage-ascending sum).
    """
    if len(ds) == 0:
        raise ValueError("empty dataset")
    terms = _prediction_terms(model, ds.X)
    raw = compensated_row_sum([ds.y] + [-t for t in terms])
    scale = float(np.max(np.abs(raw)))
    if scale <= DEGENERATE_SCALE:
        return StageResiduals(raw, scale, None, True)
    return StageResiduals(raw, scale, raw / scale, False)


def sampling_distribution(normalized_residuals: np.ndarray) -> np.ndarray:
    """Selection probabilities proportional to |residual|; sums to 1."""
    r = np.abs(np.asarray(normalized_residuals, dtype=np.float64))
    total = float(r.sum())
    if total <= 0.0:
        raise ValueError("all residuals are zero; nothing to sample from")
    return r / total


def weighted_resample(ds: Dataset, p: np.ndarray, count: int, rng: Rng) -> np.ndarray:
    """Indices of ``count`` rows drawn i.i.d. with replacement according to p."""
    p = np.asarray(p, dtype=np.float64)
    n = len(ds)
    if p.shape != (n,):
        raise ValueError(f"distribution length {p.shape} != dataset size {n}")
    if np.any(p < 0.0) or abs(float(p.sum()) - 1.0) > 1e-9:
        raise ValueError("p is not a probability distribution")
    if count < 1:
        raise ValueError("resample count must be >= 1")
    edges = np.cumsum(p)
    edges[-1] = 1.0
    u = rng.random(count)
    return np.minimum(np.searchsorted(edges, u, side="right"), n - 1).astype(np.intp)


def _objective_for(arch, X, y, loss):
    def objective(params):
        try:
            return loss_and_gradient(arch, params, X, y, loss)
        except NonFiniteLossError:
            # signal the optimizer to back off instead of aborting the stage
            return np.inf, np.zeros_like(params)

    return objective


def _val_metrics(model: HiPreNetModel, ds_val: Dataset | None):
    if ds_val is None:
        return None, None
    pred = predict(model, ds_val.X)
    return rmse(pred, ds_val.y), linf(pred, ds_val.y)


def train_stage(
    model: HiPreNetModel,
    ds: Dataset,
    cfg: StageConfig,
    rng: Rng,
    ds_val: Dataset | None = None,
) -> tuple[HiPreNetModel, StageReport]:
    """Fit one refinement network to the model's current normalized residuals.

    Steps: compute residuals and their scale; pick the training subset (full,
    or a weighted resample favouring large residuals); build the loss (WMSE
    weights come from the selected subset's residuals and stay frozen); train
    a freshly initialized network with BFGS; append it with the scale.

    The model is returned unchanged when the residuals are already at machine
    noise (note "degenerate") or the optimizer collapsed to non-finite values
    (note "rejected").  Draw order per stage is fixed: resampling indices
    first, then parameter initialization.
    """
    t0 = time.perf_counter()
    if ds.input_dim != model.input_dim:
        raise ValueError("dataset and model input dims differ")
    index = len(model.stages) + 1  # row 0 is the initial network
    res = compute_stage_residuals(model, ds)
    if res.degenerate:
        vr, vl = _val_metrics(model, ds_val)
        report = StageReport(
            stage_index=index,
            scale=res.scale,
            train_rmse=float(np.sqrt(np.mean(res.raw**2))),
            train_linf=res.scale,
            val_rmse=vr,
            val_linf=vl,
            contraction=0.0,
            optimizer=None,
            seconds=time.perf_counter() - t0,
            appended=False,
            note="degenerate",
        )
        return model, report

    if cfg.sampling == "weighted":
        p = sampling_distribution(res.normalized)
        count = cfg.resample_count if cfg.resample_count is not None else len(ds)
        sel = weighted_resample(ds, p, count, rng)
        X_fit, target_fit = ds.X[sel], res.normalized[sel]
    else:
        X_fit, target_fit = ds.X, res.normalized
    if cfg.loss == "wmse":
        loss = LossSpec("wmse", residual_weights(target_fit))
    else:
        loss = LossSpec()

    arch = MlpArchitecture(model.input_dim, cfg.hidden_widths)
    params0 = init_params(arch, rng)
    params, opt_report = bfgs_minimize(_objective_for(arch, X_fit, target_fit, loss), params0, cfg.optimizer)

    if opt_report.termination == "non_finite":
        vr, vl = _val_metrics(model, ds_val)
        report = StageReport(
            stage_index=index,
            scale=res.scale,
            train_rmse=float(np.sqrt(np.mean(res.raw**2))),
            train_linf=res.scale,
            val_rmse=vr,
            val_linf=vl,
            contraction=1.0,
            optimizer=opt_report,
            seconds=time.perf_counter() - t0,
            appended=False,
            note="rejected: optimizer hit non-finite values",
        )
        log.warning("stage %d rejected: optimizer hit non-finite values", index)
        return model, report

    net = Mlp(arch, params)
    new_model = replace(model, stages=[*model.stages, Stage(res.scale, net)])
    contraction = float(np.max(np.abs(res.normalized - batch_forward(net, ds.X))))
    after = compute_stage_residuals(new_model, ds)
    vr, vl = _val_metrics(new_model, ds_val)
    report = StageReport(
        stage_index=index,
        scale=res.scale,
        train_rmse=float(np.sqrt(np.mean(after.raw**2))),
        train_linf=after.scale,
        val_rmse=vr,
        val_linf=vl,
        contraction=contraction,
        optimizer=opt_report,
        seconds=time.perf_counter() - t0,
        appended=True,
    )
    return new_model, report


def train_hiprenet(
    ds_train: Dataset,
    ds_val: Dataset,
    schedule: list[StageConfig],
    initial_cfg: StageConfig,
    tol: float,
    rng: Rng,
) -> tuple[HiPreNetModel, list[StageReport]]:
    """Train the initial network, then refinement stages per the schedule.

    The initial network always trains on the raw targets with plain MSE.
    Stages stop early once the validation RMSE is at or below ``tol``, the
    residuals degenerate to machine noise, or two consecutive stages fail.

    Returns the model and one report per trained network (initial first).
    """
    if len(ds_train) == 0 or len(ds_val) == 0:
        raise ValueError("datasets must be nonempty")
    if ds_train.input_dim != ds_val.input_dim:
        raise ValueError("train/validation input dims differ")

    t0 = time.perf_counter()
    arch0 = MlpArchitecture(ds_train.input_dim, initial_cfg.hidden_widths)
    params0 = init_params(arch0, rng)
    params, opt_report = bfgs_minimize(
        _objective_for(arch0, ds_train.X, ds_train.y, LossSpec()), params0, initial_cfg.optimizer
    )
    model = HiPreNetModel(Mlp(arch0, params))
    res0 = compute_stage_residuals(model, ds_train)
    vr, vl = _val_metrics(model, ds_val)
    reports = [
        StageReport(
            stage_index=0,
            scale=res0.scale,
            train_rmse=float(np.sqrt(np.mean(res0.raw**2))),
            train_linf=res0.scale,
            val_rmse=vr,
            val_linf=vl,
            contraction=res0.scale,
            optimizer=opt_report,
            seconds=time.perf_counter() - t0,
            appended=True,
            note="initial",
        )
    ]
    log.info("initial network: train rmse %.3e, val rmse %.3e", reports[0].train_rmse, vr)

    failures = 0
    for cfg in schedule:
        if reports[-1].val_rmse is not None and reports[-1].val_rmse <= tol:
            log.info("validation rmse below tolerance; stopping")
            break
        model_next, report = train_stage(model, ds_train, cfg, rng, ds_val)
        reports.append(report)
        if report.appended:
            model = model_next
            failures = 0
            log.info(
                "stage %d: scale %.3e, contraction %.3e, val rmse %.3e",
                report.stage_index,
                report.scale,
                report.contraction,
                report.val_rmse,
            )
        elif report.note == "degenerate":
            log.info("residuals at machine noise; stopping")
            break
        else:
            failures += 1
            if failures >= 2:
                log.warning("two consecutive stage failures; stopping")
                break
    return model, reports
