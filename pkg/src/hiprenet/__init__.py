"""Progressive residual training of small tanh networks for high-precision regression.

A small network is fitted first; each further stage trains a fresh network on
the previous model's residuals rescaled to unit maximum, and the ensemble sums
the stage outputs weighted by those residual magnitudes.  Optional extras:
residual-weighted losses, residual-proportional resampling, local patch
networks around the worst validation point, and training on a box larger than
the evaluation domain.
"""

from .boost import (
    HiPreNetModel,
    Stage,
    StageConfig,
    StageReport,
    StageResiduals,
    compute_stage_residuals,
    predict,
    sampling_distribution,
    train_hiprenet,
    train_stage,
    weighted_resample,
)
from .config import ExperimentConfig, parse_config
from .feynman import (
    Dataset,
    Domain,
    FunctionId,
    default_domain,
    eval_function,
    eval_function_batch,
    generate_dataset,
    read_csv,
    write_csv,
)
from .mlp import Mlp, MlpArchitecture, batch_forward, forward, init_params, loss_and_gradient
from .modelfile import load_model, save_model
from .numeric import Rng, dot, matvec, uniform_sample
from .objectives import LossSpec, linf, mse, residual_weights, rmse, wmse
from .optimizer import BfgsOptions, BfgsReport, bfgs_minimize, wolfe_line_search
from .patch import Patch, find_max_error_point, neighborhood, train_patch

__version__ = "0.1.0"

__all__ = [
    "HiPreNetModel",
    "Stage",
    "StageConfig",
    "StageReport",
    "StageResiduals",
    "compute_stage_residuals",
    "predict",
    "sampling_distribution",
    "train_hiprenet",
    "train_stage",
    "weighted_resample",
    "ExperimentConfig",
    "parse_config",
    "Dataset",
    "Domain",
    "FunctionId",
    "default_domain",
    "eval_function",
    "eval_function_batch",
    "generate_dataset",
    "read_csv",
    "write_csv",
    "Mlp",
    "MlpArchitecture",
    "batch_forward",
    "forward",
    "init_params",
    "loss_and_gradient",
    "load_model",
    "save_model",
    "Rng",
    "dot",
    "matvec",
    "uniform_sample",
    "LossSpec",
    "linf",
    "mse",
    "residual_weights",
    "rmse",
    "wmse",
    "BfgsOptions",
    "BfgsReport",
    "bfgs_minimize",
    "wolfe_line_search",
    "Patch",
    "find_max_error_point",
    "neighborhood",
    "train_patch",
]
