"""Experiment configuration: one INI-style file fully determines one run.

Grammar (key = value, sections in brackets; comments start with # or ;):

    [experiment]
    function     = I_13_12        # one of the benchmark function tags
    train_count  = 20000
    val_count    = 20000
    seed         = 7              # dataset seed; also the default training seed
    seeds        = 7, 8, 9       # optional: training-seed sweep
    tol          = 0.0            # stop stages once validation RMSE <= tol
    output_dir   = runs/example   # optional; the CLI --out flag overrides

    [train_domain]                # sampling box for training data
    x1 = 1, 5
    x2 = 1, 5

    [eval_domain]                 # box for validation data; defaults to train_domain
    x1 = 1.1, 4.9
    x2 = 1.1, 4.9

    [optimizer]                   # defaults for every network; all keys optional
    max_iterations        = 2000
    gradient_tolerance    = 1e-12
    wolfe_c1              = 1e-4
    wolfe_c2              = 0.9
    max_line_search_steps = 30

    [initial]                     # the initial network (always trained with MSE)
    hidden_widths = 5, 5, 5, 5, 5

    [stage.1]                     # refinement stages, numbered from 1
    hidden_widths = 10, 10, 10, 10, 10
    loss          = mse           # or wmse
    sampling      = full          # or weighted
    # resample_count = 20000      # optional; defaults to the training-set size
    # max_iterations = 500        # any [optimizer] key can be overridden here

    [patch]                       # optional; used by the `patch` subcommand
    radius         = 0.75
    hidden_widths  = 16, 16
    max_iterations = 1000
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, replace
from pathlib import Path

from .boost import StageConfig
from .feynman import Domain, FunctionId
from .optimizer import BfgsOptions

__all__ = ["ConfigError", "PatchSettings", "ExperimentConfig", "parse_config"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PatchSettings:
    radius: float
    hidden_widths: tuple[int, ...]
    optimizer: BfgsOptions


@dataclass(frozen=True)
class ExperimentConfig:
    function: FunctionId
    train_count: int
    val_count: int
    train_domain: Domain
    eval_domain: Domain
    initial: StageConfig
    schedule: tuple[StageConfig, ...]
    seed: int
    seeds: tuple[int, ...]
    tol: float
    patch: PatchSettings | None
    output_dir: Path | None
    config_sha256: str = ""


def _ints(raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(t.strip()) for t in raw.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {raw!r}") from None


def _domain_from_section(sec, name: str) -> Domain:
    bounds = []
    for j, key in enumerate(sec, start=1):
        if key != f"x{j}":
            raise ConfigError(f"[{name}] keys must be x1..xd in order, found {key!r}")
        parts = [t.strip() for t in sec[key].split(",")]
        if len(parts) != 2:
            raise ConfigError(f"[{name}] {key}: expected 'lo, hi', got {sec[key]!r}")
        try:
            bounds.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise ConfigError(f"[{name}] {key}: non-numeric bound in {sec[key]!r}") from None
    if not bounds:
        raise ConfigError(f"[{name}] section is empty")
    try:
        return Domain(tuple(bounds))
    except ValueError as exc:
        raise ConfigError(f"[{name}]: {exc}") from None


def _optimizer_from(sec, defaults: BfgsOptions) -> BfgsOptions:
    kw = {}
    for key, conv in (
        ("max_iterations", int),
        ("gradient_tolerance", float),
        ("wolfe_c1", float),
        ("wolfe_c2", float),
        ("max_line_search_steps", int),
    ):
        if key in sec:
            try:
                kw[key] = conv(sec[key])
            except ValueError:
                raise ConfigError(f"{key}: expected a number, got {sec[key]!r}") from None
    if not kw:
        return defaults
    try:
        return replace(defaults, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _stage_from(sec, name: str, opt_defaults: BfgsOptions) -> StageConfig:
    if "hidden_widths" not in sec:
        raise ConfigError(f"[{name}] needs hidden_widths")
    widths = _ints(sec["hidden_widths"])
    kw = {}
    if "loss" in sec:
        kw["loss"] = sec["loss"].strip()
    if "sampling" in sec:
        kw["sampling"] = sec["sampling"].strip()
    if "resample_count" in sec:
        try:
            kw["resample_count"] = int(sec["resample_count"])
        except ValueError:
            raise ConfigError(f"[{name}] resample_count must be an integer") from None
    try:
        return StageConfig(
            hidden_widths=widths, optimizer=_optimizer_from(sec, opt_defaults), **kw
        )
    except ValueError as exc:
        raise ConfigError(f"[{name}]: {exc}") from None


def parse_config(path) -> ExperimentConfig:
    """Parse and validate an experiment file; raises ConfigError on any defect."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None

    if "experiment" not in cp:
        raise ConfigError(f"{path}: missing [experiment] section")
    exp = cp["experiment"]
    try:
        function = FunctionId[exp.get("function", "")]
    except KeyError:
        names = ", ".join(f.name for f in FunctionId)
        raise ConfigError(
            f"unknown function {exp.get('function')!r}; expected one of {names}"
        ) from None

    def _int_field(key: str) -> int:
        if key not in exp:
            raise ConfigError(f"[experiment] needs {key}")
        try:
            v = int(exp[key])
        except ValueError:
            raise ConfigError(f"[experiment] {key} must be an integer") from None
        if v < 1:
            raise ConfigError(f"[experiment] {key} must be >= 1, got {v}")
        return v

    train_count = _int_field("train_count")
    val_count = _int_field("val_count")
    try:
        seed = int(exp.get("seed", "0"))
        tol = float(exp.get("tol", "0.0"))
    except ValueError as exc:
        raise ConfigError(f"[experiment]: {exc}") from None
    seeds = _ints(exp["seeds"]) if "seeds" in exp else (seed,)
    if not seeds:
        raise ConfigError("[experiment] seeds must not be empty")
    output_dir = Path(exp["output_dir"]) if "output_dir" in exp else None

    if "train_domain" not in cp:
        raise ConfigError(f"{path}: missing [train_domain] section")
    train_domain = _domain_from_section(cp["train_domain"], "train_domain")
    if train_domain.dim != function.dimensionality:
        raise ConfigError(
            f"[train_domain] has {train_domain.dim} variables, "
            f"{function.value} needs {function.dimensionality}"
        )
    if "eval_domain" in cp:
        eval_domain = _domain_from_section(cp["eval_domain"], "eval_domain")
        if eval_domain.dim != function.dimensionality:
            raise ConfigError(
                f"[eval_domain] has {eval_domain.dim} variables, "
                f"{function.value} needs {function.dimensionality}"
            )
    else:
        eval_domain = train_domain

    opt_defaults = (
        _optimizer_from(cp["optimizer"], BfgsOptions()) if "optimizer" in cp else BfgsOptions()
    )
    if "initial" not in cp:
        raise ConfigError(f"{path}: missing [initial] section")
    initial = _stage_from(cp["initial"], "initial", opt_defaults)
    if initial.loss != "mse" or initial.sampling != "full":
        raise ConfigError("[initial] always trains with loss=mse on the full dataset")

    stage_names = sorted(
        (s for s in cp.sections() if s.startswith("stage.")),
        key=lambda s: int(s.split(".", 1)[1]),
    )
    expected = [f"stage.{i + 1}" for i in range(len(stage_names))]
    if stage_names != expected:
        raise ConfigError(f"stage sections must be numbered 1..n, found {stage_names}")
    schedule = tuple(_stage_from(cp[s], s, opt_defaults) for s in stage_names)

    patch = None
    if "patch" in cp:
        psec = cp["patch"]
        if "radius" not in psec or "hidden_widths" not in psec:
            raise ConfigError("[patch] needs radius and hidden_widths")
        try:
            radius = float(psec["radius"])
        except ValueError:
            raise ConfigError("[patch] radius must be a number") from None
        patch = PatchSettings(
            radius=radius,
            hidden_widths=_ints(psec["hidden_widths"]),
            optimizer=_optimizer_from(psec, opt_defaults),
        )

    return ExperimentConfig(
        function=function,
        train_count=train_count,
        val_count=val_count,
        train_domain=train_domain,
        eval_domain=eval_domain,
        initial=initial,
        schedule=schedule,
        seed=seed,
        seeds=seeds,
        tol=tol,
        patch=patch,
        output_dir=output_dir,
        config_sha256=hashlib.sha256(text.encode()).hexdigest(),
    )
