"""Command-line experiment runner.

Subcommands:
  generate  write train/validation CSVs plus a manifest for a config
  train     run the staged training per config (per-seed artifacts + summary)
  patch     append one local correction to a saved model
  eval      score a saved model on a dataset CSV
  report    summarize the per-seed reports of a finished run

Every failure exits nonzero after printing one JSON line to stderr with a
machine-readable error category.  A run's artifacts carry a manifest (config
hash, seeds, version); re-running `train` from the same config reproduces the
model files and the numeric report columns bit-identically.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .boost import StageReport, train_hiprenet
from .config import ConfigError, ExperimentConfig, parse_config
from .feynman import CsvFormatError, Dataset, generate_dataset, read_csv, write_csv
from .mlp import MlpArchitecture
from .modelfile import ModelFormatError, load_model, save_model
from .numeric import Rng
from .objectives import linf, rmse
from .optimizer import BfgsOptions
from .boost import compute_stage_residuals, predict
from .patch import PatchNeighborhoodError, train_patch

log = logging.getLogger(__name__)

RUN_FORMAT = "HIPRENET-RUN-v1"
_G = "%.17g"

REPORT_COLUMNS = "stage,e,train_rmse,train_linf,val_rmse,val_linf,iterations,seconds"


def _report_rows(reports: list[StageReport]) -> str:
    lines = [REPORT_COLUMNS]
    for r in reports:
        iters = r.optimizer.iterations_used if r.optimizer is not None else 0
        lines.append(
            ",".join(
                [
                    str(r.stage_index),
                    _G % r.scale,
                    _G % r.train_rmse,
                    _G % r.train_linf,
                    _G % r.val_rmse if r.val_rmse is not None else "",
                    _G % r.val_linf if r.val_linf is not None else "",
                    str(iters),
                    "%.3f" % r.seconds,
                ]
            )
        )
    return "\n".join(lines) + "\n"


def _domain_json(domain) -> list[list[float]]:
    return [[lo, hi] for lo, hi in domain.bounds]


def _stage_json(cfg) -> dict:
    return {
        "hidden_widths": list(cfg.hidden_widths),
        "loss": cfg.loss,
        "sampling": cfg.sampling,
        "resample_count": cfg.resample_count,
        "max_iterations": cfg.optimizer.max_iterations,
        "gradient_tolerance": cfg.optimizer.gradient_tolerance,
    }


def _ensure_datasets(cfg: ExperimentConfig, out_dir: Path) -> tuple[Dataset, Dataset]:
    """Load train/val CSVs from the run directory, generating them if absent."""
    train_path = out_dir / "train.csv"
    val_path = out_dir / "val.csv"
    if train_path.exists() and val_path.exists():
        log.info("using existing datasets in %s", out_dir)
        return read_csv(train_path), read_csv(val_path)
    ds_train = generate_dataset(cfg.function, cfg.train_count, cfg.train_domain, Rng(cfg.seed))
    ds_val = generate_dataset(
        cfg.function, cfg.val_count, cfg.eval_domain, Rng((cfg.seed + 1) % 2**64)
    )
    write_csv(ds_train, train_path)
    write_csv(ds_val, val_path)
    manifest = {
        "format": RUN_FORMAT,
        "kind": "datasets",
        "function": cfg.function.name,
        "train_count": cfg.train_count,
        "val_count": cfg.val_count,
        "train_domain": _domain_json(cfg.train_domain),
        "eval_domain": _domain_json(cfg.eval_domain),
        "data_seed": cfg.seed,
        "files": {"train": "train.csv", "val": "val.csv"},
    }
    (out_dir / "data-manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    log.info("generated %d train / %d val samples", len(ds_train), len(ds_val))
    return ds_train, ds_val


def cmd_generate(cfg: ExperimentConfig, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    _ensure_datasets(cfg, out_dir)
    print(f"wrote {out_dir / 'train.csv'}")
    print(f"wrote {out_dir / 'val.csv'}")
    print(f"wrote {out_dir / 'data-manifest.json'}")
    return 0


def cmd_train(cfg: ExperimentConfig, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    ds_train, ds_val = _ensure_datasets(cfg, out_dir)
    summary_rows = []
    failed = False
    for train_seed in cfg.seeds:
        seed_dir = out_dir / f"seed-{train_seed}"
        seed_dir.mkdir(exist_ok=True)
        t0 = time.perf_counter()
        model, reports = train_hiprenet(
            ds_train, ds_val, list(cfg.schedule), cfg.initial, cfg.tol, Rng(train_seed)
        )
        (seed_dir / "report.csv").write_text(_report_rows(reports))
        provenance = {"config_sha256": cfg.config_sha256, "seed": train_seed}
        save_model(model, seed_dir / "model.txt", provenance)
        manifest = {
            "format": RUN_FORMAT,
            "kind": "training-run",
            "config_sha256": cfg.config_sha256,
            "function": cfg.function.name,
            "train_count": cfg.train_count,
            "val_count": cfg.val_count,
            "train_domain": _domain_json(cfg.train_domain),
            "eval_domain": _domain_json(cfg.eval_domain),
            "data_seed": cfg.seed,
            "train_seed": train_seed,
            "tol": cfg.tol,
            "initial": _stage_json(cfg.initial),
            "schedule": [_stage_json(s) for s in cfg.schedule],
            "artifacts": {"model": "model.txt", "report": "report.csv"},
        }
        (seed_dir / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
        last = reports[-1]
        final = [r for r in reports if r.appended][-1]
        summary_rows.append((train_seed, len(model.stages), final))
        rejected = [r for r in reports if r.note.startswith("rejected")]
        if len(rejected) >= 2 and not last.appended:
            failed = True
        print(
            f"seed {train_seed}: {len(model.stages)} stages, "
            f"val rmse {final.val_rmse:.6e}, val linf {final.val_linf:.6e} "
            f"({time.perf_counter() - t0:.1f}s)"
        )
    best = min(range(len(summary_rows)), key=lambda i: summary_rows[i][2].val_rmse)
    lines = ["seed,stages,final_train_rmse,final_train_linf,final_val_rmse,final_val_linf,best"]
    for i, (s, n, r) in enumerate(summary_rows):
        lines.append(
            f"{s},{n},{_G % r.train_rmse},{_G % r.train_linf},"
            f"{_G % r.val_rmse},{_G % r.val_linf},{int(i == best)}"
        )
    (out_dir / "summary.csv").write_text("\n".join(lines) + "\n")
    print(f"best seed: {summary_rows[best][0]} (val rmse {summary_rows[best][2].val_rmse:.6e})")
    if failed:
        print(json.dumps({"error": "train", "message": "stage training failed"}), file=sys.stderr)
        return 1
    return 0


def cmd_eval(model_path: Path, data_path: Path, out_path: Path | None) -> int:
    model = load_model(model_path)
    ds = read_csv(data_path)
    if ds.input_dim != model.input_dim:
        raise ValueError(
            f"dataset has {ds.input_dim} input columns, model expects {model.input_dim}"
        )
    pred = predict(model, ds.X)
    r, l = rmse(pred, ds.y), linf(pred, ds.y)
    print(f"rmse {_G % r}")
    print(f"linf {_G % l}")
    if out_path is not None:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(f"rmse,linf\n{_G % r},{_G % l}\n")
    return 0


def cmd_patch(
    model_path: Path,
    val_path: Path,
    radius: float,
    widths: tuple[int, ...],
    iterations: int,
    seed: int,
    out_path: Path | None,
) -> int:
    model = load_model(model_path)
    ds_val = read_csv(val_path)
    pred_before = predict(model, ds_val.X)
    rmse_before, linf_before = rmse(pred_before, ds_val.y), linf(pred_before, ds_val.y)
    if compute_stage_residuals(model, ds_val).degenerate:
        print("no patch needed: residuals already at machine noise")
        return 0
    arch = MlpArchitecture(model.input_dim, widths)
    opts = BfgsOptions(max_iterations=iterations)
    # per the training protocol, the patch is fitted on the evaluation samples
    patched = train_patch(model, ds_val, ds_val, radius, arch, opts, Rng(seed))
    if len(patched.patches) == len(model.patches):
        print("no patch needed: neighborhood residuals at machine noise")
        return 0
    pred_after = predict(patched, ds_val.X)
    rmse_after, linf_after = rmse(pred_after, ds_val.y), linf(pred_after, ds_val.y)
    out_path = out_path if out_path is not None else model_path.with_suffix(".patched.txt")
    save_model(patched, out_path, {"patched_from": str(model_path), "seed": seed})
    metrics_path = out_path.parent / "patch-metrics.csv"
    metrics_path.write_text(
        "rmse_before,linf_before,rmse_after,linf_after\n"
        f"{_G % rmse_before},{_G % linf_before},{_G % rmse_after},{_G % linf_after}\n"
    )
    print(f"before: rmse {rmse_before:.6e} linf {linf_before:.6e}")
    print(f"after:  rmse {rmse_after:.6e} linf {linf_after:.6e}")
    print(f"wrote {out_path}")
    print(f"wrote {metrics_path}")
    return 0


def cmd_report(run_dir: Path) -> int:
    seed_dirs = sorted(run_dir.glob("seed-*"), key=lambda p: int(p.name.split("-", 1)[1]))
    if not seed_dirs:
        raise FileNotFoundError(f"no seed-*/ runs under {run_dir}")
    rows = []
    for sd in seed_dirs:
        report = (sd / "report.csv").read_text().strip().splitlines()
        if report[0] != REPORT_COLUMNS:
            raise CsvFormatError(f"{sd / 'report.csv'}: unexpected columns")
        last = report[-1].split(",")
        rows.append((int(sd.name.split("-", 1)[1]), len(report) - 2, last))
    best = min(range(len(rows)), key=lambda i: float(rows[i][2][4]))
    lines = ["seed,stages,final_train_rmse,final_train_linf,final_val_rmse,final_val_linf,best"]
    print("seed  stages  val_rmse      val_linf")
    for i, (s, n, last) in enumerate(rows):
        lines.append(f"{s},{n},{last[2]},{last[3]},{last[4]},{last[5]},{int(i == best)}")
        marker = " *" if i == best else ""
        print(f"{s:<5d} {n:<7d} {float(last[4]):.6e}  {float(last[5]):.6e}{marker}")
    (run_dir / "summary.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {run_dir / 'summary.csv'}")
    return 0


_CATEGORIES = [
    (ConfigError, "config"),
    (CsvFormatError, "dataset-format"),
    (ModelFormatError, "model-format"),
    (PatchNeighborhoodError, "patch-neighborhood"),
    (FileNotFoundError, "io"),
    (OSError, "io"),
    (ValueError, "invalid-input"),
]


def _widths_arg(raw: str) -> tuple[int, ...]:
    try:
        widths = tuple(int(t) for t in raw.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated widths, got {raw!r}")
    if not widths:
        raise argparse.ArgumentTypeError("widths must not be empty")
    return widths


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hiprenet", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    for name in ("generate", "train"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, required=True, help="experiment config file")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the training seed(s)")

    p = sub.add_parser("eval")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True, help="dataset CSV")
    p.add_argument("--out", type=Path, default=None, help="metrics CSV path")

    p = sub.add_parser("patch")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--val", type=Path, required=True, help="validation CSV")
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--widths", type=_widths_arg, default=(16, 16))
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None, help="patched model path")

    p = sub.add_parser("report")
    p.add_argument("--run", type=Path, required=True, help="training output directory")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        if args.command in ("generate", "train"):
            cfg = parse_config(args.config)
            if args.seed is not None:
                cfg = dataclasses.replace(cfg, seed=args.seed, seeds=(args.seed,))
            out_dir = args.out or cfg.output_dir
            if out_dir is None:
                raise ConfigError("no output directory: set output_dir in [experiment] or pass --out")
            if args.command == "generate":
                return cmd_generate(cfg, out_dir)
            return cmd_train(cfg, out_dir)
        if args.command == "eval":
            return cmd_eval(args.model, args.data, args.out)
        if args.command == "patch":
            return cmd_patch(
                args.model, args.val, args.radius, args.widths, args.iterations, args.seed, args.out
            )
        return cmd_report(args.run)
    except Exception as exc:  # noqa: BLE001 - single exit point with category
        for klass, category in _CATEGORIES:
            if isinstance(exc, klass):
                break
        else:
            category = "internal"
        print(json.dumps({"error": category, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
