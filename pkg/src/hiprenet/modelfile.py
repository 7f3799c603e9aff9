"""Versioned text format for trained models.

Line 1 is the magic header ``HIPRENET-MODEL-v1``; the rest is one JSON
object.  Every float is serialized as a 17-significant-digit decimal (vectors
as space-separated strings), which round-trips 64-bit values exactly, so a
loaded model predicts bit-identically to the saved one.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .boost import HiPreNetModel, Stage
from .mlp import Mlp, MlpArchitecture
from .patch import Patch

__all__ = ["MAGIC", "ModelFormatError", "save_model", "load_model"]

MAGIC = "HIPRENET-MODEL-v1"
_FMT = "%.17g"


class ModelFormatError(ValueError):
    pass


def _fmt_vec(v: np.ndarray) -> str:
    return " ".join(_FMT % x for x in np.asarray(v, dtype=np.float64).ravel())


def _net_to_json(net: Mlp) -> dict:
    return {
        "input_dim": net.arch.input_dim,
        "hidden_widths": list(net.arch.hidden_widths),
        "activation": net.arch.activation,
        "params": _fmt_vec(net.params),
    }


def save_model(model: HiPreNetModel, path, provenance: dict | None = None) -> None:
    """Write the model, preserving stage and patch order."""
    body = {
        "input_dim": model.input_dim,
        "initial": _net_to_json(model.initial),
        "stages": [
            {"scale": _FMT % st.scale, "net": _net_to_json(st.net)} for st in model.stages
        ],
        "patches": [
            {
                "center": _fmt_vec(p.center),
                "radius": _FMT % p.radius,
                "scale": _FMT % p.scale,
                "net": _net_to_json(p.net),
            }
            for p in model.patches
        ],
        "provenance": provenance or {},
    }
    with open(path, "w", newline="") as fh:
        fh.write(MAGIC + "\n")
        fh.write(json.dumps(body, indent=1) + "\n")


def _get(obj: dict, field: str, where: str):
    if field not in obj:
        raise ModelFormatError(f"missing field {where}.{field}")
    return obj[field]


def _parse_float(raw, where: str) -> float:
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ModelFormatError(f"corrupted float in field {where}: {raw!r}") from None


def _parse_vec(raw, where: str) -> np.ndarray:
    if not isinstance(raw, str):
        raise ModelFormatError(f"field {where} must be a string of decimals")
    try:
        return np.array([float(t) for t in raw.split()], dtype=np.float64)
    except ValueError:
        raise ModelFormatError(f"corrupted float in field {where}") from None


def _net_from_json(obj: dict, where: str) -> Mlp:
    if not isinstance(obj, dict):
        raise ModelFormatError(f"field {where} must be an object")
    try:
        arch = MlpArchitecture(
            input_dim=int(_get(obj, "input_dim", where)),
            hidden_widths=tuple(int(w) for w in _get(obj, "hidden_widths", where)),
            activation=str(_get(obj, "activation", where)),
        )
        return Mlp(arch, _parse_vec(_get(obj, "params", where), f"{where}.params"))
    except ModelFormatError:
        raise
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"invalid network in field {where}: {exc}") from None


def load_model(path) -> HiPreNetModel:
    """Read a model written by save_model; errors name the offending field."""
    text = Path(path).read_text()
    lines = text.split("\n", 1)
    header = lines[0].strip()
    if header != MAGIC:
        if header.startswith("HIPRENET-MODEL-"):
            raise ModelFormatError(f"unsupported model format version {header!r}")
        raise ModelFormatError(f"{path}: not a model file (bad magic header)")
    if len(lines) < 2 or not lines[1].strip():
        raise ModelFormatError(f"{path}: truncated file (no body)")
    try:
        body = json.loads(lines[1])
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: truncated or corrupt body: {exc}") from None

    initial = _net_from_json(_get(body, "initial", "model"), "initial")
    stages = []
    for i, st in enumerate(_get(body, "stages", "model")):
        where = f"stages[{i}]"
        stages.append(
            Stage(
                scale=_parse_float(_get(st, "scale", where), f"{where}.scale"),
                net=_net_from_json(_get(st, "net", where), f"{where}.net"),
            )
        )
    patches = []
    for i, pj in enumerate(_get(body, "patches", "model")):
        where = f"patches[{i}]"
        try:
            patches.append(
                Patch(
                    center=_parse_vec(_get(pj, "center", where), f"{where}.center"),
                    radius=_parse_float(_get(pj, "radius", where), f"{where}.radius"),
                    scale=_parse_float(_get(pj, "scale", where), f"{where}.scale"),
                    net=_net_from_json(_get(pj, "net", where), f"{where}.net"),
                )
            )
        except ModelFormatError:
            raise
        except ValueError as exc:
            raise ModelFormatError(f"invalid field {where}: {exc}") from None
    model = HiPreNetModel(initial=initial, stages=stages, patches=patches)
    if int(_get(body, "input_dim", "model")) != model.input_dim:
        raise ModelFormatError("field input_dim disagrees with the initial network")
    return model
