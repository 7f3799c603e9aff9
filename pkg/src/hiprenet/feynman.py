"""Closed-form benchmark functions, box domains, dataset generation and CSV I/O.

Five dimensionless physics relations serve as regression targets.  Samples
are drawn uniformly over a per-variable box; draws violating a function's
validity constraint are rejected and redrawn so the kept points stay uniform
over the feasible region.

CSV schema: header ``x1,...,xd,f``, one sample per row, decimal floats with
17 significant digits (lossless for 64-bit values), LF line endings.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from .numeric import Rng

__all__ = [
    "FunctionId",
    "Domain",
    "Dataset",
    "CsvFormatError",
    "eval_function",
    "eval_function_batch",
    "generate_dataset",
    "default_domain",
    "write_csv",
    "read_csv",
]

log = logging.getLogger(__name__)

FLOAT_FMT = "%.17g"


class CsvFormatError(ValueError):
    pass


class FunctionId(enum.Enum):
    I_6_2 = "I.6.2"
    I_9_18 = "I.9.18"
    I_13_12 = "I.13.12"
    I_26_2 = "I.26.2"
    I_29_16 = "I.29.16"

    @property
    def dimensionality(self) -> int:
        return _DIMENSIONS[self]


_DIMENSIONS = {
    FunctionId.I_6_2: 2,
    FunctionId.I_9_18: 6,
    FunctionId.I_13_12: 2,
    FunctionId.I_26_2: 2,
    FunctionId.I_29_16: 3,
}


def _feasible(fid: FunctionId, X: np.ndarray) -> tuple[np.ndarray, str]:
    """Validity mask over rows plus the constraint description for errors."""
    if fid is FunctionId.I_6_2:
        return X[:, 1] != 0.0, "sigma must be nonzero"
    if fid is FunctionId.I_9_18:
        d = (X[:, 1] - 1.0) ** 2 + (X[:, 2] - X[:, 3]) ** 2 + (X[:, 4] - X[:, 5]) ** 2
        return d > 0.0, "denominator (b-1)^2 + (c-d)^2 + (e-f)^2 must be positive"
    if fid is FunctionId.I_13_12:
        return X[:, 1] != 0.0, "b must be nonzero"
    if fid is FunctionId.I_26_2:
        return np.abs(X[:, 0] * np.sin(X[:, 1])) <= 1.0, "|n*sin(theta2)| must be <= 1"
    return np.ones(X.shape[0], dtype=bool), ""


def eval_function_batch(fid: FunctionId, X: np.ndarray) -> np.ndarray:
    """Exact closed-form values for a batch of inputs, one row per sample."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != fid.dimensionality:
        raise ValueError(
            f"{fid.value} takes {fid.dimensionality} variables, got shape {X.shape}"
        )
    ok, constraint = _feasible(fid, X)
    if not ok.all():
        k = int(np.flatnonzero(~ok)[0])
        raise ValueError(f"{fid.value} constraint violated at sample {k}: {constraint}")
    if fid is FunctionId.I_6_2:
        theta, sigma = X[:, 0], X[:, 1]
        return np.exp(-(theta**2) / (2.0 * sigma**2)) / np.sqrt(2.0 * np.pi * sigma**2)
    if fid is FunctionId.I_9_18:
        a, b, c, d, e, f = (X[:, j] for j in range(6))
        return a / ((b - 1.0) ** 2 + (c - d) ** 2 + (e - f) ** 2)
    if fid is FunctionId.I_13_12:
        a, b = X[:, 0], X[:, 1]
        # a*(1/b - 1) rewritten so the cancellation near b=1 happens exactly
        return a * (1.0 - b) / b
    if fid is FunctionId.I_26_2:
        n, theta2 = X[:, 0], X[:, 1]
        return np.arcsin(n * np.sin(theta2))
    a, t1, t2 = X[:, 0], X[:, 1], X[:, 2]
    # half-angle form of 1 + a^2 - 2a*cos(dt): both terms nonnegative for
    # a >= 0, so the radicand stays relatively accurate where the direct
    # form cancels catastrophically (a near 1, angles nearly equal)
    half = 0.5 * (t1 - t2)
    rad_pos = (1.0 - a) ** 2 + 4.0 * a * np.sin(half) ** 2
    rad_neg = (1.0 + a) ** 2 - 4.0 * a * np.cos(half) ** 2
    return np.sqrt(np.maximum(np.where(a >= 0.0, rad_pos, rad_neg), 0.0))


def eval_function(fid: FunctionId, x: np.ndarray) -> float:
    """Exact closed-form value at one input point."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("eval_function expects a 1-D input vector")
    return float(eval_function_batch(fid, x[None, :])[0])


@dataclass(frozen=True)
class Domain:
    """Per-variable (lo, hi) bounds of an axis-aligned sampling box."""

    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        clean = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", clean)
        if len(clean) == 0:
            raise ValueError("domain needs at least one variable")
        for j, (lo, hi) in enumerate(clean):
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise ValueError(f"variable {j + 1}: bounds must be finite")
            if lo >= hi:
                raise ValueError(f"variable {j + 1}: need lo < hi, got ({lo}, {hi})")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def lows(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.bounds])

    @property
    def highs(self) -> np.ndarray:
        return np.array([hi for _, hi in self.bounds])

    def contains(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.all((X >= self.lows) & (X <= self.highs), axis=1)


def default_domain(fid: FunctionId) -> Domain:
    """Default per-function sampling box (configurable, these are fallbacks)."""
    if fid is FunctionId.I_13_12:
        return Domain(((1.0, 5.0),) * 2)
    if fid is FunctionId.I_26_2:
        return Domain(((0.0, 1.0), (1.0, 2.0)))
    return Domain(((1.0, 3.0),) * fid.dimensionality)


@dataclass
class Dataset:
    """Sampled inputs with exact target values.

    ``domain``, ``function`` and ``seed`` record provenance when known; a
    dataset re-read from CSV carries only the samples.
    """

    X: np.ndarray
    y: np.ndarray
    domain: Domain | None = None
    function: FunctionId | None = None
    seed: int | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.X.ndim != 2 or self.y.ndim != 1 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError(f"inconsistent dataset shapes {self.X.shape} / {self.y.shape}")
        if self.function is not None and self.X.shape[1] != self.function.dimensionality:
            raise ValueError(
                f"{self.function.value} needs {self.function.dimensionality} columns, "
                f"got {self.X.shape[1]}"
            )
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ValueError("dataset values must be finite")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def input_dim(self) -> int:
        return self.X.shape[1]


def generate_dataset(fid: FunctionId, n: int, domain: Domain, rng: Rng) -> Dataset:
    """Draw n uniform samples over the box, rejecting constraint violations.

    Redraws keep the kept points i.i.d. uniform over the feasible region.
    Raises if more than 99% of a sizeable window of draws is rejected, which
    means the box barely intersects the function's validity region.
    """
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    if domain.dim != fid.dimensionality:
        raise ValueError(
            f"domain has {domain.dim} variables, {fid.value} needs {fid.dimensionality}"
        )
    lows, highs = domain.lows, domain.highs
    span = highs - lows
    kept: list[np.ndarray] = []
    have = 0
    draws = 0
    rejected = 0
    while have < n:
        want = n - have
        pts = lows + rng.random((want, domain.dim)) * span
        ok, constraint = _feasible(fid, pts)
        kept.append(pts[ok])
        have += int(ok.sum())
        draws += want
        rejected += int((~ok).sum())
        if draws >= max(1000, 10 * n) and rejected / draws > 0.99:
            raise ValueError(
                f"domain is ill-posed for {fid.value}: {rejected}/{draws} draws "
                f"violated '{constraint}'"
            )
    if rejected:
        log.info("%s: redrew %d constraint-violating samples", fid.value, rejected)
    X = np.vstack(kept)
    return Dataset(X=X, y=eval_function_batch(fid, X), domain=domain, function=fid, seed=rng.seed)


def write_csv(ds: Dataset, path) -> None:
    """Write samples as x1..xd,f rows; lossless 17-significant-digit decimals."""
    d = ds.input_dim
    header = ",".join([f"x{j + 1}" for j in range(d)] + ["f"])
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for i in range(len(ds)):
            row = [FLOAT_FMT % v for v in ds.X[i]] + [FLOAT_FMT % ds.y[i]]
            fh.write(",".join(row) + "\n")


def read_csv(path) -> Dataset:
    """Read a dataset written by write_csv; errors name the offending line."""
    with open(path, "r", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].strip():
        raise CsvFormatError(f"{path}: empty file")
    header = lines[0].split(",")
    if len(header) < 2 or header[-1] != "f" or header[:-1] != [
        f"x{j + 1}" for j in range(len(header) - 1)
    ]:
        raise CsvFormatError(f"{path}: line 1: expected header x1,...,xd,f, got {lines[0]!r}")
    d = len(header) - 1
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != d + 1:
            raise CsvFormatError(
                f"{path}: line {lineno}: expected {d + 1} columns, got {len(parts)}"
            )
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise CsvFormatError(f"{path}: line {lineno}: {exc}") from None
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    data = np.array(rows, dtype=np.float64)
    return Dataset(X=data[:, :d], y=data[:, d])
