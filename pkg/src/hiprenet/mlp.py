"""Fully-connected tanh networks on a flat parameter vector.

Hidden layers use tanh, the output layer is linear so unbounded targets stay
reachable.  Parameters are flattened layer-ascending, each layer's weight
matrix (fan_out x fan_in, row-major) followed by its bias vector; BFGS and
the serializer both operate on that flat vector.

Two evaluation paths exist on purpose:

* ``forward`` / ``batch_forward`` accumulate with a fixed index-ascending
  order (einsum without BLAS dispatch), so each row's result is independent
  of the rest of the batch: shuffling rows shuffles outputs bit-identically
  and a one-row batch equals the scalar path exactly.
* ``loss_and_gradient`` uses BLAS matmuls for speed.  Its accumulation order
  is fixed for a given batch shape, which keeps whole training runs
  bit-reproducible, but row results may differ from the contract path in the
  last ulp.  The optimizer only ever sees this path, so it is self-consistent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numeric import Rng
from .objectives import LossSpec

__all__ = [
    "MlpArchitecture",
    "Mlp",
    "NonFiniteLossError",
    "init_params",
    "forward",
    "batch_forward",
    "loss_and_gradient",
]


class NonFiniteLossError(ValueError):
    """A network evaluation produced a non-finite value.

    ``sample_index`` is the first offending row of the batch (-1 when the
    failure is not attributable to a single sample).
    """

    def __init__(self, message: str, sample_index: int = -1):
        super().__init__(message)
        self.sample_index = sample_index


@dataclass(frozen=True)
class MlpArchitecture:
    """Layer widths of one feed-forward regressor: input -> hidden... -> 1."""

    input_dim: int
    hidden_widths: tuple[int, ...]
    output_dim: int = 1
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError(f"hidden widths must be >= 1, got {self.hidden_widths}")
        if self.output_dim != 1:
            raise ValueError("only scalar outputs are supported")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        """(fan_out, fan_in) per layer, input to output."""
        dims = [self.input_dim, *self.hidden_widths, self.output_dim]
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]

    @property
    def parameter_count(self) -> int:
        return sum(fo * fi + fo for fo, fi in self.layer_shapes)


@dataclass
class Mlp:
    """An architecture plus its flat parameter vector."""

    arch: MlpArchitecture
    params: np.ndarray

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.ndim != 1 or self.params.shape[0] != self.arch.parameter_count:
            raise ValueError(
                f"params length {self.params.shape} does not match "
                f"architecture ({self.arch.parameter_count} expected)"
            )
        if not np.all(np.isfinite(self.params)):
            raise ValueError("params must be finite")


def _unflatten(arch: MlpArchitecture, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views (W, b) per layer into the flat vector; no copies."""
    layers = []
    off = 0
    for fo, fi in arch.layer_shapes:
        W = params[off : off + fo * fi].reshape(fo, fi)
        off += fo * fi
        b = params[off : off + fo]
        off += fo
        layers.append((W, b))
    return layers


def init_params(arch: MlpArchitecture, rng: Rng) -> np.ndarray:
    """Glorot-uniform weights, +-sqrt(6/(fan_in+fan_out)) per layer; zero biases."""
    params = np.zeros(arch.parameter_count)
    off = 0
    for fo, fi in arch.layer_shapes:
        limit = np.sqrt(6.0 / (fi + fo))
        params[off : off + fo * fi] = limit * (2.0 * rng.random((fo, fi)).ravel() - 1.0)
        off += fo * fi + fo  # biases stay zero
    return params


def _affine_rows(A: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    # einsum with optimize=False keeps a fixed index-ascending accumulation
    # independent of the number of rows
    Z = np.einsum("nf,of->no", A, W, optimize=False)
    Z += b
    return Z


def batch_forward(net: Mlp, X: np.ndarray) -> np.ndarray:
    """Row-wise network outputs; entry k equals forward(net, X[k]) exactly."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.arch.input_dim:
        raise ValueError(f"input shape {X.shape} does not match input_dim {net.arch.input_dim}")
    if X.shape[0] == 0:
        return np.zeros(0)
    layers = _unflatten(net.arch, net.params)
    A = X
    for i, (W, b) in enumerate(layers):
        A = _affine_rows(A, W, b)
        if i < len(layers) - 1:
            np.tanh(A, out=A)
    return A[:, 0]


def forward(net: Mlp, x: np.ndarray) -> float:
    """Network output for one input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.arch.input_dim:
        raise ValueError(f"input shape {x.shape} does not match input_dim {net.arch.input_dim}")
    return float(batch_forward(net, x[None, :])[0])


def loss_and_gradient(
    net_arch: MlpArchitecture,
    params: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    loss: LossSpec | None = None,
) -> tuple[float, np.ndarray]:
    """Loss and its exact analytic gradient with respect to the flat parameters.

    Args:
        net_arch: network shape the flat vector belongs to.
        params: flat parameter vector.
        X: batch inputs, one sample per row.
        y: batch targets.
        loss: mse (default) or wmse with per-sample weights of batch length.

    Returns:
        (loss value, gradient vector of params length).

    Raises:
        NonFiniteLossError: a prediction or the loss came out non-finite; the
            first offending sample index is attached when identifiable.
    """
    if loss is None:
        loss = LossSpec()
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    params = np.asarray(params, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net_arch.input_dim:
        raise ValueError(f"input shape {X.shape} does not match input_dim {net_arch.input_dim}")
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if y.shape != (n,):
        raise ValueError(f"target length {y.shape} != batch size {n}")
    if params.shape[0] != net_arch.parameter_count:
        raise ValueError(
            f"params length {params.shape[0]} != {net_arch.parameter_count} for this architecture"
        )
    if loss.kind == "wmse" and loss.weights.shape[0] != n:
        raise ValueError(f"loss weights length {loss.weights.shape[0]} != batch size {n}")

    layers = _unflatten(net_arch, params)
    depth = len(layers)

    # forward, keeping post-activation arrays for the backward sweep;
    # non-finite intermediates are detected below, not warned about
    with np.errstate(invalid="ignore", over="ignore"):
        acts = [X]
        A = X
        for i, (W, b) in enumerate(layers):
            Z = A @ W.T
            Z += b
            if i < depth - 1:
                np.tanh(Z, out=Z)
            A = Z
            acts.append(A)
    pred = acts[-1][:, 0]

    bad = ~np.isfinite(pred)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise NonFiniteLossError(f"non-finite prediction at sample {idx}", sample_index=idx)
    value = loss.value(pred, y)
    if not np.isfinite(value):
        raise NonFiniteLossError("non-finite loss value")

    # reverse sweep; delta holds dL/dZ of the current layer
    coeff = (2.0 / n) * (pred - y)
    if loss.kind == "wmse":
        coeff = coeff * loss.weights
    delta = coeff[:, None]
    grad = np.zeros_like(params)
    offsets = []
    off = 0
    for fo, fi in net_arch.layer_shapes:
        offsets.append((off, off + fo * fi, off + fo * fi + fo))
        off += fo * fi + fo
    for i in range(depth - 1, -1, -1):
        w0, b0, b1 = offsets[i]
        np.dot(delta.T, acts[i], out=grad[w0:b0].reshape(delta.shape[1], -1))
        grad[b0:b1] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ layers[i][0]
            # tanh' = 1 - A^2; acts[i] is dead after this point, reuse it
            A = acts[i]
            np.multiply(A, A, out=A)
            np.subtract(1.0, A, out=A)
            delta *= A
    return value, grad
