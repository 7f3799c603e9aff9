"""Small dense linear-algebra kernels and the deterministic random source.

Everything runs in 64-bit floats.  Reductions delegate to numpy/BLAS, whose
accumulation order is fixed for a given shape, so repeated runs on the same
build are bit-identical.  `dot` treats both arguments symmetrically, hence
dot(a, b) == dot(b, a) exactly.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Rng", "dot", "matvec", "uniform_sample", "compensated_row_sum"]


class Rng:
    """Deterministic random source backed by the counter-based Philox generator.

    Identical seeds produce identical streams; all consumers draw only raw
    uniform doubles in [0, 1) so the stream layout is fully under our control.
    Single-owner: never share one instance across threads.
    """

    def __init__(self, seed: int):
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must fit in 64 bits, got {seed}")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(key=np.uint64(seed)))

    def random(self, size: int | tuple[int, ...] | None = None) -> float | np.ndarray:
        """Uniform doubles in [0, 1); advances the stream deterministically."""
        return self._gen.random(size)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed})"


def dot(a: np.ndarray, b: np.ndarray) -> float:
    """Inner product of two equal-length vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("dot expects 1-D vectors")
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"dot length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] == 0:
        return 0.0
    return float(np.dot(a, b))


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product with left-to-right accumulation per row."""
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1:
        raise ValueError("matvec expects a 2-D matrix and a 1-D vector")
    if m.shape[1] != v.shape[0]:
        raise ValueError(f"matvec shape mismatch: {m.shape} @ ({v.shape[0]},)")
    out = np.zeros(m.shape[0])
    for k in range(m.shape[1]):
        out += m[:, k] * v[k]
    return out


def uniform_sample(rng: Rng, lo: float, hi: float) -> float:
    """One uniform draw from [lo, hi); degenerate lo == hi returns lo."""
    if lo > hi:
        raise ValueError(f"uniform_sample requires lo <= hi, got ({lo}, {hi})")
    if lo == hi:
        return float(lo)
    v = lo + (hi - lo) * float(rng.random())
    # rounding can push the scaled draw onto hi itself; keep the half-open contract
    if v >= hi:
        v = float(np.nextafter(hi, lo))
    return v


def compensated_row_sum(terms: list[np.ndarray]) -> np.ndarray:
    """Element-wise sum of several equal-shape arrays, error-free to O(eps^2).

    Cascades Knuth's TwoSum so the result is the true sum of the inputs up to
    one final rounding.  Used where small residuals are formed from large
    cancelling terms and plain accumulation would leave rounding noise at the
    magnitude of the operands rather than of the result.
    """
    if not terms:
        raise ValueError("compensated_row_sum needs at least one term")
    hi = np.array(terms[0], dtype=np.float64, copy=True)
    lo = np.zeros_like(hi)
    for t in terms[1:]:
        t = np.asarray(t, dtype=np.float64)
        if t.shape != hi.shape:
            raise ValueError(f"term shape {t.shape} != {hi.shape}")
        s = hi + t
        big = s - hi
        err = (hi - (s - big)) + (t - big)
        hi = s
        lo += err
    return hi + lo
