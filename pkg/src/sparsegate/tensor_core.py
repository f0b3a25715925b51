"""Dense numerical kernels shared by every other module.

Batches are 2-D numpy arrays with the batch dimension leading, row-major.
Weight matrices are (in_dim, out_dim). Inference/benchmark paths use
float32, gradient-check paths float64; functions preserve the input dtype.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Generator, Philox


def matmul(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Batched matrix product (batch, in) @ (in, out) -> (batch, out)."""
    a = np.asarray(a)
    w = np.asarray(w)
    if a.ndim != 2 or w.ndim != 2:
        raise ValueError(f"matmul expects 2-D arrays, got {a.ndim}-D and {w.ndim}-D")
    if a.shape[1] != w.shape[0]:
        raise ValueError(f"dimension mismatch: batch dim {a.shape[1]} vs matrix rows {w.shape[0]}")
    return a @ w


def elu(x: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    """Exponential linear unit: x for x > 0, alpha*(e^x - 1) otherwise."""
    x = np.asarray(x)
    return np.where(x > 0, x, alpha * np.expm1(np.minimum(x, 0.0)))


def elu_grad(x: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    """Derivative of elu at x (1 for x > 0, alpha*e^x otherwise)."""
    x = np.asarray(x)
    return np.where(x > 0, np.ones_like(x), alpha * np.exp(np.minimum(x, 0.0)))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax; -inf entries map to exactly 0.

    Raises if any row is entirely -inf (empty support).
    """
    x = np.asarray(x, dtype=float)
    m = np.max(x, axis=axis, keepdims=True)
    if np.any(np.isneginf(m)):
        raise ValueError("softmax of all -inf entries is undefined")
    e = np.exp(x - m)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax_backward(s: np.ndarray, grad_s: np.ndarray) -> np.ndarray:
    """Gradient through softmax: given s = softmax(z) and dL/ds, return dL/dz.

    Rows of `s` that contain exact zeros (masked entries) get zero gradient
    at those positions automatically since dz_i is scaled by s_i.
    """
    inner = np.sum(s * grad_s, axis=-1, keepdims=True)
    return s * (grad_s - inner)


def assert_finite(x: np.ndarray, name: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"{name} contains non-finite entries")
    return x


class Rng:
    """Counter-based, splittable random source (Philox under the hood).

    Identical seed and call sequence gives an identical stream on every
    platform. `split` derives independent child generators for parallel
    workers without consuming draws from the parent stream.
    """

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._key = _key
        self._gen = Generator(Philox(key=self._philox_key()))

    def _philox_key(self) -> int:
        key = self.seed & 0xFFFFFFFFFFFFFFFF
        for idx in self._key:
            # splitmix-style mixing so sibling streams decorrelate
            key = (key * 0x9E3779B97F4A7C15 + idx + 1) & 0xFFFFFFFFFFFFFFFF
            key ^= key >> 31
        return key

    def split(self, n: int) -> list["Rng"]:
        """Derive n independent child generators; the parent is unaffected."""
        return [Rng(self.seed, self._key + (i,)) for i in range(n)]

    def child(self, index: int) -> "Rng":
        return Rng(self.seed, self._key + (index,))

    def standard_normal(self, shape=None, dtype=np.float64) -> np.ndarray:
        return self._gen.standard_normal(size=shape, dtype=dtype)

    def uniform(self, low: float = 0.0, high: float = 1.0, shape=None) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def random(self, shape=None) -> np.ndarray:
        return self._gen.random(size=shape)
