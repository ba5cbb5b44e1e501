"""Dense float64 tensor math shared by every pipeline stage.

All operations are pure functions of their arguments; arrays are treated as
immutable values and every public op returns a fresh array. A module-level
inference flag turns dropout into the identity.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ShapeError",
    "LinearMap",
    "matmul",
    "softmax_lastdim",
    "layer_norm",
    "batch_norm_affine",
    "relu",
    "tanh",
    "dropout",
    "spectral_filter",
    "grad_check",
    "inference_mode",
    "set_inference",
    "is_inference",
    "as_tensor",
]


class ShapeError(ValueError):
    """Raised when tensor shapes do not satisfy an operation's contract."""


_INFERENCE = False


def set_inference(flag: bool) -> None:
    global _INFERENCE
    _INFERENCE = bool(flag)


def is_inference() -> bool:
    return _INFERENCE


@contextlib.contextmanager
def inference_mode(flag: bool = True):
    """Temporarily set the global inference flag (dropout becomes identity)."""
    global _INFERENCE
    prev = _INFERENCE
    _INFERENCE = bool(flag)
    try:
        yield
    finally:
        _INFERENCE = prev


def as_tensor(x) -> np.ndarray:
    """Coerce to a C-contiguous float64 array."""
    return np.ascontiguousarray(x, dtype=np.float64)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched matrix product; leading dims must match exactly."""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return np.matmul(a, b)


def softmax_lastdim(x: np.ndarray) -> np.ndarray:
    """Softmax over the last axis, computed with max-subtraction."""
    x = as_tensor(x)
    if x.shape[-1] < 1:
        raise ShapeError("softmax needs a non-empty last axis")
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Normalize each last-axis slice to zero mean / unit variance, then affine."""
    x = as_tensor(x)
    gamma = as_tensor(gamma)
    beta = as_tensor(beta)
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ShapeError(f"layer_norm affine vectors must have length {x.shape[-1]}")
    if eps <= 0:
        raise ValueError("layer_norm eps must be > 0")
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return gamma * (x - mean) / np.sqrt(var + eps) + beta


def batch_norm_affine(
    x: np.ndarray,
    mean: np.ndarray,
    var: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    eps: float = 1e-5,
) -> np.ndarray:
    """Inference-mode batch norm with supplied per-channel statistics."""
    x = as_tensor(x)
    mean, var, gamma, beta = (as_tensor(v) for v in (mean, var, gamma, beta))
    c = x.shape[-1]
    for name, v in (("mean", mean), ("var", var), ("gamma", gamma), ("beta", beta)):
        if v.shape != (c,):
            raise ShapeError(f"batch_norm {name} must have length {c}, got {v.shape}")
    if np.any(var < 0):
        raise ValueError("batch_norm variance must be non-negative")
    return gamma * (x - mean) / np.sqrt(var + eps) + beta


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(as_tensor(x), 0.0)


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(as_tensor(x))


def dropout(x: np.ndarray, rate: float, seed: int) -> np.ndarray:
    """Inverted dropout: zero with probability `rate`, scale survivors by 1/(1-rate).

    Identity when the global inference flag is set or rate == 0.
    """
    x = as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if _INFERENCE or rate == 0.0:
        return x.copy()
    rng = np.random.default_rng(seed)
    keep = rng.random(x.shape) >= rate
    return np.where(keep, x / (1.0 - rate), 0.0)


def spectral_filter(x: np.ndarray, filt: np.ndarray) -> np.ndarray:
    """Per-channel DFT along the token axis, multiply by `filt`, inverse, real part.

    `x` has shape (..., N, C); `filt` is a complex vector of length N.
    """
    x = as_tensor(x)
    filt = np.asarray(filt, dtype=np.complex128)
    if x.ndim < 2:
        raise ShapeError("spectral_filter input needs shape (..., N, C)")
    n = x.shape[-2]
    if filt.shape != (n,):
        raise ShapeError(f"filter must have length {n}, got {filt.shape}")
    spec = np.fft.fft(x, axis=-2) * filt[:, None]
    return np.fft.ifft(spec, axis=-2).real


@dataclass
class LinearMap:
    """Affine map applied along the last axis: y = x @ weight + bias."""

    weight: np.ndarray  # (C_in, C_out)
    bias: np.ndarray | None = None

    def __post_init__(self):
        self.weight = as_tensor(self.weight)
        if self.weight.ndim != 2:
            raise ShapeError(f"LinearMap weight must be 2-d, got {self.weight.shape}")
        if self.bias is not None:
            self.bias = as_tensor(self.bias)
            if self.bias.shape != (self.weight.shape[1],):
                raise ShapeError("LinearMap bias length must equal C_out")

    @property
    def c_in(self) -> int:
        return self.weight.shape[0]

    @property
    def c_out(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = as_tensor(x)
        if x.shape[-1] != self.c_in:
            raise ShapeError(f"LinearMap expects last dim {self.c_in}, got {x.shape}")
        y = x @ self.weight
        if self.bias is not None:
            y = y + self.bias
        return y

    @staticmethod
    def seeded(c_in: int, c_out: int, seed: int, bias: bool = True) -> "LinearMap":
        """Uniform(-1/sqrt(c_in), 1/sqrt(c_in)) init with zero bias."""
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(c_in)
        w = rng.uniform(-bound, bound, size=(c_in, c_out))
        b = np.zeros(c_out) if bias else None
        return LinearMap(w, b)


def grad_check(f, x: np.ndarray, analytic_grad: np.ndarray, h: float = 1e-6) -> float:
    """Central-difference check of a scalar function's gradient.

    Returns the max relative error between the finite-difference gradient and
    `analytic_grad`, with denominator max(|a|, |b|, 1e-8) per coordinate.
    """
    x = as_tensor(x)
    analytic_grad = as_tensor(analytic_grad)
    if analytic_grad.shape != x.shape:
        raise ShapeError("analytic_grad must have the same shape as x")
    flat = x.ravel()
    num = np.empty(flat.size)
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += h
        xm[i] -= h
        fp = float(f(xp.reshape(x.shape)))
        fm = float(f(xm.reshape(x.shape)))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"non-finite function value at coordinate {i}")
        num[i] = (fp - fm) / (2.0 * h)
    a = num
    b = analytic_grad.ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom))
