"""Stage 3: parameter-free graph fusion via neighborhood-minimum cosine
distances and 2^-k channel-weighted accumulation.

The default "paper" cosine is a*b / sqrt(|a|^2 + |b|^2), which is not the
standard normalized cosine; the standard form is available behind a flag.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .numerics import ShapeError, as_tensor


@dataclass
class NeighborSpec:
    """window3x3: the 3x3 spatial window around each location.
    knn: the k nearest LiDAR-supported sites by pixel distance."""

    mode: str = "window3x3"
    k: int = 9

    def __post_init__(self):
        if self.mode not in ("window3x3", "knn"):
            raise ValueError(f"unknown neighbor mode {self.mode!r}")
        if self.k <= 0:
            raise ValueError("k must be positive")


def cosine_paper(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product divided by sqrt of the summed squared norms; 0 when both
    vectors are zero."""
    a = as_tensor(a).ravel()
    b = as_tensor(b).ravel()
    denom_sq = float(a @ a + b @ b)
    if denom_sq == 0.0:
        return 0.0
    return float(a @ b) / np.sqrt(denom_sq)


def cosine_standard(a: np.ndarray, b: np.ndarray) -> float:
    """Normalized cosine similarity; 0 when either vector is zero."""
    a = as_tensor(a).ravel()
    b = as_tensor(b).ravel()
    denom = float(np.linalg.norm(a)) * float(np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(a @ b) / denom


def _scalar_cosine(a, b, kind: str):
    """Vector formula degenerated to scalar operands; vectorized over b."""
    if kind == "paper":
        sq = a * a + b * b
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(sq == 0.0, 0.0, (a * b) / np.sqrt(sq))
    denom = np.abs(a) * np.abs(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(denom == 0.0, 0.0, (a * b) / denom)


def support_mask(f_l: np.ndarray) -> np.ndarray:
    """True where the LiDAR feature cell is not all-zero."""
    return np.any(as_tensor(f_l) != 0.0, axis=2)


def neighbor_sites(
    spec: NeighborSpec, support: np.ndarray, tau: int, eps: int
) -> list[tuple[int, int]]:
    """Supported neighbor sites of (tau, eps) under the given spec."""
    h, w = support.shape
    if spec.mode == "window3x3":
        return [
            (r, c)
            for r in range(max(0, tau - 1), min(h, tau + 2))
            for c in range(max(0, eps - 1), min(w, eps + 2))
            if support[r, c]
        ]
    sites = np.argwhere(support)  # row-major
    if sites.shape[0] == 0:
        return []
    d2 = (sites[:, 0] - tau) ** 2 + (sites[:, 1] - eps) ** 2
    order = np.lexsort((np.arange(sites.shape[0]), d2))
    return [tuple(sites[i]) for i in order[: spec.k]]


def neighbor_min_distance(
    f_s: np.ndarray,
    f_l: np.ndarray,
    tau: int,
    eps: int,
    spec: NeighborSpec = NeighborSpec(),
    cosine: str = "paper",
) -> np.ndarray:
    """Per-channel minimum scalar cosine between F_S(tau, eps, .) and the
    supported neighbor cells of F_L; zero when no neighbor has support."""
    f_s = as_tensor(f_s)
    f_l = as_tensor(f_l)
    _validate_pair(f_s, f_l)
    h, w, c = f_s.shape
    if not (0 <= tau < h and 0 <= eps < w):
        raise ValueError(f"location ({tau}, {eps}) outside {h}x{w}")
    sites = neighbor_sites(spec, support_mask(f_l), tau, eps)
    if not sites:
        return np.zeros(c)
    a = f_s[tau, eps, :]  # (C,)
    b = np.stack([f_l[r, col, :] for r, col in sites])  # (n, C)
    vals = _scalar_cosine(a[None, :], b, cosine)
    return vals.min(axis=0)


def kgf_fuse(
    f_s: np.ndarray,
    f_l: np.ndarray,
    spec: NeighborSpec = NeighborSpec(),
    cosine: str = "paper",
) -> np.ndarray:
    """Add the per-location projected scalar sum_k 2^-(k+1) V(k) to every
    channel of F_S. Parameter-free; the default mode runs on the compiled
    kernel when available."""
    f_s = as_tensor(f_s)
    f_l = as_tensor(f_l)
    _validate_pair(f_s, f_l)
    h, w, c = f_s.shape
    sup = support_mask(f_l)
    if spec.mode == "window3x3" and cosine == "paper":
        proj = kernels.kgf_project_window3x3(f_s, f_l, sup.astype(np.uint8))
    else:
        proj = np.zeros((h, w))
        weights = [2.0 ** -(k + 1) for k in range(c)]
        for tau in range(h):
            for eps in range(w):
                v = neighbor_min_distance(f_s, f_l, tau, eps, spec, cosine)
                acc = 0.0
                for k in range(c):
                    acc += weights[k] * v[k]
                proj[tau, eps] = acc
    return f_s + proj[:, :, None]


def kgf_oracle(
    f_s: np.ndarray,
    f_l: np.ndarray,
    spec: NeighborSpec = NeighborSpec(),
    cosine: str = "paper",
) -> np.ndarray:
    """Naive triple-loop evaluation; ground truth for kgf_fuse."""
    f_s = as_tensor(f_s)
    f_l = as_tensor(f_l)
    _validate_pair(f_s, f_l)
    h, w, c = f_s.shape
    sup = support_mask(f_l)
    out = np.empty_like(f_s)
    for tau in range(h):
        for eps in range(w):
            sites = neighbor_sites(spec, sup, tau, eps)
            acc = 0.0
            for k in range(c):
                a = f_s[tau, eps, k]
                best = None
                for r, col in sites:
                    val = float(_scalar_cosine(np.float64(a), np.float64(f_l[r, col, k]), cosine))
                    if best is None or val < best:
                        best = val
                acc += (2.0 ** -(k + 1)) * (0.0 if best is None else best)
            for k in range(c):
                out[tau, eps, k] = f_s[tau, eps, k] + acc
    return out


def _validate_pair(f_s: np.ndarray, f_l: np.ndarray) -> None:
    if f_s.ndim != 3 or f_s.shape != f_l.shape:
        raise ShapeError(f"expected matching (H, W, C) inputs, got {f_s.shape} and {f_l.shape}")
