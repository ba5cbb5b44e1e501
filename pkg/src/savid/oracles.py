"""Independent brute-force references used by the test suite and the CLI
self-test. These deliberately avoid the fast paths they verify."""

from __future__ import annotations

import numpy as np

from .depth import DepthMap
from .kgf import NeighborSpec
from .metrics import Box3D, bev_iou
from .pointcloud import PointCloud, VoxelGrid


def matmul_naive(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for p in range(k):
                acc += a[i, p] * b[p, j]
            out[i, j] = acc
    return out


def dft_naive(x: np.ndarray) -> np.ndarray:
    """O(N^2) DFT along axis -2 of an (..., N, C) array."""
    n = x.shape[-2]
    idx = np.arange(n)
    mat = np.exp(-2j * np.pi * np.outer(idx, idx) / n)
    return np.einsum("fn,...nc->...fc", mat, x.astype(np.complex128))


def idft_naive(x: np.ndarray) -> np.ndarray:
    n = x.shape[-2]
    idx = np.arange(n)
    mat = np.exp(2j * np.pi * np.outer(idx, idx) / n) / n
    return np.einsum("fn,...nc->...fc", mat, x)


def spectral_filter_naive(x: np.ndarray, filt: np.ndarray) -> np.ndarray:
    spec = dft_naive(x) * np.asarray(filt, dtype=np.complex128)[:, None]
    return idft_naive(spec).real


def voxelize_reference(
    cloud: PointCloud, origin, voxel_size, dims
) -> tuple[dict, int]:
    """Hash-and-average transcription; returns (cells, dropped)."""
    origin = np.asarray(origin, dtype=float)
    voxel_size = np.asarray(voxel_size, dtype=float)
    buckets: dict[tuple, list] = {}
    dropped = 0
    for p in cloud.points:
        key = tuple(int(np.floor((p[a] - origin[a]) / voxel_size[a])) for a in range(3))
        if all(0 <= key[a] < dims[a] for a in range(3)):
            buckets.setdefault(key, []).append(p)
        else:
            dropped += 1
    cells = {
        key: (np.mean(np.stack(pts), axis=0), len(pts)) for key, pts in buckets.items()
    }
    return cells, dropped


def fps_reference(xyz: np.ndarray, k: int, start: int) -> list[int]:
    """O(N*K) greedy with explicit per-candidate min-distance scan."""
    n = xyz.shape[0]
    k = min(k, n)
    selected = [start]
    while len(selected) < k:
        best_i, best_d = -1, -1.0
        for i in range(n):
            d = min(float(np.sum((xyz[i] - xyz[j]) ** 2)) for j in selected)
            if d > best_d:
                best_d, best_i = d, i
        selected.append(best_i)
    return selected


def dense_conv_reference(grid: VoxelGrid, kernel: np.ndarray, stride: int) -> dict:
    """Zero-padded dense 3-D convolution with ReLU, restricted to output
    sites whose receptive field touches a non-empty input cell."""
    dims = grid.dims
    c_in, c_out = kernel.shape[3], kernel.shape[4]
    dense = np.zeros((*dims, c_in))
    occupied = np.zeros(dims, dtype=bool)
    for idx, (feat, _) in grid.cells.items():
        dense[idx] = feat
        occupied[idx] = True
    out_dims = tuple(-(-d // stride) for d in dims)
    cells = {}
    for ox in range(out_dims[0]):
        for oy in range(out_dims[1]):
            for oz in range(out_dims[2]):
                acc = np.zeros(c_out)
                active = False
                for dx in range(3):
                    for dy in range(3):
                        for dz in range(3):
                            ix = stride * ox + dx - 1
                            iy = stride * oy + dy - 1
                            iz = stride * oz + dz - 1
                            if not (
                                0 <= ix < dims[0] and 0 <= iy < dims[1] and 0 <= iz < dims[2]
                            ):
                                continue
                            if occupied[ix, iy, iz]:
                                active = True
                            acc = acc + dense[ix, iy, iz] @ kernel[dx, dy, dz]
                if active:
                    cells[(ox, oy, oz)] = np.maximum(acc, 0.0)
    return cells


def densify_reference(sparse: DepthMap) -> np.ndarray:
    """Exhaustive nearest-valid search with row-major tie-break."""
    h, w = sparse.depth.shape
    valid = [(r, c) for r in range(h) for c in range(w) if sparse.valid_mask[r, c]]
    out = np.zeros((h, w))
    for r in range(h):
        for c in range(w):
            best = None
            best_d = None
            for vr, vc in valid:
                d = (vr - r) ** 2 + (vc - c) ** 2
                if best_d is None or d < best_d:
                    best_d, best = d, (vr, vc)
            out[r, c] = sparse.depth[best]
    return out


def nms_reference(boxes: list[Box3D], iou_threshold: float) -> list[int]:
    """O(n^2) suppression against the full kept set, recomputed per candidate."""
    remaining = sorted(range(len(boxes)), key=lambda i: (-boxes[i].score, i))
    kept: list[int] = []
    while remaining:
        i = remaining.pop(0)
        kept.append(i)
        remaining = [
            j for j in remaining if bev_iou(boxes[i], boxes[j]) <= iou_threshold
        ]
    return sorted(kept)


def monte_carlo_bev_iou(a: Box3D, b: Box3D, samples: int, seed: int = 0) -> float:
    """Area estimate by uniform sampling over the union's bounding box."""
    rng = np.random.default_rng(seed)
    ca, cb = a.bev_corners(), b.bev_corners()
    lo = np.minimum(ca.min(axis=0), cb.min(axis=0))
    hi = np.maximum(ca.max(axis=0), cb.max(axis=0))
    pts = rng.uniform(lo, hi, size=(samples, 2))

    def inside(corners, p):
        res = np.ones(len(p), dtype=bool)
        for i in range(4):
            s, e = corners[i], corners[(i + 1) % 4]
            cross = (e[0] - s[0]) * (p[:, 1] - s[1]) - (e[1] - s[1]) * (p[:, 0] - s[0])
            res &= cross >= 0
        return res

    in_a = inside(ca, pts)
    in_b = inside(cb, pts)
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(in_a & in_b) / union


def sparse_attention_mask_reference(logits: np.ndarray, rho: float) -> np.ndarray:
    """Per-row top-ceil(rho*T) keep mask via exhaustive sort with (value,
    column) tie-break."""
    t = logits.shape[0]
    keep = int(np.ceil(rho * t))
    mask = np.zeros_like(logits, dtype=bool)
    for r in range(t):
        order = sorted(range(t), key=lambda c: (-logits[r, c], c))
        mask[r, order[:keep]] = True
    return mask
