"""LiDAR preprocessing: voxelization, farthest point sampling, and strided
sparse 3-D convolution producing the bird's-eye feature raster."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .numerics import LinearMap, as_tensor

VoxelIndex = tuple[int, int, int]


@dataclass
class PointCloud:
    """N x 4 records: x, y, z in meters plus unitless reflectance in [0, 1]."""

    points: np.ndarray

    def __post_init__(self):
        pts = as_tensor(self.points)
        if pts.size == 0:
            pts = pts.reshape(0, 4)
        if pts.ndim != 2 or pts.shape[1] != 4:
            raise ValueError(f"point cloud must be N x 4, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite values")
        r = pts[:, 3]
        if pts.shape[0] and (r.min() < 0.0 or r.max() > 1.0):
            raise ValueError("reflectance must lie in [0, 1]")
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]


@dataclass
class VoxelGrid:
    """Sparse voxel map; only non-empty cells are stored."""

    origin: np.ndarray  # (3,) meters
    voxel_size: np.ndarray  # (3,) meters
    dims: tuple[int, int, int]
    cells: dict[VoxelIndex, tuple[np.ndarray, int]] = field(default_factory=dict)

    def __post_init__(self):
        self.origin = as_tensor(self.origin).reshape(3)
        self.voxel_size = as_tensor(self.voxel_size).reshape(3)
        if np.any(self.voxel_size <= 0):
            raise ValueError("voxel_size must be positive componentwise")
        self.dims = tuple(int(d) for d in self.dims)
        if any(d <= 0 for d in self.dims):
            raise ValueError("dims must be positive")

    @property
    def feature_dim(self) -> int:
        for feat, _ in self.cells.values():
            return feat.shape[0]
        return 0

    def total_count(self) -> int:
        return sum(cnt for _, cnt in self.cells.values())


def voxelize_mean(
    cloud: PointCloud,
    origin,
    voxel_size,
    dims: tuple[int, int, int],
) -> tuple[VoxelGrid, int]:
    """Mean-pool points into voxels; returns (grid, dropped out-of-bounds count)."""
    grid = VoxelGrid(origin, voxel_size, dims)
    pts = cloud.points
    if len(cloud) == 0:
        return grid, 0
    idx = np.floor((pts[:, :3] - grid.origin) / grid.voxel_size).astype(np.int64)
    in_bounds = np.all((idx >= 0) & (idx < np.asarray(grid.dims)), axis=1)
    dropped = int((~in_bounds).sum())
    sums: dict[VoxelIndex, np.ndarray] = {}
    counts: dict[VoxelIndex, int] = {}
    for row, ok in enumerate(in_bounds):
        if not ok:
            continue
        key = tuple(int(v) for v in idx[row])
        if key in sums:
            sums[key] += pts[row]
            counts[key] += 1
        else:
            sums[key] = pts[row].copy()
            counts[key] = 1
    for key, s in sums.items():
        grid.cells[key] = (s / counts[key], counts[key])
    return grid, dropped


def fps_sample(cloud: PointCloud, k: int, start_index: int = 0) -> list[int]:
    """Greedy farthest point sampling over xyz; deterministic given start_index."""
    n = len(cloud)
    if k <= 0:
        raise ValueError("k must be positive")
    if n == 0:
        return []
    if not 0 <= start_index < n:
        raise ValueError(f"start_index {start_index} out of range for {n} points")
    xyz = np.ascontiguousarray(cloud.xyz)
    return [int(i) for i in kernels.fps(xyz, min(k, n), start_index)]


def sparse_conv_downsample(grid: VoxelGrid, kernel: np.ndarray, stride: int = 1) -> VoxelGrid:
    """3x3x3 sparse convolution with ReLU; stride 2 halves dims (ceil).

    Outputs are produced only at sites whose receptive field touches at least
    one non-empty input cell; absent cells contribute zero.
    """
    kernel = as_tensor(kernel)
    if kernel.ndim != 5 or kernel.shape[:3] != (3, 3, 3):
        raise ValueError(f"kernel must be 3x3x3xCinxCout, got {kernel.shape}")
    c_in = kernel.shape[3]
    if grid.cells and grid.feature_dim != c_in:
        raise ValueError(f"kernel expects {c_in} input channels, grid has {grid.feature_dim}")
    if stride not in (1, 2):
        raise ValueError(f"stride must be 1 or 2, got {stride}")
    out_dims = tuple(math.ceil(d / stride) for d in grid.dims)
    acc: dict[VoxelIndex, np.ndarray] = {}
    contrib: dict[VoxelIndex, int] = {}
    c_out = kernel.shape[4]
    for (ix, iy, iz), (feat, _) in grid.cells.items():
        for dx in range(3):
            ox, rx = divmod(ix - dx + 1, stride)
            if rx or not 0 <= ox < out_dims[0]:
                continue
            for dy in range(3):
                oy, ry = divmod(iy - dy + 1, stride)
                if ry or not 0 <= oy < out_dims[1]:
                    continue
                for dz in range(3):
                    oz, rz = divmod(iz - dz + 1, stride)
                    if rz or not 0 <= oz < out_dims[2]:
                        continue
                    key = (ox, oy, oz)
                    term = feat @ kernel[dx, dy, dz]
                    if key in acc:
                        acc[key] += term
                        contrib[key] += 1
                    else:
                        acc[key] = term
                        contrib[key] = 1
    out = VoxelGrid(grid.origin, grid.voxel_size * stride, out_dims)
    for key, vec in acc.items():
        out.cells[key] = (np.maximum(vec, 0.0), contrib[key])
    return out


# feature dims of the four downsampling stages
CONV_STAGE_DIMS = (16, 32, 64, 64)


def make_conv_stack(seed: int, c_in: int = 4) -> list[np.ndarray]:
    """Seeded fixed conv weights for the 1x/2x/4x/8x stage chain."""
    rng = np.random.default_rng(seed)
    kernels_ = []
    prev = c_in
    for c_out in CONV_STAGE_DIMS:
        bound = 1.0 / np.sqrt(prev * 27)
        kernels_.append(rng.uniform(-bound, bound, size=(3, 3, 3, prev, c_out)))
        prev = c_out
    return kernels_


def conv_feature_chain(grid: VoxelGrid, stack: list[np.ndarray]) -> VoxelGrid:
    """Apply the four-stage chain: stride 1 then three stride-2 downsamplings."""
    out = sparse_conv_downsample(grid, stack[0], stride=1)
    for k in stack[1:]:
        out = sparse_conv_downsample(out, k, stride=2)
    return out


def bev_rasterize(grid: VoxelGrid, out_hw: tuple[int, int], out_map: LinearMap) -> np.ndarray:
    """Scatter grid cells onto an H x W bird's-eye raster and map to C channels.

    The z axis is collapsed by keeping the max-count cell per (x, y) column;
    pixels with no cell stay zero.
    """
    h, w = out_hw
    fd = grid.feature_dim
    raster = np.zeros((h, w, fd if fd else out_map.c_in))
    best_count: dict[tuple[int, int], int] = {}
    column: dict[tuple[int, int], np.ndarray] = {}
    for (ix, iy, _iz), (feat, cnt) in sorted(grid.cells.items()):
        key = (ix, iy)
        if cnt > best_count.get(key, 0):
            best_count[key] = cnt
            column[key] = feat
    d0, d1 = grid.dims[0], grid.dims[1]
    for (ix, iy), feat in column.items():
        r0, r1 = ix * h // d0, (ix + 1) * h // d0
        c0, c1 = iy * w // d1, (iy + 1) * w // d1
        raster[r0:max(r1, r0 + 1), c0:max(c1, c0 + 1)] = feat
    return out_map(raster)
