"""Deterministic depth map construction: LiDAR projected into the image
plane, then densified by nearest-valid fill."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import as_tensor
from .pointcloud import PointCloud


@dataclass
class CameraModel:
    """Pinhole camera; rotation/translation map world coordinates to the
    camera frame (z forward)."""

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray  # (3, 3) orthonormal
    translation: np.ndarray  # (3,) meters
    height: int
    width: int

    def __post_init__(self):
        self.rotation = as_tensor(self.rotation).reshape(3, 3)
        self.translation = as_tensor(self.translation).reshape(3)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > 1e-9:
            raise ValueError(f"rotation not orthonormal (max deviation {err:.2e})")

    def world_to_camera(self, pts: np.ndarray) -> np.ndarray:
        return pts @ self.rotation.T + self.translation


@dataclass
class DepthMap:
    """Per-pixel depth in meters; 0 marks invalid pixels."""

    depth: np.ndarray
    valid_mask: np.ndarray

    def __post_init__(self):
        self.depth = as_tensor(self.depth)
        self.valid_mask = np.asarray(self.valid_mask, dtype=bool)
        if self.depth.shape != self.valid_mask.shape or self.depth.ndim != 2:
            raise ValueError("depth and valid_mask must be matching 2-d arrays")
        if np.any(self.depth[self.valid_mask] <= 0):
            raise ValueError("valid depths must be positive")
        if np.any(self.depth[~self.valid_mask] != 0):
            raise ValueError("invalid pixels must store depth 0")


def project_points(cloud: PointCloud, cam: CameraModel) -> DepthMap:
    """Project each point to the nearest integer pixel; collisions keep the
    smallest depth. Points behind the camera are discarded."""
    depth = np.zeros((cam.height, cam.width))
    if len(cloud):
        c = cam.world_to_camera(cloud.xyz)
        z = c[:, 2]
        front = z > 0
        c = c[front]
        z = z[front]
        u = np.rint(cam.fx * c[:, 0] / z + cam.cx).astype(np.int64)
        v = np.rint(cam.fy * c[:, 1] / z + cam.cy).astype(np.int64)
        ok = (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
        for row, col, d in zip(v[ok], u[ok], z[ok]):
            cur = depth[row, col]
            if cur == 0.0 or d < cur:
                depth[row, col] = d
    return DepthMap(depth, depth > 0)


def densify_depth(sparse: DepthMap) -> DepthMap:
    """Fill every pixel with the depth of its nearest valid pixel (Euclidean
    pixel distance, ties broken by row-major order of the valid pixels)."""
    valid = np.argwhere(sparse.valid_mask)  # row-major order
    if valid.shape[0] == 0:
        raise ValueError("no depth support: depth map has no valid pixels")
    h, w = sparse.depth.shape
    rows, cols = np.mgrid[0:h, 0:w]
    pix = np.stack([rows.ravel(), cols.ravel()], axis=1)  # (H*W, 2)
    # squared distances to every valid pixel; argmin picks the first (row-major) tie
    d2 = ((pix[:, None, :] - valid[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argmin(d2, axis=1)
    vals = sparse.depth[valid[:, 0], valid[:, 1]]
    dense = vals[nearest].reshape(h, w)
    return DepthMap(dense, np.ones((h, w), dtype=bool))
