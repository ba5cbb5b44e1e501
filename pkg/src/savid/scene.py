"""Synthetic desk-scale scenes: cuboid objects with range-dependent LiDAR
sparsity, a simple shaded rendering, and rigid per-frame motion."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .depth import CameraModel
from .metrics import Box3D
from .pointcloud import PointCloud

# camera axes in world coordinates: x right = -y_w, y down = -z_w, z forward = x_w
_CAM_ROTATION = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])

_POINTS_PER_OBJECT_BASE = 20000.0  # expected count at 1 m before 1/r^2 falloff
_MIN_OBJECT_POINTS = 4
_GROUND_POINTS = 1200
_FRAME_DT = 0.5  # seconds between frames


class PlacementError(RuntimeError):
    """Raised when object placement cannot satisfy the separation constraint."""


@dataclass
class SceneFrame:
    cloud: PointCloud
    image: np.ndarray  # (H, W, 3) in [0, 1]
    boxes: list[Box3D]


@dataclass
class SyntheticScene:
    seed: int
    camera: CameraModel
    frames: list[SceneFrame] = field(default_factory=list)

    @property
    def num_frames(self) -> int:
        return len(self.frames)


def default_camera(height: int, width: int) -> CameraModel:
    return CameraModel(
        fx=width / 2.0,
        fy=height / 2.0,
        cx=width / 2.0,
        cy=height / 2.0,
        rotation=_CAM_ROTATION,
        translation=np.zeros(3),
        height=height,
        width=width,
    )


def _wrap_angle(a: float) -> float:
    w = (a + np.pi) % (2.0 * np.pi) - np.pi
    return np.pi if w == -np.pi else w


def _place_objects(rng: np.random.Generator, num: int, range_m: float) -> list[dict]:
    objects = []
    min_sep = 6.0
    for _ in range(num):
        for _attempt in range(500):
            r = rng.uniform(8.0, range_m)
            theta = rng.uniform(-0.55, 0.55)
            center = np.array([r * np.cos(theta), r * np.sin(theta), 0.75])
            if all(np.linalg.norm(center[:2] - o["center"][:2]) >= min_sep for o in objects):
                break
        else:
            raise PlacementError(f"could not place object {len(objects)} after 500 tries")
        objects.append(
            {
                "center": center,
                "size": np.array(
                    [rng.uniform(2.0, 4.0), rng.uniform(1.5, 2.5), rng.uniform(1.2, 2.0)]
                ),
                "yaw": _wrap_angle(rng.uniform(-np.pi, np.pi)),
                "velocity": rng.uniform(-1.5, 1.5, size=2),
                "albedo": rng.uniform(0.2, 0.9, size=3),
            }
        )
    return objects


def _object_points(rng: np.random.Generator, obj: dict, center: np.ndarray) -> np.ndarray:
    """Points uniform inside the cuboid; count follows the 1/r^2 sparsity law."""
    r = float(np.linalg.norm(center[:2]))
    n = max(_MIN_OBJECT_POINTS, int(rng.poisson(_POINTS_PER_OBJECT_BASE / max(r, 1.0) ** 2)))
    local = rng.uniform(-0.5, 0.5, size=(n, 3)) * obj["size"]
    cos, sin = np.cos(obj["yaw"]), np.sin(obj["yaw"])
    rot = np.array([[cos, -sin, 0.0], [sin, cos, 0.0], [0.0, 0.0, 1.0]])
    xyz = local @ rot.T + center
    refl = rng.uniform(0.05, 0.95, size=(n, 1))
    return np.hstack([xyz, refl])


def _ground_points(rng: np.random.Generator, range_m: float) -> np.ndarray:
    u = rng.uniform(0.0, 1.0, size=_GROUND_POINTS)
    r = 2.0 + (range_m - 2.0) * u**2  # quadratic warp mimics 1/r^2 thinning
    theta = rng.uniform(-0.6, 0.6, size=_GROUND_POINTS)
    x = r * np.cos(theta)
    y = r * np.sin(theta)
    z = rng.normal(0.0, 0.02, size=_GROUND_POINTS)
    refl = rng.uniform(0.05, 0.5, size=_GROUND_POINTS)
    return np.stack([x, y, z, refl], axis=1)


def _render(
    camera: CameraModel, objects: list[dict], centers: list[np.ndarray]
) -> np.ndarray:
    h, w = camera.height, camera.width
    image = np.empty((h, w, 3))
    grad = np.linspace(0.75, 0.35, h)[:, None, None]
    image[:] = grad
    order = sorted(
        range(len(objects)), key=lambda i: -float(np.linalg.norm(centers[i][:2]))
    )
    for i in order:  # painter's algorithm, far to near
        obj, center = objects[i], centers[i]
        half = obj["size"] / 2.0
        signs = np.array(
            [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
        )
        cos, sin = np.cos(obj["yaw"]), np.sin(obj["yaw"])
        rot = np.array([[cos, -sin, 0.0], [sin, cos, 0.0], [0.0, 0.0, 1.0]])
        corners = (signs * half) @ rot.T + center
        cam_pts = camera.world_to_camera(corners)
        front = cam_pts[:, 2] > 0.5
        if not np.any(front):
            continue
        cam_pts = cam_pts[front]
        u = camera.fx * cam_pts[:, 0] / cam_pts[:, 2] + camera.cx
        v = camera.fy * cam_pts[:, 1] / cam_pts[:, 2] + camera.cy
        c0, c1 = int(np.floor(u.min())), int(np.ceil(u.max()))
        r0, r1 = int(np.floor(v.min())), int(np.ceil(v.max()))
        c0, c1 = max(0, c0), min(w, c1)
        r0, r1 = max(0, r0), min(h, r1)
        if c0 >= c1 or r0 >= r1:
            continue
        dist = float(np.linalg.norm(center[:2]))
        shade = 1.0 / (1.0 + 0.015 * dist)
        image[r0:r1, c0:c1] = obj["albedo"] * shade
    return np.clip(image, 0.0, 1.0)


def generate_scene(
    seed: int,
    num_objects: int,
    range_m: float,
    num_frames: int,
    image_hw: tuple[int, int] = (56, 56),
) -> SyntheticScene:
    """Deterministic multi-frame scene; same seed gives bit-identical output."""
    if range_m <= 0:
        raise ValueError("range_m must be positive")
    if num_objects < 0 or num_frames < 1:
        raise ValueError("num_objects must be >= 0 and num_frames >= 1")
    rng = np.random.default_rng(seed)
    camera = default_camera(*image_hw)
    objects = _place_objects(rng, num_objects, range_m)
    ground = _ground_points(rng, range_m)
    scene = SyntheticScene(seed=seed, camera=camera)
    for frame in range(num_frames):
        centers = [
            o["center"] + np.array([*(o["velocity"] * _FRAME_DT * frame), 0.0])
            for o in objects
        ]
        chunks = [ground]
        boxes = []
        for i, (obj, center) in enumerate(zip(objects, centers)):
            frame_rng = np.random.default_rng((seed, i, frame))
            chunks.append(_object_points(frame_rng, obj, center))
            boxes.append(Box3D(center=center, size=obj["size"], yaw=obj["yaw"], class_id=0))
        cloud = PointCloud(np.vstack(chunks))
        image = _render(camera, objects, centers)
        scene.frames.append(SceneFrame(cloud=cloud, image=image, boxes=boxes))
    return scene
