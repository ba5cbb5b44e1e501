"""The 10 sensor-induced corruptions at 5 severity levels, deterministic
under seed. Severity magnitudes live in an editable key-value table."""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pointcloud import PointCloud

LIDAR_KINDS = (
    "density_decrease",
    "cutout",
    "crosstalk",
    "fov_lost",
    "gaussian_noise_l",
    "uniform_noise_l",
    "impulse_noise_l",
)
IMAGE_KINDS = ("gaussian_noise_i", "uniform_noise_i", "impulse_noise_i")
ALL_KINDS = LIDAR_KINDS + IMAGE_KINDS

# reserved taxonomy slots; physics-based simulation is out of scope
WEATHER_KINDS = ("snow", "rain", "fog", "sunlight")


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    severity: int
    seed: int

    def __post_init__(self):
        if self.kind in WEATHER_KINDS:
            raise NotImplementedError("not implemented: physics-based weather simulation")
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        if self.severity not in (1, 2, 3, 4, 5):
            raise ValueError(f"severity must be in 1..5, got {self.severity}")


class SeverityTable:
    """Per-(kind, param) schedules parsed from a key-value text file."""

    def __init__(self, entries: dict[str, list[float]]):
        self.entries = entries

    def value(self, kind: str, param: str, severity: int) -> float:
        key = f"{kind}.{param}"
        if key not in self.entries:
            raise KeyError(f"severity table has no entry {key}")
        vals = self.entries[key]
        if len(vals) == 1:
            return vals[0]
        return vals[severity - 1]

    @staticmethod
    def parse(text: str) -> "SeverityTable":
        entries: dict[str, list[float]] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"severity table line {lineno}: missing '='")
            key, _, rhs = line.partition("=")
            vals = [float(v) for v in rhs.split()]
            if len(vals) not in (1, 5):
                raise ValueError(f"severity table line {lineno}: need 1 or 5 values")
            entries[key.strip()] = vals
        return SeverityTable(entries)

    @staticmethod
    def load(path: str | Path | None = None) -> "SeverityTable":
        if path is None:
            text = (
                importlib.resources.files("savid") / "data" / "severity_table.txt"
            ).read_text()
        else:
            text = Path(path).read_text()
        return SeverityTable.parse(text)


_DEFAULT_TABLE: SeverityTable | None = None


def default_table() -> SeverityTable:
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = SeverityTable.load()
    return _DEFAULT_TABLE


def corrupt_lidar(
    cloud: PointCloud, spec: CorruptionSpec, table: SeverityTable | None = None
) -> PointCloud:
    if spec.kind not in LIDAR_KINDS:
        raise ValueError(f"{spec.kind!r} is not a LiDAR corruption")
    table = table or default_table()
    rng = np.random.default_rng(spec.seed)
    pts = cloud.points.copy()
    n = pts.shape[0]
    if n == 0:
        return PointCloud(pts)

    if spec.kind == "density_decrease":
        frac = table.value(spec.kind, "drop_fraction", spec.severity)
        keep = n - round(frac * n)
        idx = np.sort(rng.choice(n, size=keep, replace=False))
        pts = pts[idx]
    elif spec.kind == "cutout":
        num = int(table.value(spec.kind, "num_spheres", spec.severity))
        radius = table.value(spec.kind, "radius_m", spec.severity)
        centers = pts[rng.integers(0, n, size=num), :3]
        keep = np.ones(n, dtype=bool)
        for c in centers:
            keep &= np.linalg.norm(pts[:, :3] - c, axis=1) > radius
        pts = pts[keep]
    elif spec.kind == "crosstalk":
        frac = table.value(spec.kind, "fraction", spec.severity)
        sigma = table.value(spec.kind, "sigma_m", spec.severity)
        m = round(frac * n)
        idx = rng.choice(n, size=m, replace=False)
        pts[idx, :3] += rng.normal(0.0, sigma, size=(m, 3))
    elif spec.kind == "fov_lost":
        span = np.deg2rad(table.value(spec.kind, "span_deg", spec.severity))
        center = rng.uniform(-np.pi, np.pi)
        az = np.arctan2(pts[:, 1], pts[:, 0])
        delta = np.angle(np.exp(1j * (az - center)))
        pts = pts[np.abs(delta) <= span / 2.0]
    elif spec.kind == "gaussian_noise_l":
        sigma = table.value(spec.kind, "sigma_m", spec.severity)
        pts[:, :3] += rng.normal(0.0, sigma, size=(n, 3))
    elif spec.kind == "uniform_noise_l":
        bound = table.value(spec.kind, "bound_m", spec.severity)
        pts[:, :3] += rng.uniform(-bound, bound, size=(n, 3))
    else:  # impulse_noise_l
        frac = table.value(spec.kind, "fraction", spec.severity)
        sigma = table.value(spec.kind, "sigma_m", spec.severity)
        m = round(frac * n)
        idx = rng.choice(n, size=m, replace=False)
        signs = rng.choice([-1.0, 1.0], size=(m, 3))
        pts[idx, :3] += 5.0 * sigma * signs
    return PointCloud(pts)


def corrupt_image(
    image: np.ndarray, spec: CorruptionSpec, table: SeverityTable | None = None
) -> np.ndarray:
    """Corrupt an (H, W, 3) image with values in [0, 1]; output is clamped."""
    if spec.kind not in IMAGE_KINDS:
        raise ValueError(f"{spec.kind!r} is not an image corruption")
    table = table or default_table()
    img = np.asarray(image, dtype=np.float64)
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    rng = np.random.default_rng(spec.seed)

    if spec.kind == "gaussian_noise_i":
        sigma = table.value(spec.kind, "sigma", spec.severity)
        out = img + rng.normal(0.0, sigma, size=img.shape)
    elif spec.kind == "uniform_noise_i":
        bound = table.value(spec.kind, "bound", spec.severity)
        out = img + rng.uniform(-bound, bound, size=img.shape)
    else:  # impulse_noise_i
        frac = table.value(spec.kind, "fraction", spec.severity)
        h, w = img.shape[:2]
        m = round(frac * h * w)
        flat = rng.choice(h * w, size=m, replace=False)
        rows, cols = np.unravel_index(flat, (h, w))
        extremes = rng.choice([0.0, 1.0], size=m)
        # an impulse must perturb: when the coin lands on the pixel's exact
        # current value, use the other extreme
        same = np.all(img[rows, cols] == extremes[:, None], axis=1)
        extremes = np.where(same, 1.0 - extremes, extremes)
        out = img.copy()
        out[rows, cols] = extremes[:, None]
    return np.clip(out, 0.0, 1.0)
