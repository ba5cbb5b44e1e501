"""Pipeline configuration: desk-scale defaults, key-value config files, and
flag overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

# full-scale constants; desk-scale defaults below are scaled down
PAPER_CHANNELS = 64
PAPER_N_HEADS = 8
PAPER_WINDOW = 7
PAPER_FPS_KEYPOINTS = 4096
PAPER_DROPOUT_RATE = 0.30
PAPER_NMS_IOU = 0.7
PAPER_AP_IOU = 0.1
PAPER_SEQUENCE_MAX = 7


@dataclass
class PipelineConfig:
    channels: int = PAPER_CHANNELS
    n_heads: int = PAPER_N_HEADS
    window: int = PAPER_WINDOW
    image_h: int = 56
    image_w: int = 56
    sequence_length: int = 3  # t, up to PAPER_SEQUENCE_MAX
    dropout_rate: float = PAPER_DROPOUT_RATE
    nms_iou: float = PAPER_NMS_IOU
    ap_iou: float = PAPER_AP_IOU
    fps_keypoints: int = 256  # desk-scale stand-in for the full-scale 4096
    grid_dims: tuple[int, int, int] = (64, 64, 8)
    grid_origin: tuple[float, float, float] = (0.0, -32.0, -2.0)
    grid_voxel: tuple[float, float, float] = (1.0, 1.0, 1.0)
    range_m: float = 60.0
    num_objects: int = 6
    seed: int = 0
    asmn_mode: str = "attention"
    asmn_rho: float = 0.25
    kgf_cosine: str = "paper"
    kgf_neighbors: str = "window3x3"
    kgf_k: int = 9
    enable_gman: bool = True
    enable_asmn: bool = True
    enable_kgf: bool = True
    severity_table: str | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.channels % self.n_heads:
            raise ValueError("channels must be divisible by n_heads")
        if not 1 <= self.sequence_length:
            raise ValueError("sequence_length must be >= 1")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key, val in d.items():
            if isinstance(val, tuple):
                d[key] = list(val)
        return d


_FIELDS = {f.name: f for f in dataclasses.fields(PipelineConfig)}


def _coerce(name: str, raw: str):
    if name not in _FIELDS:
        raise ValueError(f"unknown config key {name!r}")
    default = getattr(PipelineConfig(), name)
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"config key {name}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        parts = raw.replace(",", " ").split()
        kind = type(default[0])
        return tuple(kind(p) for p in parts)
    return raw


def load_config(path: str | Path | None = None, overrides: dict[str, str] | None = None) -> PipelineConfig:
    """Build a config from an optional key-value file plus string overrides."""
    values: dict = {}
    if path is not None:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = line.partition("=")
            key = key.strip()
            values[key] = _coerce(key, raw)
    for key, raw in (overrides or {}).items():
        values[key] = _coerce(key, raw) if isinstance(raw, str) else raw
    return PipelineConfig(**values)
