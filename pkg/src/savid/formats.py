"""On-disk interchange formats.

Point cloud (.svpc):  magic "SVPC", u32 count, then count little-endian
float32 records (x, y, z, reflectance).

Tensor (.svtn):  magic "SVTN", u32 ndim, ndim u32 dims, then row-major
little-endian float32 data.

Detections (.txt): one box per line, space-separated:
class_id score cx cy cz l w h yaw
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .metrics import Box3D
from .pointcloud import PointCloud

_SVPC_MAGIC = b"SVPC"
_SVTN_MAGIC = b"SVTN"


def write_point_cloud(path: str | Path, cloud: PointCloud) -> None:
    pts = cloud.points.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(_SVPC_MAGIC)
        fh.write(struct.pack("<I", pts.shape[0]))
        fh.write(pts.tobytes())


def read_point_cloud(path: str | Path) -> PointCloud:
    data = Path(path).read_bytes()
    if data[:4] != _SVPC_MAGIC:
        raise ValueError(f"{path}: not a point-cloud file (bad magic)")
    (count,) = struct.unpack_from("<I", data, 4)
    expected = 8 + count * 16
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, got {len(data)}")
    pts = np.frombuffer(data, dtype="<f4", offset=8).reshape(count, 4)
    return PointCloud(pts.astype(np.float64))


def write_tensor(path: str | Path, tensor: np.ndarray) -> None:
    arr = np.ascontiguousarray(tensor, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_SVTN_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != _SVTN_MAGIC:
        raise ValueError(f"{path}: not a tensor file (bad magic)")
    (ndim,) = struct.unpack_from("<I", data, 4)
    dims = struct.unpack_from(f"<{ndim}I", data, 8)
    offset = 8 + 4 * ndim
    arr = np.frombuffer(data, dtype="<f4", offset=offset)
    if arr.size != int(np.prod(dims)):
        raise ValueError(f"{path}: data size does not match header dims {dims}")
    return arr.reshape(dims).astype(np.float64)


def write_detections(path: str | Path, boxes: list[Box3D]) -> None:
    lines = []
    for b in boxes:
        fields = [str(b.class_id), repr(float(b.score))]
        fields += [repr(float(v)) for v in b.center]
        fields += [repr(float(v)) for v in b.size]
        fields.append(repr(float(b.yaw)))
        lines.append(" ".join(fields))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_detections(path: str | Path) -> list[Box3D]:
    boxes = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 9:
            raise ValueError(f"{path}:{lineno}: expected 9 fields, got {len(parts)}")
        vals = [float(v) for v in parts[1:]]
        boxes.append(
            Box3D(
                center=np.array(vals[1:4]),
                size=np.array(vals[4:7]),
                yaw=vals[7],
                class_id=int(parts[0]),
                score=vals[0],
            )
        )
    return boxes
