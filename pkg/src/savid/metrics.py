"""Detection-evaluation utilities: rotated BEV IoU, greedy NMS, 101-point
interpolated AP, and the corruption-robustness aggregates."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .numerics import as_tensor


@dataclass
class Box3D:
    center: np.ndarray  # (3,) meters
    size: np.ndarray  # (l, w, h) meters
    yaw: float  # radians, in (-pi, pi]
    class_id: int = 0
    score: float = 1.0

    def __post_init__(self):
        self.center = as_tensor(self.center).reshape(3)
        self.size = as_tensor(self.size).reshape(3)
        if np.any(self.size <= 0):
            raise ValueError("box size must be positive componentwise")
        if not -np.pi < self.yaw <= np.pi:
            raise ValueError(f"yaw must lie in (-pi, pi], got {self.yaw}")

    def bev_corners(self) -> np.ndarray:
        """Corners of the yaw-rotated ground rectangle, (4, 2), CCW."""
        l, w = self.size[0], self.size[1]
        dx = np.array([l, l, -l, -l]) / 2.0
        dy = np.array([-w, w, w, -w]) / 2.0
        cos, sin = np.cos(self.yaw), np.sin(self.yaw)
        x = self.center[0] + cos * dx - sin * dy
        y = self.center[1] + sin * dx + cos * dy
        return np.stack([x, y], axis=1)


def _polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _clip_polygon(subject: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of `subject` against the half-plane left of a->b."""
    out: list[np.ndarray] = []
    n = len(subject)
    for i in range(n):
        p, q = subject[i], subject[(i + 1) % n]
        side_p = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
        side_q = (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0])
        if side_p >= 0:
            out.append(p)
        if (side_p > 0) != (side_q > 0) and side_p != side_q:
            t = side_p / (side_p - side_q)
            out.append(p + t * (q - p))
    return np.array(out) if out else np.empty((0, 2))


def bev_iou(a: Box3D, b: Box3D) -> float:
    """Intersection-over-union of the rotated ground rectangles (z ignored)."""
    pa, pb = a.bev_corners(), b.bev_corners()
    area_a, area_b = _polygon_area(pa), _polygon_area(pb)
    if area_a == 0.0 or area_b == 0.0:
        return 0.0
    inter = pa
    for i in range(4):
        inter = _clip_polygon(inter, pb[i], pb[(i + 1) % 4])
        if len(inter) == 0:
            return 0.0
    ai = _polygon_area(inter)
    union = area_a + area_b - ai
    return float(np.clip(ai / union, 0.0, 1.0))


def nms(boxes: list[Box3D], iou_threshold: float) -> list[int]:
    """Greedy descending-score selection; suppress IoU > threshold overlaps.
    Score ties are broken by lower index."""
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError("iou_threshold must be in [0, 1]")
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i].score, i))
    kept: list[int] = []
    for i in order:
        if all(bev_iou(boxes[i], boxes[j]) <= iou_threshold for j in kept):
            kept.append(i)
    return sorted(kept)


def average_precision(
    preds: list[Box3D], gts: list[Box3D], iou_threshold: float
) -> float:
    """101-point interpolated AP for a single class.

    Predictions are matched greedily in descending score order to the
    unmatched ground truth with highest IoU >= threshold.
    """
    if not gts:
        warnings.warn("average_precision called with no ground truth; AP defined 0")
        return 0.0
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    matched = [False] * len(gts)
    tp = np.zeros(len(preds))
    for rank, i in enumerate(order):
        best_iou, best_j = 0.0, -1
        for j, gt in enumerate(gts):
            if matched[j]:
                continue
            iou = bev_iou(preds[i], gt)
            if iou >= iou_threshold and iou > best_iou:
                best_iou, best_j = iou, j
        if best_j >= 0:
            matched[best_j] = True
            tp[rank] = 1.0
    if len(preds) == 0:
        return 0.0
    cum_tp = np.cumsum(tp)
    precision = cum_tp / np.arange(1, len(preds) + 1)
    recall = cum_tp / len(gts)
    ap = 0.0
    for r in np.linspace(0.0, 1.0, 101):
        mask = recall >= r - 1e-12
        ap += float(precision[mask].max()) if np.any(mask) else 0.0
    return ap / 101.0


@dataclass
class RobustnessTable:
    """AP under clean and corrupted conditions plus the derived aggregates."""

    ap_cln: float
    ap: dict[tuple[str, int], float] = field(default_factory=dict)
    kinds: tuple[str, ...] = ()

    def missing_cells(self) -> list[tuple[str, int]]:
        return [
            (kind, s) for kind in self.kinds for s in range(1, 6) if (kind, s) not in self.ap
        ]

    def rce_cell(self, kind: str, severity: int) -> float:
        return rce(self.ap_cln, self.ap[(kind, severity)])


def ap_corr(table: RobustnessTable) -> float:
    """Mean over kinds of the per-kind severity mean."""
    missing = table.missing_cells()
    if missing:
        raise ValueError(f"robustness table incomplete; missing cells: {missing}")
    if not table.kinds:
        raise ValueError("robustness table has no corruption kinds")
    total = 0.0
    for kind in table.kinds:
        total += sum(table.ap[(kind, s)] for s in range(1, 6)) / 5.0
    return total / len(table.kinds)


def rce(ap_cln: float, ap_corrupted: float) -> float:
    """Relative corruption error: fractional AP drop from clean conditions."""
    if ap_cln <= 0.0:
        raise ValueError("ap_cln must be positive")
    return (ap_cln - ap_corrupted) / ap_cln
