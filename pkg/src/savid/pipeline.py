"""End-to-end orchestration: the three-stage forward pass, the corruption
sweep, and report emission."""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import asmn as asmn_mod
from . import corruption as corr_mod
from . import gman as gman_mod
from . import kgf as kgf_mod
from . import metrics as metrics_mod
from . import pointcloud as pc_mod
from .config import PipelineConfig
from .depth import DepthMap, densify_depth, project_points
from .metrics import Box3D, RobustnessTable, ap_corr, rce
from .numerics import LinearMap, inference_mode
from .scene import SceneFrame, SyntheticScene

REPORT_SCHEMA = "savid-report/1"


@dataclass
class ForwardResult:
    f_i: list[np.ndarray]  # per frame (H, W, C)
    f_l: list[np.ndarray]  # per frame (H, W, C)
    f_s: np.ndarray  # final fused stage-2 map
    f_kgf: np.ndarray  # final stage-3 output
    gman_states: list
    asmn_states: list
    timings: dict[str, float]
    keypoints: list[int]


def _build_params(config: PipelineConfig):
    gman_params = gman_mod.init_gman_params(
        channels=config.channels,
        n_heads=config.n_heads,
        window=config.window,
        dropout_rate=config.dropout_rate,
        seed=config.seed,
    )
    asmn_params = asmn_mod.init_asmn_params(
        channels=config.channels,
        rho=config.asmn_rho,
        mode=config.asmn_mode,
        seed=config.seed + 1,
    )
    conv_stack = pc_mod.make_conv_stack(config.seed + 2)
    bev_map = LinearMap.seeded(pc_mod.CONV_STAGE_DIMS[-1], config.channels, config.seed + 3)
    return gman_params, asmn_params, conv_stack, bev_map


def _lidar_features(
    frame: SceneFrame, config: PipelineConfig, conv_stack, bev_map: LinearMap
) -> np.ndarray:
    grid, _dropped = pc_mod.voxelize_mean(
        frame.cloud, config.grid_origin, config.grid_voxel, config.grid_dims
    )
    if not grid.cells:
        return np.zeros((config.image_h, config.image_w, config.channels))
    out = pc_mod.conv_feature_chain(grid, conv_stack)
    return pc_mod.bev_rasterize(out, (config.image_h, config.image_w), bev_map)


def _frame_depth(frame: SceneFrame, camera) -> DepthMap:
    sparse = project_points(frame.cloud, camera)
    if not np.any(sparse.valid_mask):
        return sparse  # no LiDAR support: all-zero depth, stage 1 still runs
    return densify_depth(sparse)


def run_forward(config: PipelineConfig, scene: SyntheticScene) -> ForwardResult:
    """Depth -> stage 1 -> voxel features -> stage 2 -> stage 3, with per-stage
    wall times. Stages can be disabled individually for ablations."""
    gman_params, asmn_params, conv_stack, bev_map = _build_params(config)
    kgf_spec = kgf_mod.NeighborSpec(config.kgf_neighbors, config.kgf_k)
    timings = {"depth": 0.0, "gman": 0.0, "lidar": 0.0, "asmn": 0.0, "kgf": 0.0}
    f_i_frames: list[np.ndarray] = []
    f_l_frames: list[np.ndarray] = []
    gman_states: list = []
    gman_state = None
    frames = scene.frames[: config.sequence_length]
    if not frames:
        raise ValueError("scene has no frames")
    with inference_mode():
        for frame in frames:
            t0 = time.perf_counter()
            try:
                depth = _frame_depth(frame, scene.camera)
            except Exception as exc:
                raise RuntimeError(f"stage depth failed: {exc}") from exc
            timings["depth"] += time.perf_counter() - t0

            t0 = time.perf_counter()
            try:
                if config.enable_gman:
                    f_i, gman_state = gman_mod.gman_forward(
                        frame.image, depth, gman_params, gman_state
                    )
                    gman_states.append(gman_state)
                else:
                    # raw projected image, channel-aligned only
                    f_i = gman_params.embed_image(frame.image)
            except Exception as exc:
                raise RuntimeError(f"stage gman failed: {exc}") from exc
            timings["gman"] += time.perf_counter() - t0

            t0 = time.perf_counter()
            try:
                f_l = _lidar_features(frame, config, conv_stack, bev_map)
            except Exception as exc:
                raise RuntimeError(f"stage lidar failed: {exc}") from exc
            timings["lidar"] += time.perf_counter() - t0
            f_i_frames.append(f_i)
            f_l_frames.append(f_l)

        t0 = time.perf_counter()
        try:
            if config.enable_asmn:
                f_s, asmn_states = asmn_mod.asmn_sequence(
                    list(zip(f_i_frames, f_l_frames)), asmn_params
                )
            else:
                f_s, asmn_states = f_i_frames[-1], []
        except Exception as exc:
            raise RuntimeError(f"stage asmn failed: {exc}") from exc
        timings["asmn"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        try:
            if config.enable_kgf:
                f_kgf = kgf_mod.kgf_fuse(f_s, f_l_frames[-1], kgf_spec, config.kgf_cosine)
            else:
                f_kgf = f_s
        except Exception as exc:
            raise RuntimeError(f"stage kgf failed: {exc}") from exc
        timings["kgf"] = time.perf_counter() - t0

    final_cloud = frames[-1].cloud
    keypoints = (
        pc_mod.fps_sample(final_cloud, config.fps_keypoints) if len(final_cloud) else []
    )
    return ForwardResult(
        f_i=f_i_frames,
        f_l=f_l_frames,
        f_s=f_s,
        f_kgf=f_kgf,
        gman_states=gman_states,
        asmn_states=asmn_states,
        timings=timings,
        keypoints=keypoints,
    )


def _cell_seed(base: int, kind: str, severity: int, frame: int) -> int:
    mix = base
    for token in (corr_mod.ALL_KINDS.index(kind) + 1, severity, frame + 1):
        mix = (mix * 1000003 + token) % (2**63)
    return mix


def corrupt_scene(
    scene: SyntheticScene,
    kind: str,
    severity: int,
    base_seed: int,
    table: corr_mod.SeverityTable | None = None,
) -> SyntheticScene:
    """Corrupted copy: LiDAR kinds touch every frame cloud, image kinds every
    frame image; per-frame seeds derive deterministically from base_seed."""
    out = SyntheticScene(seed=scene.seed, camera=scene.camera)
    for idx, frame in enumerate(scene.frames):
        spec = corr_mod.CorruptionSpec(kind, severity, _cell_seed(base_seed, kind, severity, idx))
        if kind in corr_mod.LIDAR_KINDS:
            cloud = corr_mod.corrupt_lidar(frame.cloud, spec, table)
            out.frames.append(SceneFrame(cloud=cloud, image=frame.image, boxes=frame.boxes))
        else:
            image = corr_mod.corrupt_image(frame.image, spec, table)
            out.frames.append(SceneFrame(cloud=frame.cloud, image=image, boxes=frame.boxes))
    return out


@dataclass
class ProxyScorer:
    """Non-paper stand-in detection head used only to exercise the metrics
    plumbing. Peak-pools |F_KGF| inside ground-truth-anchored proposals,
    scores each by the log-space drift of its peak from the clean run, and
    mixes in fixed decoy boxes so precision degrades smoothly."""

    config: PipelineConfig
    decay: float = 1.0
    keep_threshold: float = 0.05
    decoy_score: float = 0.55
    peak_weight: float = 0.15
    image_weight: float = 150.0
    lidar_weight: float = 4.0
    lidar_cap: float = 0.3
    clean_peak: np.ndarray | None = None
    clean_img: float | None = None
    clean_lid: float | None = None

    def _box_peaks(self, f_kgf: np.ndarray, boxes: list[Box3D]) -> np.ndarray:
        h, w = f_kgf.shape[:2]
        d0, d1 = self.config.grid_dims[0], self.config.grid_dims[1]
        ox, oy, _ = self.config.grid_origin
        vx, vy, _ = self.config.grid_voxel
        peaks = []
        for box in boxes:
            r = (box.center[0] - ox) / (d0 * vx) * h
            c = (box.center[1] - oy) / (d1 * vy) * w
            half = max(1, int(round(max(box.size[0], box.size[1]) / (2.0 * vx) * h / d0)))
            r0 = int(np.clip(round(r) - half, 0, h - 1))
            r1 = int(np.clip(round(r) + half + 1, 1, h))
            c0 = int(np.clip(round(c) - half, 0, w - 1))
            c1 = int(np.clip(round(c) + half + 1, 1, w))
            peaks.append(float(np.abs(f_kgf[r0:r1, c0:c1]).max()))
        return np.asarray(peaks)

    @staticmethod
    def _log_peak(peaks: np.ndarray) -> np.ndarray:
        return np.log(np.maximum(peaks, 1e-300))

    @staticmethod
    def _log_mean(arr: np.ndarray) -> float:
        return float(np.log(np.mean(np.abs(arr)) + 1e-300))

    def calibrate(self, clean: ForwardResult, scene: SyntheticScene) -> None:
        boxes = scene.frames[min(self.config.sequence_length, len(scene.frames)) - 1].boxes
        self.clean_peak = self._log_peak(self._box_peaks(clean.f_kgf, boxes))
        self.clean_img = self._log_mean(clean.f_i[-1])
        self.clean_lid = self._log_mean(clean.f_l[-1])

    def _decoys(self, boxes: list[Box3D]) -> list[Box3D]:
        rng = np.random.default_rng(self.config.seed + 77)
        decoys = []
        for box in boxes:
            shift = rng.uniform(6.0, 12.0, size=2) * rng.choice([-1.0, 1.0], size=2)
            decoys.append(
                Box3D(
                    center=box.center + np.array([*shift, 0.0]),
                    size=box.size,
                    yaw=box.yaw,
                    class_id=box.class_id,
                    score=self.decoy_score,
                )
            )
        return decoys

    def __call__(self, result: ForwardResult, scene: SyntheticScene, spec=None) -> list[Box3D]:
        if self.clean_peak is None:
            raise RuntimeError("ProxyScorer must be calibrated on the clean run first")
        boxes = scene.frames[min(self.config.sequence_length, len(scene.frames)) - 1].boxes
        peak_drift = np.abs(self._log_peak(self._box_peaks(result.f_kgf, boxes)) - self.clean_peak)
        g_img = abs(self._log_mean(result.f_i[-1]) - self.clean_img)
        g_lid = min(abs(self._log_mean(result.f_l[-1]) - self.clean_lid), self.lidar_cap)
        drift = self.peak_weight * peak_drift + self.image_weight * g_img + self.lidar_weight * g_lid
        scores = np.exp(-self.decay * drift)
        preds = [
            Box3D(
                center=b.center,
                size=b.size,
                yaw=b.yaw,
                class_id=b.class_id,
                score=float(s),
            )
            for b, s in zip(boxes, scores)
            if s > self.keep_threshold
        ]
        return preds + self._decoys(boxes)


def identity_provider(result: ForwardResult, scene: SyntheticScene, spec=None) -> list[Box3D]:
    """Oracle provider: returns the ground truth as predictions."""
    frame = scene.frames[-1]
    return [
        Box3D(center=b.center, size=b.size, yaw=b.yaw, class_id=b.class_id, score=1.0)
        for b in frame.boxes
    ]


class FileProvider:
    """Reads detection files from a directory: clean.txt plus
    <kind>_s<severity>.txt per corruption cell."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def __call__(self, result: ForwardResult, scene: SyntheticScene, spec=None) -> list[Box3D]:
        from .formats import read_detections

        name = "clean.txt" if spec is None else f"{spec[0]}_s{spec[1]}.txt"
        return read_detections(self.directory / name)


def _evaluate(preds: list[Box3D], gts: list[Box3D], config: PipelineConfig) -> float:
    kept = metrics_mod.nms(preds, config.nms_iou)
    return metrics_mod.average_precision([preds[i] for i in kept], gts, config.ap_iou)


def _run_cell(args):
    config, scene, provider, kind, severity, table_path = args
    table = corr_mod.SeverityTable.load(table_path) if table_path else None
    corrupted = corrupt_scene(scene, kind, severity, config.seed, table)
    result = run_forward(config, corrupted)
    gts = corrupted.frames[: config.sequence_length][-1].boxes
    preds = provider(result, corrupted, (kind, severity))
    return kind, severity, _evaluate(preds, gts, config)


def run_robustness_suite(
    config: PipelineConfig,
    scene: SyntheticScene,
    provider,
) -> tuple[RobustnessTable, dict[tuple[str, int], str]]:
    """Clean AP, then AP for all 10 kinds x 5 severities on corrupted copies.

    Returns the table plus a map of per-cell provider failures; failed cells
    stay missing and ap_corr refuses completion on them.
    """
    clean = run_forward(config, scene)
    if hasattr(provider, "calibrate"):
        provider.calibrate(clean, scene)
    gts = scene.frames[: config.sequence_length][-1].boxes
    ap_cln = _evaluate(provider(clean, scene, None), gts, config)
    table = RobustnessTable(ap_cln=ap_cln, kinds=corr_mod.ALL_KINDS)
    errors: dict[tuple[str, int], str] = {}
    cells = [(kind, s) for kind in corr_mod.ALL_KINDS for s in range(1, 6)]
    jobs = [
        (config, scene, provider, kind, s, config.severity_table) for kind, s in cells
    ]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            futures = {pool.submit(_run_cell, job): (job[3], job[4]) for job in jobs}
            for fut, cell in futures.items():
                try:
                    _, _, ap = fut.result()
                    table.ap[cell] = ap
                except Exception as exc:
                    errors[cell] = str(exc)
    else:
        for job in jobs:
            kind, s = job[3], job[4]
            try:
                _, _, ap = _run_cell(job)
                table.ap[(kind, s)] = ap
            except Exception as exc:
                errors[(kind, s)] = str(exc)
    return table, errors


def table_to_report(table: RobustnessTable, config: PipelineConfig, provider_name: str) -> dict:
    report = {
        "schema": REPORT_SCHEMA,
        "provider": provider_name,
        "ap_cln": table.ap_cln,
        "ap": {
            kind: {str(s): table.ap[(kind, s)] for s in range(1, 6) if (kind, s) in table.ap}
            for kind in table.kinds
        },
        "config": config.to_dict(),
    }
    if not table.missing_cells() and table.kinds:
        corr = ap_corr(table)
        report["ap_corr"] = corr
        if table.ap_cln > 0:
            report["rce"] = rce(table.ap_cln, corr)
            report["rce_cells"] = {
                kind: {str(s): table.rce_cell(kind, s) for s in range(1, 6)}
                for kind in table.kinds
            }
    return report


def report_to_table(report: dict) -> RobustnessTable:
    if report.get("schema") != REPORT_SCHEMA:
        raise ValueError(f"unsupported report schema {report.get('schema')!r}")
    table = RobustnessTable(
        ap_cln=report["ap_cln"], kinds=tuple(report["ap"].keys())
    )
    for kind, row in report["ap"].items():
        for s, ap in row.items():
            table.ap[(kind, int(s))] = ap
    return table


def emit_report(report: dict, out_dir: str | Path) -> list[Path]:
    """Write robustness.json plus a CSV of the RCE-vs-severity curves."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "robustness.json"
    json_path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    written = [json_path]
    if "rce_cells" in report:
        csv_path = out_dir / "rce_curves.csv"
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["kind"] + [f"severity_{s}" for s in range(1, 6)])
            for kind in report["ap"]:
                writer.writerow(
                    [kind] + [repr(report["rce_cells"][kind][str(s)]) for s in range(1, 6)]
                )
        written.append(csv_path)
    return written


def parse_report(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
