"""Command-line interface.

Exit codes: 0 success, 2 validation error, 3 numerical check failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import formats
from .config import load_config
from .scene import generate_scene

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="key-value config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )
    parser.add_argument("--asmn-mode", choices=["attention", "elementwise"], default=None)
    parser.add_argument("--kgf-cosine", choices=["paper", "standard"], default=None)
    parser.add_argument("--severity-table", type=Path, default=None)
    parser.add_argument("--jobs", type=int, default=None)


def _config_from_args(args) -> "PipelineConfig":
    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, val = item.partition("=")
        overrides[key.strip()] = val
    if args.asmn_mode:
        overrides["asmn_mode"] = args.asmn_mode
    if args.kgf_cosine:
        overrides["kgf_cosine"] = args.kgf_cosine
    if args.severity_table:
        overrides["severity_table"] = str(args.severity_table)
    if args.jobs is not None:
        overrides["jobs"] = str(args.jobs)
    return load_config(args.config, overrides)


def _scene_for(config, seed: int | None):
    return generate_scene(
        seed if seed is not None else config.seed,
        config.num_objects,
        config.range_m,
        config.sequence_length,
        (config.image_h, config.image_w),
    )


def cmd_forward(args) -> int:
    from .pipeline import run_forward

    config = _config_from_args(args)
    scene = _scene_for(config, args.scene_seed)
    result = run_forward(config, scene)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_tensor(out / "f_i.svtn", result.f_i[-1])
    formats.write_tensor(out / "f_l.svtn", result.f_l[-1])
    formats.write_tensor(out / "f_s.svtn", result.f_s)
    formats.write_tensor(out / "f_kgf.svtn", result.f_kgf)
    summary = {
        "schema": "savid-forward/1",
        "frames": len(result.f_i),
        "output_shape": list(result.f_kgf.shape),
        "timings_s": {k: round(v, 6) for k, v in result.timings.items()},
        "keypoints": len(result.keypoints),
        "config": config.to_dict(),
    }
    (out / "forward.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    print(f"wrote forward outputs to {out}")
    return EXIT_OK


def cmd_robustness(args) -> int:
    from .pipeline import (
        FileProvider,
        ProxyScorer,
        emit_report,
        run_robustness_suite,
        table_to_report,
    )

    config = _config_from_args(args)
    scene = _scene_for(config, args.scene_seed)
    if args.detections:
        provider = FileProvider(args.detections)
        provider_name = f"files:{args.detections}"
    else:
        provider = ProxyScorer(config)
        provider_name = "proxy (non-paper stand-in scorer)"
    table, errors = run_robustness_suite(config, scene, provider)
    report = table_to_report(table, config, provider_name)
    written = emit_report(report, args.out)
    for path in written:
        print(f"wrote {path}")
    if errors:
        for cell, msg in sorted(errors.items()):
            print(f"cell {cell}: {msg}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(
        f"ap_cln={table.ap_cln:.4f} ap_corr={report.get('ap_corr', float('nan')):.4f} "
        f"rce={report.get('rce', float('nan')):.4f}"
    )
    return EXIT_OK


def cmd_gen_scene(args) -> int:
    config = _config_from_args(args)
    scene = generate_scene(
        args.seed, args.objects, args.range, config.sequence_length,
        (config.image_h, config.image_w),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(scene.frames):
        formats.write_point_cloud(out / f"frame{i:02d}.svpc", frame.cloud)
        formats.write_tensor(out / f"frame{i:02d}_image.svtn", frame.image)
        formats.write_detections(out / f"frame{i:02d}_gt.txt", frame.boxes)
    print(f"wrote {len(scene.frames)} frames to {out}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selfcheck import run_all

    results = run_all()
    failed = 0
    for name, ok, detail in results:
        status = "PASS" if ok else "FAIL"
        print(f"[{status}] {name}: {detail}")
        failed += not ok
    if failed:
        print(f"{failed}/{len(results)} checks failed")
        return EXIT_NUMERICAL
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="savid")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("forward", help="run the three-stage forward pass")
    _add_config_args(p)
    p.add_argument("--scene-seed", type=int, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("robustness", help="run the 10x5 corruption sweep")
    _add_config_args(p)
    p.add_argument("--scene-seed", type=int, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--detections", type=Path, default=None, help="external detection files")
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("gen-scene", help="generate a synthetic scene to disk")
    _add_config_args(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--objects", type=int, default=6)
    p.add_argument("--range", type=float, default=60.0)
    p.add_argument("--out", type=Path, default=Path("scene_out"))
    p.set_defaults(func=cmd_gen_scene)

    p = sub.add_parser("selftest", help="run all oracles and gradient checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
