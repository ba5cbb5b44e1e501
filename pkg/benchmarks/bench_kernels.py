"""Benchmark the compiled kernel backend against the numpy fallback.

Run:  python3 benchmarks/bench_kernels.py [--size 56] [--points 20000] [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from savid.kernels import native_impl, python_impl


def _time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--size", type=int, default=56, help="feature map side length")
    parser.add_argument("--channels", type=int, default=64)
    parser.add_argument("--points", type=int, default=20000, help="cloud size for fps")
    parser.add_argument("--keypoints", type=int, default=256)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    f_s = rng.normal(size=(args.size, args.size, args.channels))
    f_l = rng.normal(size=(args.size, args.size, args.channels))
    support = rng.uniform(size=(args.size, args.size)) > 0.3
    xyz = rng.normal(size=(args.points, 3)) * 20.0

    backends = [("python", python_impl)]
    if native_impl is not None:
        backends.append(("native", native_impl))
    else:
        print("native backend not built; benchmarking the numpy fallback only")

    results = {}
    for name, impl in backends:
        t_kgf = _time(lambda: impl.kgf_project_window3x3(f_s, f_l, support), args.repeats)
        t_fps = _time(lambda: impl.fps(xyz, args.keypoints, 0), args.repeats)
        results[name] = (t_kgf, t_fps)
        print(f"{name:>7}  kgf_project {t_kgf * 1e3:8.2f} ms   fps {t_fps * 1e3:8.2f} ms")

    if len(backends) == 2:
        a = python_impl.kgf_project_window3x3(f_s, f_l, support)
        b = native_impl.kgf_project_window3x3(f_s, f_l, support)
        identical = np.array_equal(a, b) and np.array_equal(
            python_impl.fps(xyz, args.keypoints, 0), native_impl.fps(xyz, args.keypoints, 0)
        )
        print(f"outputs bit-identical: {identical}")
        pk, pf = results["python"]
        nk, nf = results["native"]
        print(f"speedup: kgf_project {pk / nk:.2f}x   fps {pf / nf:.2f}x")
        if not identical:
            return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
