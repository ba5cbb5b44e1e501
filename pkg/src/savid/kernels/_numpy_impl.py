"""Pure-numpy implementations of the hot kernels.

Arithmetic is ordered to match the compiled extension bit-for-bit: channel
accumulation runs in ascending order and the neighbor minimum is a plain
IEEE min, so both backends produce identical float64 results.
"""

import numpy as np

BACKEND = "python"


def kgf_project_window3x3(f_s: np.ndarray, f_l: np.ndarray, support: np.ndarray) -> np.ndarray:
    """Per-location projected scalar: sum_k 2^-(k+1) * min over supported 3x3
    neighbors of the scalar pair cosine a*b/sqrt(a^2+b^2)."""
    h, w, c = f_s.shape
    out = np.zeros((h, w))
    sup = support.astype(bool)
    for ch in range(c):
        a = f_s[:, :, ch]
        b = f_l[:, :, ch]
        best = np.full((h, w), np.inf)
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                # valid output region for this shift
                r0, r1 = max(0, -dr), min(h, h - dr)
                c0, c1 = max(0, -dc), min(w, w - dc)
                if r0 >= r1 or c0 >= c1:
                    continue
                av = a[r0:r1, c0:c1]
                bv = b[r0 + dr : r1 + dr, c0 + dc : c1 + dc]
                sv = sup[r0 + dr : r1 + dr, c0 + dc : c1 + dc]
                sq = av * av + bv * bv
                with np.errstate(divide="ignore", invalid="ignore"):
                    val = np.where(sq == 0.0, 0.0, (av * bv) / np.sqrt(sq))
                blk = best[r0:r1, c0:c1]
                best[r0:r1, c0:c1] = np.where(sv, np.minimum(blk, val), blk)
        best = np.where(np.isinf(best), 0.0, best)
        out += (2.0 ** -(ch + 1)) * best
    return out


def fps(xyz: np.ndarray, k: int, start: int) -> np.ndarray:
    """Greedy farthest point sampling over xyz; ties broken by lowest index."""
    n = xyz.shape[0]
    k = min(k, n)
    sel = np.empty(k, dtype=np.int64)
    if k == 0:
        return sel
    sel[0] = start
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    dx = x - x[start]
    dy = y - y[start]
    dz = z - z[start]
    dist = dx * dx + dy * dy + dz * dz
    for i in range(1, k):
        nxt = int(np.argmax(dist))
        sel[i] = nxt
        dx = x - x[nxt]
        dy = y - y[nxt]
        dz = z - z[nxt]
        dist = np.minimum(dist, dx * dx + dy * dy + dz * dz)
    return sel
