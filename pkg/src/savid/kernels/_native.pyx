# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the fusion projection and farthest point sampling.

Arithmetic order matches the numpy fallback exactly so both backends are
bit-identical in float64.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

BACKEND = "native"


def kgf_project_window3x3(double[:, :, ::1] f_s, double[:, :, ::1] f_l,
                          cnp.uint8_t[:, ::1] support):
    cdef Py_ssize_t h = f_s.shape[0]
    cdef Py_ssize_t w = f_s.shape[1]
    cdef Py_ssize_t c = f_s.shape[2]
    out_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t r, col, ch, dr, dc, nr, nc
    cdef double a, b, sq, val, best, weight
    cdef bint found
    for ch in range(c):
        weight = 2.0 ** (-<double>(ch + 1))
        for r in range(h):
            for col in range(w):
                a = f_s[r, col, ch]
                best = 0.0
                found = False
                for dr in range(-1, 2):
                    nr = r + dr
                    if nr < 0 or nr >= h:
                        continue
                    for dc in range(-1, 2):
                        nc = col + dc
                        if nc < 0 or nc >= w:
                            continue
                        if not support[nr, nc]:
                            continue
                        b = f_l[nr, nc, ch]
                        sq = a * a + b * b
                        if sq == 0.0:
                            val = 0.0
                        else:
                            val = (a * b) / sqrt(sq)
                        if not found or val < best:
                            best = val
                            found = True
                if found:
                    out[r, col] += weight * best
    return out_arr


def fps(double[:, ::1] xyz, Py_ssize_t k, Py_ssize_t start):
    cdef Py_ssize_t n = xyz.shape[0]
    if k > n:
        k = n
    sel_arr = np.empty(k, dtype=np.int64)
    if k == 0:
        return sel_arr
    cdef long long[::1] sel = sel_arr
    dist_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] dist = dist_arr
    cdef Py_ssize_t i, j, nxt
    cdef double dx, dy, dz, d, best
    sel[0] = start
    for j in range(n):
        dx = xyz[j, 0] - xyz[start, 0]
        dy = xyz[j, 1] - xyz[start, 1]
        dz = xyz[j, 2] - xyz[start, 2]
        dist[j] = dx * dx + dy * dy + dz * dz
    for i in range(1, k):
        nxt = 0
        best = dist[0]
        for j in range(1, n):
            if dist[j] > best:
                best = dist[j]
                nxt = j
        sel[i] = nxt
        for j in range(n):
            dx = xyz[j, 0] - xyz[nxt, 0]
            dy = xyz[j, 1] - xyz[nxt, 1]
            dz = xyz[j, 2] - xyz[nxt, 2]
            d = dx * dx + dy * dy + dz * dz
            if d < dist[j]:
                dist[j] = d
    return sel_arr
