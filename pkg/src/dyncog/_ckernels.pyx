# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Semantics must match ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def candidate_offsets(int radius):
    offs = [(dy, dx) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)]
    offs.sort(key=lambda o: (o[0] * o[0] + o[1] * o[1], o[0], o[1]))
    return np.asarray(offs, dtype=np.int32).reshape(-1, 2)


def block_match(prev, curr, int block=16, int radius=8):
    cdef cnp.int32_t[:, ::1] p = np.ascontiguousarray(prev, dtype=np.int32)
    cdef cnp.int32_t[:, ::1] c = np.ascontiguousarray(curr, dtype=np.int32)
    cdef int h = c.shape[0]
    cdef int w = c.shape[1]
    cdef int ny = (h - 2 * radius) // block if h >= block + 2 * radius else 0
    cdef int nx = (w - 2 * radius) // block if w >= block + 2 * radius else 0
    out_arr = np.zeros((ny, nx, 2), dtype=np.int32)
    if ny == 0 or nx == 0:
        return out_arr
    cdef cnp.int32_t[:, :, ::1] out = out_arr
    cdef cnp.int32_t[:, ::1] offs = candidate_offsets(radius)
    cdef int n_off = offs.shape[0]
    cdef int by, bx, y0, x0, k, dy, dx, i, j, best_k
    cdef long long sad, best, diff
    for by in range(ny):
        y0 = radius + by * block
        for bx in range(nx):
            x0 = radius + bx * block
            best = -1
            best_k = 0
            for k in range(n_off):
                dy = offs[k, 0]
                dx = offs[k, 1]
                sad = 0
                for i in range(block):
                    for j in range(block):
                        diff = c[y0 + i, x0 + j] - p[y0 + dy + i, x0 + dx + j]
                        sad += diff if diff >= 0 else -diff
                    if best >= 0 and sad >= best:
                        break
                if best < 0 or sad < best:
                    best = sad
                    best_k = k
            # content moved from prev (y0+dy, x0+dx) to curr (y0, x0)
            out[by, bx, 0] = -offs[best_k, 0]
            out[by, bx, 1] = -offs[best_k, 1]
    return out_arr


def best_split(x, y, w):
    cdef double[::1] xs = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] ys = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[::1] ws = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t i, best_i = -1
    cdef double total_w = 0.0, total_s = 0.0
    cdef double wl = 0.0, sl = 0.0, wr, sr, score, best = 0.0, base
    for i in range(n):
        total_w += ws[i]
        total_s += ws[i] * ys[i]
    if n < 2 or total_w <= 0.0:
        return -1.0, -1
    base = total_s * total_s / total_w
    for i in range(n - 1):
        wl += ws[i]
        sl += ws[i] * ys[i]
        if not (xs[i] < xs[i + 1]):
            continue
        wr = total_w - wl
        sr = total_s - sl
        if wl <= 0.0 or wr <= 0.0:
            continue
        score = sl * sl / wl + sr * sr / wr
        if best_i < 0 or score > best:
            best = score
            best_i = i
    if best_i < 0:
        return -1.0, -1
    return best - base, best_i
