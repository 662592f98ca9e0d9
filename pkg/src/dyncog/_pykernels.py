"""Pure-numpy kernels used when the compiled extension is unavailable.

Results are identical to ``_ckernels``: block matching works on int32
intensities and the split search accumulates prefix sums sequentially,
in the same order as the compiled loop.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def candidate_offsets(radius: int) -> np.ndarray:
    offs = [(dy, dx) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)]
    offs.sort(key=lambda o: (o[0] * o[0] + o[1] * o[1], o[0], o[1]))
    return np.asarray(offs, dtype=np.int32).reshape(-1, 2)


def block_match(prev, curr, block: int = 16, radius: int = 8) -> np.ndarray:
    p = np.ascontiguousarray(prev, dtype=np.int32)
    c = np.ascontiguousarray(curr, dtype=np.int32)
    h, w = c.shape
    ny = (h - 2 * radius) // block if h >= block + 2 * radius else 0
    nx = (w - 2 * radius) // block if w >= block + 2 * radius else 0
    out = np.zeros((ny, nx, 2), dtype=np.int32)
    if ny == 0 or nx == 0:
        return out
    offs = candidate_offsets(radius)
    span = 2 * radius + 1
    # index of each (dy, dx) inside the (span, span) window grid
    flat_idx = (offs[:, 0] + radius) * span + (offs[:, 1] + radius)
    for by in range(ny):
        y0 = radius + by * block
        for bx in range(nx):
            x0 = radius + bx * block
            ref = c[y0:y0 + block, x0:x0 + block]
            region = p[y0 - radius:y0 + radius + block, x0 - radius:x0 + radius + block]
            wins = sliding_window_view(region, (block, block))
            sad = np.abs(wins - ref).sum(axis=(2, 3), dtype=np.int64).ravel()[flat_idx]
            k = int(np.argmin(sad))
            out[by, bx, 0] = -offs[k, 0]
            out[by, bx, 1] = -offs[k, 1]
    return out


def best_split(x, y, w) -> tuple[float, int]:
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        return -1.0, -1
    cw = np.cumsum(w)
    cs = np.cumsum(w * y)
    total_w, total_s = cw[-1], cs[-1]
    if total_w <= 0.0:
        return -1.0, -1
    base = total_s * total_s / total_w
    wl, sl = cw[:-1], cs[:-1]
    wr = total_w - wl
    sr = total_s - sl
    ok = (x[:-1] < x[1:]) & (wl > 0.0) & (wr > 0.0)
    if not ok.any():
        return -1.0, -1
    with np.errstate(divide="ignore", invalid="ignore"):
        score = sl * sl / wl + sr * sr / wr
    score = np.where(ok, score, -np.inf)
    i = int(np.argmax(score))
    return float(score[i] - base), i
