"""Pure-numpy heightfield ray-march, lockstep across all rays.

Numerically identical to the compiled kernel in _march.pyx: same fixed
step, same bilinear interpolation, same linear refinement of the crossing
point. Kept as the import-time fallback when the extension is not built.
"""

from __future__ import annotations

import numpy as np


def _bilin(elev, valid, gx, gy):
    """Bilinear elevation at cell-center coords; (values, ok) arrays."""
    h, w = elev.shape
    fx = gx - 0.5
    fy = gy - 0.5
    j0 = np.floor(fx).astype(np.int64)
    i0 = np.floor(fy).astype(np.int64)
    inb = (i0 >= 0) & (j0 >= 0) & (i0 + 1 < h) & (j0 + 1 < w)
    i0c = np.clip(i0, 0, h - 2)
    j0c = np.clip(j0, 0, w - 2)
    ok = inb & valid[i0c, j0c] & valid[i0c, j0c + 1] \
        & valid[i0c + 1, j0c] & valid[i0c + 1, j0c + 1]
    wx = fx - j0c
    wy = fy - i0c
    vals = ((1.0 - wy) * ((1.0 - wx) * elev[i0c, j0c] + wx * elev[i0c, j0c + 1])
            + wy * ((1.0 - wx) * elev[i0c + 1, j0c] + wx * elev[i0c + 1, j0c + 1]))
    return vals, ok


def march(elev, valid, x0, y0, cell, origin, dirs, t_start, t_end,
          step, z_min, z_max):
    """Return per-ray hit parameter t, or -1.0 for a miss."""
    elev = np.ascontiguousarray(elev, dtype=np.float64)
    validb = np.asarray(valid).astype(bool)
    dirs = np.asarray(dirs, dtype=np.float64)
    n = len(dirs)
    hit = np.full(n, -1.0)
    t = np.asarray(t_start, dtype=np.float64).copy()
    t1 = np.asarray(t_end, dtype=np.float64)
    active = t <= t1
    prev_ok = np.zeros(n, dtype=bool)
    prev_diff = np.zeros(n)
    prev_t = t.copy()
    ox, oy, oz = origin
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    while active.any():
        a = np.flatnonzero(active)
        ta = t[a]
        px = ox + dx[a] * ta
        py = oy + dy[a] * ta
        pz = oz + dz[a] * ta
        # leaving the attainable elevation band ends the ray
        dead = ((dz[a] < 0.0) & (pz < z_min)) | ((dz[a] >= 0.0) & (pz > z_max))
        terr, ok = _bilin(elev, validb, (px - x0) / cell, (py - y0) / cell)
        diff = pz - terr
        crossing = ok & (diff <= 0.0) & ~dead
        if crossing.any():
            c = a[crossing]
            refinable = prev_ok[c] & (prev_diff[c] > 0.0)
            frac = np.where(
                refinable,
                prev_diff[c] / np.where(refinable, prev_diff[c] - diff[crossing], 1.0),
                1.0,
            )
            hit[c] = np.where(refinable, prev_t[c] + frac * (t[c] - prev_t[c]), t[c])
        stop = dead | crossing
        live = ~stop
        la = a[live]
        prev_ok[la] = ok[live]
        prev_diff[la] = np.where(ok[live], diff[live], 0.0)
        prev_t[la] = t[la]
        active[a[stop]] = False
        t[la] += step
        over = la[t[la] > t1[la]]
        active[over] = False
    return hit
