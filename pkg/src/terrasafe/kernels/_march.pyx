# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled heightfield ray-march kernel.

Same algorithm as kernels.march_py: fixed-step march with bilinear
elevation interpolation, linear refinement of the crossing point. The two
backends must stay numerically identical; the test suite compares them.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


cdef inline double _bilin(const double[:, ::1] elev, const cnp.uint8_t[:, ::1] valid,
                          double gx, double gy, int h, int w, bint* ok) nogil:
    # gx, gy in cell-center coordinates (col, row); invalid corner poisons
    cdef double fx = gx - 0.5
    cdef double fy = gy - 0.5
    cdef int j0 = <int>floor(fx)
    cdef int i0 = <int>floor(fy)
    cdef int j1 = j0 + 1
    cdef int i1 = i0 + 1
    if i0 < 0 or j0 < 0 or i1 >= h or j1 >= w:
        ok[0] = False
        return 0.0
    if not (valid[i0, j0] and valid[i0, j1] and valid[i1, j0] and valid[i1, j1]):
        ok[0] = False
        return 0.0
    cdef double wx = fx - j0
    cdef double wy = fy - i0
    ok[0] = True
    return ((1.0 - wy) * ((1.0 - wx) * elev[i0, j0] + wx * elev[i0, j1])
            + wy * ((1.0 - wx) * elev[i1, j0] + wx * elev[i1, j1]))


def march(const double[:, ::1] elev, const cnp.uint8_t[:, ::1] valid,
          double x0, double y0, double cell,
          const double[::1] origin, const double[:, ::1] dirs,
          const double[::1] t_start, const double[::1] t_end,
          double step, double z_min, double z_max):
    """Return per-ray hit parameter t, or -1.0 for a miss."""
    cdef int n = dirs.shape[0]
    cdef int h = elev.shape[0]
    cdef int w = elev.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.full(n, -1.0)
    cdef double[::1] hit = out
    cdef double ox = origin[0], oy = origin[1], oz = origin[2]
    cdef double dx, dy, dz, t, t1, px, py, pz, terr, diff, prev_diff, prev_t, frac
    cdef bint ok, prev_ok
    cdef int r
    with nogil:
        for r in range(n):
            dx = dirs[r, 0]
            dy = dirs[r, 1]
            dz = dirs[r, 2]
            t = t_start[r]
            t1 = t_end[r]
            if t > t1:
                continue
            prev_ok = False
            prev_diff = 0.0
            prev_t = t
            while t <= t1:
                px = ox + dx * t
                py = oy + dy * t
                pz = oz + dz * t
                if dz < 0.0 and pz < z_min:
                    break
                if dz >= 0.0 and pz > z_max:
                    break
                terr = _bilin(elev, valid, (px - x0) / cell, (py - y0) / cell,
                              h, w, &ok)
                if ok:
                    diff = pz - terr
                    if diff <= 0.0:
                        if prev_ok and prev_diff > 0.0:
                            frac = prev_diff / (prev_diff - diff)
                            hit[r] = prev_t + frac * (t - prev_t)
                        else:
                            hit[r] = t
                        break
                    prev_diff = diff
                    prev_ok = True
                else:
                    prev_ok = False
                prev_t = t
                t += step
    return out
