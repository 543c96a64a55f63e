# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels.

Expression-for-expression mirror of `_kernels_py` (see its docstring): both
backends must produce bit-identical float64 results.  No transcendental
functions here; callers precompute sigmoid/cos windows with NumPy.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor, sqrt

cnp.import_array()

GRAD_EPS = 1e-8
cdef double _GRAD_EPS = 1e-8


# ---------------------------------------------------------------------------
# trilinear interpolation
# ---------------------------------------------------------------------------

cdef inline void _cell(double p, double o, double h, long n,
                       long* i_out, double* t_out) noexcept nogil:
    cdef double u = (p - o) / h
    cdef double fu = floor(u)
    cdef double nmax = <double>(n - 2)
    cdef long i
    if fu <= 0.0:
        i = 0
    elif fu >= nmax:
        i = n - 2
    else:
        i = <long>fu
    cdef double t = u - <double>i
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    i_out[0] = i
    t_out[0] = t


def trilinear_gather(double[:, :, :, :] channels, double[::1] origin,
                     double[::1] spacing, double[:, ::1] points):
    cdef long nx = channels.shape[0]
    cdef long ny = channels.shape[1]
    cdef long nz = channels.shape[2]
    cdef long C = channels.shape[3]
    cdef long N = points.shape[0]
    out_arr = np.empty((N, C), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef long p, ch, i, j, k, cx, cy, cz
    cdef double tx, ty, tz, w, acc
    cdef double wx[2]
    cdef double wy[2]
    cdef double wz[2]
    with nogil:
        for p in range(N):
            _cell(points[p, 0], origin[0], spacing[0], nx, &i, &tx)
            _cell(points[p, 1], origin[1], spacing[1], ny, &j, &ty)
            _cell(points[p, 2], origin[2], spacing[2], nz, &k, &tz)
            wx[0] = 1.0 - tx
            wx[1] = tx
            wy[0] = 1.0 - ty
            wy[1] = ty
            wz[0] = 1.0 - tz
            wz[1] = tz
            for ch in range(C):
                acc = 0.0
                for cx in range(2):
                    for cy in range(2):
                        for cz in range(2):
                            w = (wx[cx] * wy[cy]) * wz[cz]
                            if cx == 0 and cy == 0 and cz == 0:
                                acc = w * channels[i, j, k, ch]
                            else:
                                acc = acc + w * channels[i + cx, j + cy, k + cz, ch]
                out[p, ch] = acc
    return out_arr


def trilinear_scatter(double[:, :, :, ::1] channels, double[::1] origin,
                      double[::1] spacing, double[:, ::1] points,
                      double[:, ::1] grads):
    cdef long nx = channels.shape[0]
    cdef long ny = channels.shape[1]
    cdef long nz = channels.shape[2]
    cdef long C = channels.shape[3]
    cdef long N = points.shape[0]
    cdef long V = nx * ny * nz
    idx_arr = np.empty((N, 3), dtype=np.int64)
    t_arr = np.empty((N, 3), dtype=np.float64)
    cdef long[:, ::1] idx = idx_arr
    cdef double[:, ::1] tt = t_arr
    acc_arr = np.empty((V, C), dtype=np.float64)
    cdef double[:, ::1] acc = acc_arr
    cdef double[:, ::1] flat = np.reshape(np.asarray(channels), (V, C))
    cdef long p, ch, v, cx, cy, cz, cell
    cdef double w
    cdef long i
    cdef double t
    with nogil:
        for p in range(N):
            _cell(points[p, 0], origin[0], spacing[0], nx, &i, &t)
            idx[p, 0] = i
            tt[p, 0] = t
            _cell(points[p, 1], origin[1], spacing[1], ny, &i, &t)
            idx[p, 1] = i
            tt[p, 1] = t
            _cell(points[p, 2], origin[2], spacing[2], nz, &i, &t)
            idx[p, 2] = i
            tt[p, 2] = t
        for cx in range(2):
            for cy in range(2):
                for cz in range(2):
                    for v in range(V):
                        for ch in range(C):
                            acc[v, ch] = 0.0
                    for p in range(N):
                        if cx == 0:
                            w = 1.0 - tt[p, 0]
                        else:
                            w = tt[p, 0]
                        if cy == 0:
                            w = w * (1.0 - tt[p, 1])
                        else:
                            w = w * tt[p, 1]
                        if cz == 0:
                            w = w * (1.0 - tt[p, 2])
                        else:
                            w = w * tt[p, 2]
                        cell = ((idx[p, 0] + cx) * ny + (idx[p, 1] + cy)) * nz \
                            + (idx[p, 2] + cz)
                        for ch in range(C):
                            acc[cell, ch] += w * grads[p, ch]
                        # match fallback weight association ((wx*wy)*wz)
                    for v in range(V):
                        for ch in range(C):
                            flat[v, ch] += acc[v, ch]
    return None


# ---------------------------------------------------------------------------
# level-set evolution step
# ---------------------------------------------------------------------------

cdef void _diff3(double[:, :, ::1] a, double[:, :, ::1] g, int axis,
                 double h) noexcept nogil:
    cdef long nx = a.shape[0]
    cdef long ny = a.shape[1]
    cdef long nz = a.shape[2]
    cdef long i, j, k
    cdef double two_h = 2.0 * h
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if axis == 0:
                    if i == 0:
                        g[i, j, k] = (a[1, j, k] - a[0, j, k]) / h
                    elif i == nx - 1:
                        g[i, j, k] = (a[nx - 1, j, k] - a[nx - 2, j, k]) / h
                    else:
                        g[i, j, k] = (a[i + 1, j, k] - a[i - 1, j, k]) / two_h
                elif axis == 1:
                    if j == 0:
                        g[i, j, k] = (a[i, 1, k] - a[i, 0, k]) / h
                    elif j == ny - 1:
                        g[i, j, k] = (a[i, ny - 1, k] - a[i, ny - 2, k]) / h
                    else:
                        g[i, j, k] = (a[i, j + 1, k] - a[i, j - 1, k]) / two_h
                else:
                    if k == 0:
                        g[i, j, k] = (a[i, j, 1] - a[i, j, 0]) / h
                    elif k == nz - 1:
                        g[i, j, k] = (a[i, j, nz - 1] - a[i, j, nz - 2]) / h
                    else:
                        g[i, j, k] = (a[i, j, k + 1] - a[i, j, k - 1]) / two_h


def levelset_step(double[:, :, ::1] f, double[:, :, ::1] vel,
                  double[:, :, ::1] omega, double dt, double lam,
                  double hx, double hy, double hz):
    cdef long nx = f.shape[0]
    cdef long ny = f.shape[1]
    cdef long nz = f.shape[2]
    shape = (nx, ny, nz)
    gx_arr = np.empty(shape, dtype=np.float64)
    gy_arr = np.empty(shape, dtype=np.float64)
    gz_arr = np.empty(shape, dtype=np.float64)
    out_arr = np.empty(shape, dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    cdef double[:, :, ::1] gy = gy_arr
    cdef double[:, :, ::1] gz = gz_arr
    cdef double[:, :, ::1] out = out_arr
    cdef double[:, :, ::1] mag
    cdef double[:, :, ::1] dnx
    cdef double[:, :, ::1] dny
    cdef double[:, :, ::1] dnz
    cdef long i, j, k
    cdef double m, inv, kap, sp
    with nogil:
        _diff3(f, gx, 0, hx)
        _diff3(f, gy, 1, hy)
        _diff3(f, gz, 2, hz)
    if lam != 0.0:
        mag_arr = np.empty(shape, dtype=np.float64)
        nxx_arr = np.empty(shape, dtype=np.float64)
        nyy_arr = np.empty(shape, dtype=np.float64)
        nzz_arr = np.empty(shape, dtype=np.float64)
        mag = mag_arr
        dnx = nxx_arr
        dny = nyy_arr
        dnz = nzz_arr
        with nogil:
            for i in range(nx):
                for j in range(ny):
                    for k in range(nz):
                        m = sqrt((gx[i, j, k] * gx[i, j, k]
                                  + gy[i, j, k] * gy[i, j, k])
                                 + gz[i, j, k] * gz[i, j, k])
                        mag[i, j, k] = m
                        if m > _GRAD_EPS:
                            inv = 1.0 / m
                        else:
                            inv = 0.0
                        dnx[i, j, k] = gx[i, j, k] * inv
                        dny[i, j, k] = gy[i, j, k] * inv
                        dnz[i, j, k] = gz[i, j, k] * inv
            # reuse gx/gy/gz buffers for the normalized-gradient derivatives
            _diff3(dnx, gx, 0, hx)
            _diff3(dny, gy, 1, hy)
            _diff3(dnz, gz, 2, hz)
            for i in range(nx):
                for j in range(ny):
                    for k in range(nz):
                        m = mag[i, j, k]
                        if m > _GRAD_EPS:
                            kap = (gx[i, j, k] + gy[i, j, k]) + gz[i, j, k]
                        else:
                            kap = 0.0
                        sp = vel[i, j, k] + lam * kap
                        out[i, j, k] = f[i, j, k] \
                            - (dt * omega[i, j, k]) * (m * sp)
    else:
        with nogil:
            for i in range(nx):
                for j in range(ny):
                    for k in range(nz):
                        m = sqrt((gx[i, j, k] * gx[i, j, k]
                                  + gy[i, j, k] * gy[i, j, k])
                                 + gz[i, j, k] * gz[i, j, k])
                        sp = vel[i, j, k]
                        out[i, j, k] = f[i, j, k] \
                            - (dt * omega[i, j, k]) * (m * sp)
    return out_arr


# ---------------------------------------------------------------------------
# front-to-back compositing scan
# ---------------------------------------------------------------------------

def composite_padded(double[:, ::1] alphas, double[:, :, ::1] colors,
                     long[::1] seg_counts, double[::1] bg,
                     cnp.uint8_t[::1] add_bg, double t_min):
    cdef long R = alphas.shape[0]
    color_arr = np.zeros((R, 3), dtype=np.float64)
    T_arr = np.ones(R, dtype=np.float64)
    used_arr = np.empty(R, dtype=np.int64)
    cdef double[:, ::1] color = color_arr
    cdef double[::1] T_end = T_arr
    cdef long[::1] used = used_arr
    cdef long r, jj, n, ch
    cdef double T, a, w
    with nogil:
        for r in range(R):
            n = seg_counts[r]
            T = 1.0
            used[r] = n
            for jj in range(n):
                a = alphas[r, jj]
                w = T * a
                for ch in range(3):
                    color[r, ch] += w * colors[r, jj, ch]
                T = T * (1.0 - a)
                if t_min > 0.0 and T < t_min:
                    used[r] = jj + 1
                    break
            T_end[r] = T
            if add_bg[r]:
                for ch in range(3):
                    color[r, ch] += T * bg[ch]
    return color_arr, T_arr, used_arr


# ---------------------------------------------------------------------------
# BVH all-hits traversal
# ---------------------------------------------------------------------------

def bvh_hits(double[:, ::1] node_min, double[:, ::1] node_max,
             long[::1] node_left, long[::1] node_right,
             long[::1] node_start, long[::1] node_count,
             long[::1] tri_perm, double[:, ::1] verts, long[:, ::1] tris,
             double[:, ::1] origins, double[:, ::1] dirs,
             double[::1] tnear, double[::1] tfar, long max_hits):
    cdef long n_rays = origins.shape[0]
    cdef long n_nodes = node_min.shape[0]
    counts_arr = np.zeros(n_rays, dtype=np.int64)
    out_t_arr = np.zeros((n_rays, max_hits), dtype=np.float64)
    out_tri_arr = np.zeros((n_rays, max_hits), dtype=np.int64)
    cdef long[::1] counts = counts_arr
    cdef double[:, ::1] out_t = out_t_arr
    cdef long[:, ::1] out_tri = out_tri_arr
    if n_nodes == 0:
        return counts_arr, out_t_arr, out_tri_arr

    cdef long stack[128]
    cdef long r, m, node, sp, s, c, tri, ia, ib, ic, nhits, q
    cdef double ox, oy, oz, dx, dy, dz, t_lo, t_hi
    cdef double tmin, tmax, inv, ta, tb, tswap, o, d, lo_, hi_
    cdef double ax, ay, az, e1x, e1y, e1z, e2x, e2y, e2z
    cdef double px, py, pz, det, inv_det, tx, ty, tz, u, v
    cdef double qx, qy, qz, t_hit
    cdef int axis, ok
    cdef double ht
    cdef long htri
    with nogil:
        for r in range(n_rays):
            ox = origins[r, 0]
            oy = origins[r, 1]
            oz = origins[r, 2]
            dx = dirs[r, 0]
            dy = dirs[r, 1]
            dz = dirs[r, 2]
            t_lo = tnear[r]
            t_hi = tfar[r]
            nhits = 0
            sp = 0
            stack[0] = 0
            sp = 1
            while sp > 0:
                sp -= 1
                node = stack[sp]
                tmin = t_lo
                tmax = t_hi
                ok = 1
                for axis in range(3):
                    if axis == 0:
                        o = ox
                        d = dx
                    elif axis == 1:
                        o = oy
                        d = dy
                    else:
                        o = oz
                        d = dz
                    lo_ = node_min[node, axis]
                    hi_ = node_max[node, axis]
                    if d != 0.0:
                        inv = 1.0 / d
                        ta = (lo_ - o) * inv
                        tb = (hi_ - o) * inv
                        if ta > tb:
                            tswap = ta
                            ta = tb
                            tb = tswap
                        if ta > tmin:
                            tmin = ta
                        if tb < tmax:
                            tmax = tb
                        if tmin > tmax:
                            ok = 0
                            break
                    elif o < lo_ or o > hi_:
                        ok = 0
                        break
                if ok == 0:
                    continue
                c = node_count[node]
                if c > 0:
                    s = node_start[node]
                    for m in range(s, s + c):
                        tri = tri_perm[m]
                        ia = tris[tri, 0]
                        ib = tris[tri, 1]
                        ic = tris[tri, 2]
                        ax = verts[ia, 0]
                        ay = verts[ia, 1]
                        az = verts[ia, 2]
                        e1x = verts[ib, 0] - ax
                        e1y = verts[ib, 1] - ay
                        e1z = verts[ib, 2] - az
                        e2x = verts[ic, 0] - ax
                        e2y = verts[ic, 1] - ay
                        e2z = verts[ic, 2] - az
                        px = dy * e2z - dz * e2y
                        py = dz * e2x - dx * e2z
                        pz = dx * e2y - dy * e2x
                        det = e1x * px + e1y * py + e1z * pz
                        if -1e-12 < det < 1e-12:
                            continue
                        inv_det = 1.0 / det
                        tx = ox - ax
                        ty = oy - ay
                        tz = oz - az
                        u = (tx * px + ty * py + tz * pz) * inv_det
                        if u < 0.0 or u > 1.0:
                            continue
                        qx = ty * e1z - tz * e1y
                        qy = tz * e1x - tx * e1z
                        qz = tx * e1y - ty * e1x
                        v = (dx * qx + dy * qy + dz * qz) * inv_det
                        if v < 0.0 or u + v > 1.0:
                            continue
                        t_hit = (e2x * qx + e2y * qy + e2z * qz) * inv_det
                        if t_lo < t_hit < t_hi:
                            if nhits >= max_hits:
                                nhits = -1
                                break
                            # insertion sort by (t, tri index)
                            q = nhits - 1
                            while q >= 0 and (out_t[r, q] > t_hit or
                                              (out_t[r, q] == t_hit and
                                               out_tri[r, q] > tri)):
                                out_t[r, q + 1] = out_t[r, q]
                                out_tri[r, q + 1] = out_tri[r, q]
                                q -= 1
                            out_t[r, q + 1] = t_hit
                            out_tri[r, q + 1] = tri
                            nhits += 1
                    if nhits < 0:
                        break
                else:
                    stack[sp] = node_right[node]
                    sp += 1
                    stack[sp] = node_left[node]
                    sp += 1
            counts[r] = nhits
    return counts_arr, out_t_arr, out_tri_arr
