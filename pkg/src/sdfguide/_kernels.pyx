# cython: boundscheck=False, wraparound=False, cdivision=True
# Compiled hot kernels: exact squared EDT, nearest-anatomy queries, CRC-64.
# Contracts mirror sdfguide._pykernels.

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, floor, sqrt
from libc.stdlib cimport free, malloc

NAME = "compiled"

cdef cnp.uint64_t CRC64_POLY = 0xC96C5795D7870F42ULL

cdef cnp.uint64_t[256] _crc_table

cdef void _init_crc_table() noexcept:
    cdef cnp.uint64_t crc
    cdef int i, b
    for i in range(256):
        crc = <cnp.uint64_t> i
        for b in range(8):
            if crc & 1:
                crc = (crc >> 1) ^ CRC64_POLY
            else:
                crc = crc >> 1
        _crc_table[i] = crc

_init_crc_table()


def crc64(data, crc=0):
    """CRC-64/XZ over ``data``, chainable via the ``crc`` argument."""
    cdef const unsigned char[::1] buf = bytes(data) if not isinstance(data, (bytes, bytearray, memoryview)) else data
    cdef cnp.uint64_t c = <cnp.uint64_t> crc
    cdef Py_ssize_t i, n = buf.shape[0]
    c ^= 0xFFFFFFFFFFFFFFFFULL
    with nogil:
        for i in range(n):
            c = _crc_table[(c ^ buf[i]) & 0xFF] ^ (c >> 8)
    return c ^ 0xFFFFFFFFFFFFFFFFULL


cdef void _envelope_line(int n, double s, double* f, double* out, int* v, double* z) noexcept nogil:
    """Lower envelope of parabolas: out[j] = min_k f[k] + ((j-k)*s)^2."""
    cdef int q, k, j
    cdef double sp, pq, pv
    k = -1
    z[0] = -INFINITY
    for q in range(n):
        if f[q] == INFINITY:
            continue
        pq = q * s
        while True:
            if k < 0:
                k = 0
                v[0] = q
                z[0] = -INFINITY
                z[1] = INFINITY
                break
            pv = v[k] * s
            sp = ((f[q] + pq * pq) - (f[v[k]] + pv * pv)) / (2.0 * (pq - pv))
            if sp <= z[k]:
                k -= 1
            else:
                k += 1
                v[k] = q
                z[k] = sp
                z[k + 1] = INFINITY
                break
    if k < 0:
        for j in range(n):
            out[j] = INFINITY
        return
    k = 0
    for j in range(n):
        while z[k + 1] < j * s:
            k += 1
        pv = (j - v[k]) * s
        out[j] = pv * pv + f[v[k]]


def edt_sq(cnp.uint8_t[:, :, ::1] mask, double sx, double sy, double sz):
    """Squared Euclidean distance (mm^2) to the nearest true voxel center.

    Three separable phases: two-pass scan along the contiguous z axis,
    then lower-envelope minimization along y and x.
    """
    cdef Py_ssize_t nx = mask.shape[0], ny = mask.shape[1], nz = mask.shape[2]
    out_arr = np.empty((nx, ny, nz), dtype=np.float64)
    cdef double[:, :, ::1] d = out_arr
    cdef Py_ssize_t i, j, k, steps
    cdef double run
    cdef int nmax = <int> nx
    if ny > nmax:
        nmax = <int> ny
    if nz > nmax:
        nmax = <int> nz
    cdef double* fbuf = <double*> malloc(nmax * sizeof(double))
    cdef double* obuf = <double*> malloc(nmax * sizeof(double))
    cdef double* zbuf = <double*> malloc((nmax + 1) * sizeof(double))
    cdef int* vbuf = <int*> malloc(nmax * sizeof(int))
    if fbuf == NULL or obuf == NULL or zbuf == NULL or vbuf == NULL:
        free(fbuf); free(obuf); free(zbuf); free(vbuf)
        raise MemoryError()
    try:
        with nogil:
            # phase 1: distance along z (count * spacing, exact), then square
            for i in range(nx):
                for j in range(ny):
                    steps = -1
                    for k in range(nz):
                        if mask[i, j, k]:
                            steps = 0
                        elif steps >= 0:
                            steps += 1
                        d[i, j, k] = steps * sz if steps >= 0 else INFINITY
                    steps = -1
                    for k in range(nz - 1, -1, -1):
                        if mask[i, j, k]:
                            steps = 0
                        elif steps >= 0:
                            steps += 1
                        if steps >= 0:
                            run = steps * sz
                            if run < d[i, j, k]:
                                d[i, j, k] = run
                    for k in range(nz):
                        if d[i, j, k] != INFINITY:
                            d[i, j, k] = d[i, j, k] * d[i, j, k]
            # phase 2: envelope along y
            for i in range(nx):
                for k in range(nz):
                    for j in range(ny):
                        fbuf[j] = d[i, j, k]
                    _envelope_line(<int> ny, sy, fbuf, obuf, vbuf, zbuf)
                    for j in range(ny):
                        d[i, j, k] = obuf[j]
            # phase 3: envelope along x
            for j in range(ny):
                for k in range(nz):
                    for i in range(nx):
                        fbuf[i] = d[i, j, k]
                    _envelope_line(<int> nx, sx, fbuf, obuf, vbuf, zbuf)
                    for i in range(nx):
                        d[i, j, k] = obuf[i]
    finally:
        free(fbuf); free(obuf); free(zbuf); free(vbuf)
    return out_arr


cdef inline Py_ssize_t _clampi(Py_ssize_t v, Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


cdef double NAN_SENTINEL = float("nan")
cdef int OOB_FLAG = 1 << 30


cdef inline int _query_point(
    const float[:, :, :, ::1] vols,
    const double[:, ::1] A, double ox, double oy, double oz,
    const double[:, ::1] R, double sx, double sy, double sz,
    double px, double py, double pz, bint clamp,
    double* dist, double* gout, Py_ssize_t* vout,
    int* degen,
) noexcept nogil:
    """Returns winning volume index, or -1 when rejected out of bounds."""
    cdef Py_ssize_t L = vols.shape[0]
    cdef Py_ssize_t nx = vols.shape[1], ny = vols.shape[2], nz = vols.shape[3]
    cdef double rx = px - ox, ry = py - oy, rz = pz - oz
    cdef double cx = A[0, 0] * rx + A[0, 1] * ry + A[0, 2] * rz
    cdef double cy = A[1, 0] * rx + A[1, 1] * ry + A[1, 2] * rz
    cdef double cz = A[2, 0] * rx + A[2, 1] * ry + A[2, 2] * rz
    cdef bint oob = (cx < -0.5 or cx > nx - 0.5 or
                     cy < -0.5 or cy > ny - 0.5 or
                     cz < -0.5 or cz > nz - 0.5)
    if oob and not clamp:
        return -1
    if cx < -0.5: cx = -0.5
    elif cx > nx - 0.5: cx = nx - 0.5
    if cy < -0.5: cy = -0.5
    elif cy > ny - 0.5: cy = ny - 0.5
    if cz < -0.5: cz = -0.5
    elif cz > nz - 0.5: cz = nz - 0.5
    cdef Py_ssize_t i = _clampi(<Py_ssize_t> floor(cx + 0.5), 0, nx - 1)
    cdef Py_ssize_t j = _clampi(<Py_ssize_t> floor(cy + 0.5), 0, ny - 1)
    cdef Py_ssize_t k = _clampi(<Py_ssize_t> floor(cz + 0.5), 0, nz - 1)
    cdef double best = INFINITY, val
    cdef Py_ssize_t l, w = 0
    for l in range(L):
        val = vols[l, i, j, k]
        if val < best:
            best = val
            w = l
    cdef double ga = (vols[w, _clampi(i + 1, 0, nx - 1), j, k] -
                      vols[w, _clampi(i - 1, 0, nx - 1), j, k]) / (2.0 * sx)
    cdef double gb = (vols[w, i, _clampi(j + 1, 0, ny - 1), k] -
                      vols[w, i, _clampi(j - 1, 0, ny - 1), k]) / (2.0 * sy)
    cdef double gc = (vols[w, i, j, _clampi(k + 1, 0, nz - 1)] -
                      vols[w, i, j, _clampi(k - 1, 0, nz - 1)]) / (2.0 * sz)
    cdef double gx = R[0, 0] * ga + R[0, 1] * gb + R[0, 2] * gc
    cdef double gy = R[1, 0] * ga + R[1, 1] * gb + R[1, 2] * gc
    cdef double gz = R[2, 0] * ga + R[2, 1] * gb + R[2, 2] * gc
    cdef double norm = sqrt(gx * gx + gy * gy + gz * gz)
    if norm < 1e-9:
        degen[0] = 1
        gout[0] = gout[1] = gout[2] = <double> NAN_SENTINEL
    else:
        degen[0] = 0
        gout[0] = gx / norm
        gout[1] = gy / norm
        gout[2] = gz / norm
    dist[0] = best
    vout[0] = i
    vout[1] = j
    vout[2] = k
    if oob:
        return <int> w | OOB_FLAG
    return <int> w


def query_nearest_one(const float[:, :, :, ::1] vols, const double[:, ::1] inv_affine,
                      origin, const double[:, ::1] direction, spacing,
                      double x, double y, double z, bint clamp):
    """Single-point nearest-anatomy query; returns a flat tuple
    (win, dist, gx, gy, gz, i, j, k, degenerate, oob)."""
    cdef double ox = origin[0], oy = origin[1], oz = origin[2]
    cdef double sx = spacing[0], sy = spacing[1], sz = spacing[2]
    cdef double dist = 0.0
    cdef double g[3]
    cdef Py_ssize_t v[3]
    cdef int degen = 0
    cdef int w = _query_point(vols, inv_affine, ox, oy, oz, direction,
                              sx, sy, sz, x, y, z, clamp, &dist, g, v, &degen)
    cdef bint oob = False
    if w == -1:
        return (-1, float("nan"), float("nan"), float("nan"), float("nan"),
                0, 0, 0, False, True)
    if w & OOB_FLAG:
        oob = True
        w &= ~OOB_FLAG
    return (w, dist, g[0], g[1], g[2], v[0], v[1], v[2], bool(degen), oob)


def query_nearest_batch(const float[:, :, :, ::1] vols, const double[:, ::1] inv_affine,
                        origin, const double[:, ::1] direction, spacing,
                        const double[:, ::1] pts, bint clamp):
    """Batch nearest-anatomy queries; see the pure backend for the contract."""
    cdef Py_ssize_t M = pts.shape[0], m
    win_arr = np.full(M, -1, dtype=np.int32)
    dist_arr = np.full(M, np.nan)
    grad_arr = np.full((M, 3), np.nan)
    vox_arr = np.zeros((M, 3), dtype=np.int32)
    degen_arr = np.zeros(M, dtype=np.uint8)
    oob_arr = np.zeros(M, dtype=np.uint8)
    cdef cnp.int32_t[::1] win = win_arr
    cdef double[::1] dist = dist_arr
    cdef double[:, ::1] grad = grad_arr
    cdef cnp.int32_t[:, ::1] vox = vox_arr
    cdef cnp.uint8_t[::1] degen = degen_arr
    cdef cnp.uint8_t[::1] oob = oob_arr
    cdef double ox = origin[0], oy = origin[1], oz = origin[2]
    cdef double sx = spacing[0], sy = spacing[1], sz = spacing[2]
    cdef double d
    cdef double g[3]
    cdef Py_ssize_t v[3]
    cdef int dg, w
    with nogil:
        for m in range(M):
            dg = 0
            w = _query_point(vols, inv_affine, ox, oy, oz, direction,
                             sx, sy, sz, pts[m, 0], pts[m, 1], pts[m, 2],
                             clamp, &d, g, v, &dg)
            if w == -1:
                oob[m] = 1
                continue
            if w & OOB_FLAG:
                oob[m] = 1
                w &= ~OOB_FLAG
            win[m] = w
            dist[m] = d
            grad[m, 0] = g[0]
            grad[m, 1] = g[1]
            grad[m, 2] = g[2]
            vox[m, 0] = v[0]
            vox[m, 1] = v[1]
            vox[m, 2] = v[2]
            degen[m] = <cnp.uint8_t> dg
    return win_arr, dist_arr, grad_arr, vox_arr, degen_arr, oob_arr
