"""Pure-numpy fallback kernels. Same contracts as the compiled module
``sdfguide._kernels``; selected at import time by ``sdfguide.backend``."""

from __future__ import annotations

import numpy as np

NAME = "pure"

_CRC64_POLY = 0xC96C5795D7870F42  # ECMA-182, reflected (CRC-64/XZ)


def _make_crc_table():
    table = np.zeros(256, dtype=np.uint64)
    for i in range(256):
        crc = i
        for _ in range(8):
            crc = (crc >> 1) ^ _CRC64_POLY if crc & 1 else crc >> 1
        table[i] = crc
    return table


_CRC_TABLE = _make_crc_table()


def crc64(data, crc: int = 0) -> int:
    """CRC-64/XZ over ``data``, chainable via the ``crc`` argument."""
    table = _CRC_TABLE
    crc ^= 0xFFFFFFFFFFFFFFFF
    for b in bytes(data):
        crc = int(table[(crc ^ b) & 0xFF]) ^ (crc >> 8)
    return crc ^ 0xFFFFFFFFFFFFFFFF


def _axis_feature_distance(mask: np.ndarray, spacing: float, axis: int) -> np.ndarray:
    """Per-line distance (mm) along ``axis`` to the nearest true voxel;
    inf where the line has none."""
    m = np.moveaxis(mask, axis, -1)
    n = m.shape[-1]
    idx = np.arange(n)
    last = np.maximum.accumulate(np.where(m, idx, -n - 1), axis=-1)
    nxt = np.flip(np.minimum.accumulate(np.flip(np.where(m, idx, 2 * n), -1), -1), -1)
    steps = np.minimum(idx - last, nxt - idx).astype(np.float64)
    d = np.where(steps > n, np.inf, steps * spacing)
    return np.moveaxis(d, -1, axis)


def _envelope_axis(d2: np.ndarray, spacing: float, axis: int) -> np.ndarray:
    """Lower-envelope pass: out[j] = min_k d2[k] + ((j-k)*spacing)^2 along
    ``axis``, via the O(n^2) broadcast form, chunked to bound memory."""
    moved = np.moveaxis(d2, axis, -1)
    shape = moved.shape
    n = shape[-1]
    idx = np.arange(n, dtype=np.float64)
    cost = ((idx[:, None] - idx[None, :]) * spacing) ** 2  # (j, k)
    flat = np.ascontiguousarray(moved).reshape(-1, n)
    out = np.empty_like(flat)
    chunk = max(1, 4_000_000 // (n * n))
    for s in range(0, flat.shape[0], chunk):
        blk = flat[s : s + chunk]
        out[s : s + chunk] = np.min(blk[:, None, :] + cost[None, :, :], axis=-1)
    return np.moveaxis(out.reshape(shape), -1, axis)


def edt_sq(mask: np.ndarray, sx: float, sy: float, sz: float) -> np.ndarray:
    """Squared Euclidean distance (mm^2) from every voxel center to the
    nearest true voxel center. Three separable phases: a two-pass scan
    along z, then lower-envelope minimization along y and x."""
    mask = np.asarray(mask, dtype=bool)
    d2 = _axis_feature_distance(mask, sz, 2) ** 2
    d2 = _envelope_axis(d2, sy, 1)
    d2 = _envelope_axis(d2, sx, 0)
    return d2


def query_nearest_batch(vols, inv_affine, origin, direction, spacing, pts, clamp):
    """Nearest-anatomy query over stacked SDF volumes, nearest sampling.

    vols: (L, nx, ny, nz) float32, labels ascending along L.
    Returns (win, dist, grad, vox, degenerate, oob); win = -1 for points
    rejected by the bounds check when clamping is off.
    """
    vols = np.asarray(vols)
    L, nx, ny, nz = vols.shape
    dims = np.array([nx, ny, nz])
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    M = pts.shape[0]
    c = (pts - origin) @ np.asarray(inv_affine).T

    oob = np.any((c < -0.5) | (c > dims - 0.5), axis=1)
    win = np.full(M, -1, dtype=np.int32)
    dist = np.full(M, np.nan)
    grad = np.full((M, 3), np.nan)
    vox = np.zeros((M, 3), dtype=np.int32)
    degen = np.zeros(M, dtype=np.uint8)

    active = ~oob | np.full(M, bool(clamp))
    if not np.any(active):
        return win, dist, grad, vox, degen, oob.astype(np.uint8)

    ca = np.clip(c[active], -0.5, dims - 0.5)
    idx = np.clip(np.floor(ca + 0.5).astype(np.int64), 0, dims - 1)
    i, j, k = idx[:, 0], idx[:, 1], idx[:, 2]

    vals = vols[:, i, j, k].astype(np.float64)  # (L, m)
    w = np.argmin(vals, axis=0)  # first min = lowest label
    m = np.arange(len(i))
    best = vals[w, m]

    # Central differences at +-1 index (clamped), on the winning volume.
    g = np.empty((len(i), 3))
    for a, (n, s) in enumerate(zip((nx, ny, nz), spacing)):
        hi = idx.copy()
        lo = idx.copy()
        hi[:, a] = np.minimum(hi[:, a] + 1, n - 1)
        lo[:, a] = np.maximum(lo[:, a] - 1, 0)
        vh = vols[w, hi[:, 0], hi[:, 1], hi[:, 2]].astype(np.float64)
        vl = vols[w, lo[:, 0], lo[:, 1], lo[:, 2]].astype(np.float64)
        g[:, a] = (vh - vl) / (2.0 * s)
    gw = g @ np.asarray(direction).T
    norm = np.linalg.norm(gw, axis=1)
    small = norm < 1e-9
    gw = np.where(small[:, None], np.nan, gw / np.where(small, 1.0, norm)[:, None])

    win[active] = w.astype(np.int32)
    dist[active] = best
    grad[active] = gw
    vox[active] = idx
    degen[active] = small.astype(np.uint8)
    return win, dist, grad, vox, degen, oob.astype(np.uint8)


def query_nearest_one(vols, inv_affine, origin, direction, spacing, x, y, z, clamp):
    """Single-point variant of query_nearest_batch; returns a flat tuple
    (win, dist, gx, gy, gz, i, j, k, degenerate, oob)."""
    win, dist, grad, vox, degen, oob = query_nearest_batch(
        vols, inv_affine, origin, direction, spacing, [[x, y, z]], clamp
    )
    return (
        int(win[0]),
        float(dist[0]),
        float(grad[0, 0]),
        float(grad[0, 1]),
        float(grad[0, 2]),
        int(vox[0, 0]),
        int(vox[0, 1]),
        int(vox[0, 2]),
        bool(degen[0]),
        bool(oob[0]),
    )
