"""Real-time point queries against an SdfAtlas: nearest anatomy, signed
distance, and the finite-difference gradient direction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .sdf import SdfAtlas, SdfVolume

GRADIENT_EPS = 1e-9


class OutOfBoundsError(ValueError):
    """Query point outside the volume with clamping disabled."""


@dataclass(frozen=True)
class ProximityResult:
    label: int
    name: str
    distance: float  # signed mm to the nearest anatomy
    gradient: np.ndarray | None  # unit world-frame vector; None when degenerate
    voxel: tuple[int, int, int]


class _QueryContext:
    """Precomputed per-atlas state shared by repeated queries (stacked
    volume array and the world->index affine)."""

    def __init__(self, atlas: SdfAtlas):
        g = atlas.geometry
        self.atlas = atlas
        self.vols = atlas.stacked()
        self.spacing = np.asarray(g.spacing)
        self.origin = np.asarray(g.origin)
        self.direction = np.ascontiguousarray(g.direction)
        self.inv_affine = np.ascontiguousarray(g.direction.T / self.spacing[:, None])


_ctx_cache: dict[int, _QueryContext] = {}


def _context(atlas: SdfAtlas) -> _QueryContext:
    ctx = _ctx_cache.get(id(atlas))
    if ctx is None or ctx.atlas is not atlas:
        ctx = _QueryContext(atlas)
        _ctx_cache.clear()
        _ctx_cache[id(atlas)] = ctx
    return ctx


def _continuous_index(geometry, p, clamp: bool) -> np.ndarray:
    c = geometry.world_to_index(p)
    dims = np.asarray(geometry.dims)
    if np.any(c < -0.5) or np.any(c > dims - 0.5):
        if not clamp:
            raise OutOfBoundsError(f"point {p} maps outside the volume (index {c})")
        c = np.clip(c, -0.5, dims - 0.5)
    return c


def _sample_at_index(values: np.ndarray, c: np.ndarray, mode: str) -> float:
    dims = np.asarray(values.shape)
    if mode == "nearest":
        i = np.clip(np.floor(c + 0.5).astype(int), 0, dims - 1)
        return float(values[i[0], i[1], i[2]])
    if mode == "trilinear":
        cc = np.clip(c, 0, dims - 1)
        i0 = np.minimum(np.floor(cc).astype(int), dims - 2)
        i0 = np.maximum(i0, 0)
        f = cc - i0
        i1 = np.minimum(i0 + 1, dims - 1)
        out = 0.0
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    w = (
                        (f[0] if dx else 1 - f[0])
                        * (f[1] if dy else 1 - f[1])
                        * (f[2] if dz else 1 - f[2])
                    )
                    out += w * float(
                        values[
                            i1[0] if dx else i0[0],
                            i1[1] if dy else i0[1],
                            i1[2] if dz else i0[2],
                        ]
                    )
        return out
    raise ValueError(f"unknown sampling mode {mode!r}")


def sample(v: SdfVolume, p, mode: str = "nearest", clamp: bool = True) -> float:
    """Signed distance (mm) at world point ``p``. Nearest mode reads the
    rounded voxel; trilinear interpolates the 8 surrounding centers."""
    c = _continuous_index(v.geometry, p, clamp)
    return _sample_at_index(v.values, c, mode)


def sdf_gradient(v: SdfVolume, p, mode: str = "nearest", clamp: bool = True) -> np.ndarray | None:
    """Unit direction of increasing distance at ``p`` (world frame), from
    central differences with a one-voxel step per axis. Returns None when
    the difference vector is degenerate (|d| < 1e-9)."""
    c = _continuous_index(v.geometry, p, clamp)
    g = np.empty(3)
    for a in range(3):
        hi = c.copy()
        lo = c.copy()
        hi[a] += 1.0
        lo[a] -= 1.0
        s_hi = _sample_at_index(v.values, np.clip(hi, -0.5, np.asarray(v.geometry.dims) - 0.5), mode)
        s_lo = _sample_at_index(v.values, np.clip(lo, -0.5, np.asarray(v.geometry.dims) - 0.5), mode)
        g[a] = (s_hi - s_lo) / (2.0 * v.geometry.spacing[a])
    gw = v.geometry.direction @ g
    norm = float(np.linalg.norm(gw))
    if norm < GRADIENT_EPS:
        return None
    return gw / norm


def nearest_anatomy(
    a: SdfAtlas, p, mode: str = "nearest", clamp: bool = True
) -> ProximityResult:
    """Minimum signed distance over all SDF volumes at ``p``; ties go to
    the lowest label value. The gradient comes from the winning volume."""
    ctx = _context(a)
    if mode == "nearest":
        p = np.asarray(p, dtype=np.float64)
        w, dist, gx, gy, gz, i, j, k, degen, oob = backend.query_nearest_one(
            ctx.vols,
            ctx.inv_affine,
            ctx.origin,
            ctx.direction,
            ctx.spacing,
            float(p[0]),
            float(p[1]),
            float(p[2]),
            clamp,
        )
        if w < 0:
            raise OutOfBoundsError(f"point {p} maps outside the volume")
        vol = a.volumes[w]
        grad = None if degen else np.array([gx, gy, gz])
        return ProximityResult(vol.label, vol.name, float(dist), grad, (i, j, k))

    c = _continuous_index(a.geometry, p, clamp)
    samples = [_sample_at_index(v.values, c, mode) for v in a.volumes]
    w = int(np.argmin(samples))  # first min = lowest label (ascending order)
    vol = a.volumes[w]
    grad = sdf_gradient(vol, p, mode=mode, clamp=True)
    dims = np.asarray(a.geometry.dims)
    vox = tuple(int(x) for x in np.clip(np.floor(c + 0.5).astype(int), 0, dims - 1))
    return ProximityResult(vol.label, vol.name, float(samples[w]), grad, vox)


def query_batch(a: SdfAtlas, pts, mode: str = "nearest", clamp: bool = True, kernels=None):
    """Vectorized nearest-anatomy queries (nearest mode only) through the
    selected kernel backend; used by the CLI bench and batch query paths.

    Returns (win_index, distance, gradient, voxel, degenerate, oob) arrays;
    win_index is -1 where the point was rejected out of bounds.
    """
    if mode != "nearest":
        results: list[ProximityResult | None] = []
        for p in np.atleast_2d(pts):
            try:
                results.append(nearest_anatomy(a, p, mode=mode, clamp=clamp))
            except OutOfBoundsError:
                results.append(None)
        return results
    ctx = _context(a)
    impl = kernels if kernels is not None else backend
    pts = np.ascontiguousarray(np.atleast_2d(pts), dtype=np.float64)
    return impl.query_nearest_batch(
        ctx.vols, ctx.inv_affine, ctx.origin, ctx.direction, ctx.spacing, pts, clamp
    )
