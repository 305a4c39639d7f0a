"""Per-label signed Euclidean distance fields and the atlas cache format.

Distances are to voxel CENTERS: |value| at a voxel is the exact distance
(mm) from its center to the nearest opposite-membership voxel center, so
the anatomy surface lies implicitly between the -spacing and +spacing
shells. Interior values are negative.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import backend
from .volume import LabelVolume, VoxelGeometry

ATLAS_MAGIC = b"SDFATLAS"
ATLAS_VERSION = 1

BRUTEFORCE_VOXEL_LIMIT = 64**3


class AtlasFormatError(ValueError):
    """Corrupt, truncated, or unsupported atlas cache content."""


@dataclass(frozen=True)
class SdfVolume:
    geometry: VoxelGeometry
    label: int
    name: str
    values: np.ndarray  # float32, shape dims, signed mm

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float32)
        v.setflags(write=False)
        if v.shape != self.geometry.dims:
            raise ValueError("values shape does not match geometry dims")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class SdfAtlas:
    geometry: VoxelGeometry
    volumes: tuple[SdfVolume, ...]
    source_checksum: int

    def __post_init__(self):
        vols = tuple(self.volumes)
        if not vols:
            raise ValueError("atlas needs at least one volume")
        labels = [v.label for v in vols]
        if labels != sorted(set(labels)):
            raise ValueError("volume labels must be strictly increasing")
        for v in vols:
            if not v.geometry.same_grid(self.geometry):
                raise ValueError("all volumes must share the atlas geometry")
        object.__setattr__(self, "volumes", vols)

    @property
    def labels(self) -> list[int]:
        return [v.label for v in self.volumes]

    def stacked(self) -> np.ndarray:
        """(L, nx, ny, nz) float32 view-stack for the query kernels."""
        return np.ascontiguousarray(np.stack([v.values for v in self.volumes]))


def edt(mask: np.ndarray, spacing) -> np.ndarray:
    """Exact Euclidean distance (mm) from every voxel center to the nearest
    true voxel center, via the separable squared-distance transform."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("mask has no feature voxels")
    sx, sy, sz = (float(s) for s in spacing)
    m = np.ascontiguousarray(mask, dtype=np.uint8)
    return np.sqrt(backend.edt_sq(m, sx, sy, sz))


def edt_bruteforce(mask: np.ndarray, spacing) -> np.ndarray:
    """Direct minimization over all feature voxels; correctness oracle for
    ``edt``. Guarded to <= 64^3 total voxels."""
    mask = np.asarray(mask, dtype=bool)
    if mask.size > BRUTEFORCE_VOXEL_LIMIT:
        raise ValueError(f"volume exceeds brute-force guard of {BRUTEFORCE_VOXEL_LIMIT} voxels")
    if not mask.any():
        raise ValueError("mask has no feature voxels")
    s = np.asarray(spacing, dtype=np.float64)
    nx, ny, nz = mask.shape
    grid = np.stack(np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"), -1)
    pts = grid.reshape(-1, 3) * s  # all voxel centers, mm
    feats = np.argwhere(mask) * s
    # min_f |x - f|^2 expanded so the pairwise term is a matmul; chunked to
    # bound peak memory on large grids
    x2 = np.sum(pts**2, axis=1)
    f2 = np.sum(feats**2, axis=1)
    best = np.full(pts.shape[0], np.inf)
    for ps in range(0, pts.shape[0], 16384):
        pb = pts[ps : ps + 16384]
        acc = np.full(pb.shape[0], np.inf)
        for fs in range(0, feats.shape[0], 4096):
            fb = feats[fs : fs + 4096]
            d2 = x2[ps : ps + 16384, None] + f2[None, fs : fs + 4096] - 2.0 * (pb @ fb.T)
            np.minimum(acc, d2.min(axis=1), out=acc)
        best[ps : ps + 16384] = acc
    out = np.sqrt(np.maximum(best, 0.0)).reshape(mask.shape)
    out[mask] = 0.0  # exact by definition; avoids cancellation noise
    return out


def sign(d_exterior: np.ndarray, d_interior: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Combine the two unsigned transforms: negative inside the mask,
    positive outside. float32 output."""
    if not (d_exterior.shape == d_interior.shape == mask.shape):
        raise ValueError("dims mismatch between distance grids and mask")
    return np.where(mask, -d_interior, d_exterior).astype(np.float32)


def _sdf_for_mask(mask: np.ndarray, spacing) -> np.ndarray:
    d_ext = edt(mask, spacing)
    d_int = edt(~mask, spacing)
    return sign(d_ext, d_int, mask)


def label_volume_checksum(v: LabelVolume) -> int:
    """Content hash of a LabelVolume (geometry + label grid), used to tie
    an atlas to the labelmap it was built from."""
    g = v.geometry
    head = struct.pack(
        "<3i3d3d9d",
        *g.dims,
        *g.spacing,
        *g.origin,
        *g.direction.ravel(),
    )
    grid = np.ascontiguousarray(v.labels.astype("<u4").transpose(2, 1, 0)).tobytes()
    return backend.crc64(grid, backend.crc64(head))


def build_atlas(v: LabelVolume, workers: int = 1) -> SdfAtlas:
    """One SdfVolume per table label. Labels are processed independently
    (thread pool when workers > 1); the result is identical for any worker
    count. A table label absent from the grid is an error."""
    if not v.table:
        raise ValueError("label volume has no labels")
    labels = sorted(v.table)
    spacing = v.geometry.spacing

    def one(label: int) -> SdfVolume:
        mask = v.labels == label
        if not mask.any():
            raise ValueError(f"label {label} ({v.table[label]}) has an empty mask")
        return SdfVolume(v.geometry, label, v.table[label], _sdf_for_mask(mask, spacing))

    if workers <= 1 or len(labels) == 1:
        volumes = [one(lb) for lb in labels]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            volumes = list(pool.map(one, labels))
    return SdfAtlas(v.geometry, tuple(volumes), label_volume_checksum(v))


def _atlas_payload(a: SdfAtlas) -> bytes:
    g = a.geometry
    parts = [
        ATLAS_MAGIC,
        struct.pack("<I", ATLAS_VERSION),
        struct.pack("<3I", *g.dims),
        struct.pack("<3d", *g.spacing),
        struct.pack("<3d", *g.origin),
        struct.pack("<9d", *g.direction.ravel()),
        struct.pack("<Q", a.source_checksum),
        struct.pack("<I", len(a.volumes)),
    ]
    for vol in a.volumes:
        name = vol.name.encode("utf-8")
        parts.append(struct.pack("<II", vol.label, len(name)))
        parts.append(name)
        # x-fastest order
        parts.append(np.ascontiguousarray(vol.values.astype("<f4").transpose(2, 1, 0)).tobytes())
    return b"".join(parts)


def save_atlas(a: SdfAtlas, sink) -> None:
    """Write the atlas cache (see README for the binary layout). ``sink``
    is a path or a writable binary file object."""
    body = _atlas_payload(a)
    blob = body + struct.pack("<Q", backend.crc64(body))
    if hasattr(sink, "write"):
        sink.write(blob)
    else:
        with open(sink, "wb") as f:
            f.write(blob)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise AtlasFormatError("truncated atlas file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_atlas(source) -> SdfAtlas:
    """Read an atlas cache written by save_atlas, verifying the trailing
    CRC-64 before trusting any payload."""
    if hasattr(source, "read"):
        data = source.read()
    else:
        with open(source, "rb") as f:
            data = f.read()
    if len(data) < len(ATLAS_MAGIC) + 12:
        raise AtlasFormatError("truncated atlas file")
    if data[: len(ATLAS_MAGIC)] != ATLAS_MAGIC:
        raise AtlasFormatError("bad magic: not an atlas cache file")
    (stored,) = struct.unpack("<Q", data[-8:])
    if backend.crc64(data[:-8]) != stored:
        raise AtlasFormatError("checksum mismatch: atlas file is corrupt")

    r = _Reader(data[:-8])
    r.take(len(ATLAS_MAGIC))
    (version,) = r.unpack("<I")
    if version != ATLAS_VERSION:
        raise AtlasFormatError(f"unsupported atlas version {version}")
    dims = r.unpack("<3I")
    spacing = r.unpack("<3d")
    origin = r.unpack("<3d")
    direction = np.array(r.unpack("<9d")).reshape(3, 3)
    (source_checksum,) = r.unpack("<Q")
    (count,) = r.unpack("<I")
    try:
        geometry = VoxelGeometry(dims, spacing, origin, direction)
    except ValueError as e:
        raise AtlasFormatError(f"bad geometry block: {e}") from None
    n = int(np.prod(dims))
    volumes = []
    for _ in range(count):
        label, name_len = r.unpack("<II")
        name = r.take(name_len).decode("utf-8")
        raw = np.frombuffer(r.take(4 * n), dtype="<f4")
        values = raw.reshape(dims[::-1]).transpose(2, 1, 0)
        volumes.append(SdfVolume(geometry, label, name, values))
    if r.pos != len(r.data):
        raise AtlasFormatError("trailing bytes after last volume")
    try:
        return SdfAtlas(geometry, tuple(volumes), source_checksum)
    except ValueError as e:
        raise AtlasFormatError(str(e)) from None
