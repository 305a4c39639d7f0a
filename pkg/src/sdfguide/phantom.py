"""Synthetic phantoms and demo trajectories, so everything runs without
patient data. The three-blob phantom places EAC/TMJ/Sinus-like spheres in
one slice plane; the sixteen-label phantom exercises atlas-scale builds."""

from __future__ import annotations

import numpy as np

from .drillsim import TrajectorySample
from .volume import LabelVolume, VoxelGeometry

THREE_BLOB_TABLE = {1: "TMJ", 2: "EAC", 3: "Sinus"}
THREE_BLOB_CRITICAL = frozenset({1, 2, 3})


def _fill_sphere(labels: np.ndarray, center, radius_vox: float, value: int) -> None:
    lo = [max(0, int(np.floor(c - radius_vox))) for c in center]
    hi = [min(n, int(np.ceil(c + radius_vox)) + 1) for n, c in zip(labels.shape, center)]
    box = tuple(slice(a, b) for a, b in zip(lo, hi))
    grids = np.meshgrid(*(np.arange(a, b) for a, b in zip(lo, hi)), indexing="ij")
    d2 = sum((g - c) ** 2 for g, c in zip(grids, center))
    labels[box][d2 <= radius_vox**2] = value


def three_blob_phantom(
    dims=(48, 48, 24), spacing=(0.5, 0.5, 0.5), origin=(0.0, 0.0, 0.0)
) -> LabelVolume:
    """Three spherical blobs (TMJ=1, EAC=2, Sinus=3) centered on the mid-z
    slice, well separated so each owns a contiguous closest-anatomy region."""
    labels = np.zeros(dims, dtype=np.int64)
    zc = dims[2] // 2
    r = min(dims[0], dims[1]) // 8
    _fill_sphere(labels, (dims[0] // 4, dims[1] // 4, zc), r, 1)
    _fill_sphere(labels, (3 * dims[0] // 4, dims[1] // 4, zc), r, 2)
    _fill_sphere(labels, (dims[0] // 2, 3 * dims[1] // 4, zc), r, 3)
    geometry = VoxelGeometry(dims, spacing, origin, np.eye(3))
    return LabelVolume(geometry, labels, dict(THREE_BLOB_TABLE), THREE_BLOB_CRITICAL)


def sphere_phantom(dims=(33, 33, 33), spacing=(1.0, 1.0, 1.0), radius_vox=8.0) -> LabelVolume:
    """Single centered sphere, label 1; analytic oracle for gradient tests."""
    labels = np.zeros(dims, dtype=np.int64)
    center = tuple((n - 1) / 2 for n in dims)
    _fill_sphere(labels, center, radius_vox, 1)
    geometry = VoxelGeometry(dims, spacing, (0.0, 0.0, 0.0), np.eye(3))
    return LabelVolume(geometry, labels, {1: "Sphere"}, frozenset({1}))


def multi_label_phantom(
    n_labels: int = 16, dims=(64, 64, 64), spacing=(0.5, 0.5, 0.5), seed: int = 0
) -> LabelVolume:
    """n_labels small spherical anatomies scattered deterministically."""
    rng = np.random.default_rng(seed)
    labels = np.zeros(dims, dtype=np.int64)
    r = max(2, min(dims) // 16)
    for value in range(1, n_labels + 1):
        while True:
            center = tuple(int(rng.integers(r, n - r)) for n in dims)
            snapshot = labels.copy()
            _fill_sphere(labels, center, r, value)
            if np.all(snapshot[labels == value] == 0):
                break
            labels = snapshot  # collided with an earlier blob; redraw
    table = {v: f"anatomy_{v:02d}" for v in range(1, n_labels + 1)}
    geometry = VoxelGeometry(dims, spacing, (0.0, 0.0, 0.0), np.eye(3))
    return LabelVolume(geometry, labels, table, frozenset(range(1, n_labels + 1)))


def demo_trajectory(volume: LabelVolume, burr_radius: float = 0.75) -> list[TrajectorySample]:
    """Straight drilling pass across the phantom's mid plane, skirting the
    EAC blob: approach without drilling, then drill through the bone
    corridor between the blobs."""
    g = volume.geometry
    dims = np.asarray(g.dims)
    zc = (dims[2] // 2) * g.spacing[2]
    x0, x1 = 2.0 * g.spacing[0], (dims[0] - 3) * g.spacing[0]
    y = (dims[1] // 2) * g.spacing[1]
    samples = []
    n = 60
    for i in range(n):
        t = 0.05 * i
        x = x0 + (x1 - x0) * i / (n - 1)
        samples.append(TrajectorySample(t, (x, y, zc), burr_radius, i >= 10))
    return samples
