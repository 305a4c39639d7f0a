import numpy as np
import pytest

from sdfguide import build_atlas
from sdfguide.phantom import sphere_phantom, three_blob_phantom


@pytest.fixture(scope="session")
def blob_volume():
    return three_blob_phantom()


@pytest.fixture(scope="session")
def blob_atlas(blob_volume):
    return build_atlas(blob_volume)


@pytest.fixture(scope="session")
def sphere_volume():
    return sphere_phantom(dims=(41, 41, 41), radius_vox=6.0)


@pytest.fixture(scope="session")
def sphere_atlas(sphere_volume):
    return build_atlas(sphere_volume)


def random_mask(rng, max_dim=32, density=None):
    dims = tuple(int(rng.integers(4, max_dim + 1)) for _ in range(3))
    if density is None:
        density = float(rng.uniform(0.01, 0.5))
    mask = rng.random(dims) < density
    if not mask.any():
        mask[tuple(int(rng.integers(0, n)) for n in dims)] = True
    return mask


def random_spacing(rng, lo=0.3, hi=2.0):
    return tuple(float(s) for s in rng.uniform(lo, hi, 3))


def random_rotation(rng):
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    return q
