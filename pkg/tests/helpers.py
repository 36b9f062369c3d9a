"""Small builders shared by the test modules."""
from pathlib import Path

import numpy as np

from chromasweep.types import HyperspectralCube, PsfStack

DATA = Path(__file__).resolve().parent / "data"


def random_psfs(rng, n, c, k):
    kern = rng.random((n, c, k, k))
    kern /= kern.sum(axis=(-2, -1), keepdims=True)
    return PsfStack(kern, np.arange(n, dtype=float), 400.0 + 10.0 * np.arange(c))


def delta_psfs(n, c, k=1):
    kern = np.zeros((n, c, k, k))
    kern[:, :, k // 2, k // 2] = 1.0
    return PsfStack(kern, np.arange(n, dtype=float), 400.0 + 10.0 * np.arange(c))


def random_cube(rng, c, h, w):
    return HyperspectralCube(rng.random((c, h, w)), 400.0 + 10.0 * np.arange(c))
