"""Low-rank spectral eigenspace: uncentred PCA basis, projection and lifting."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .types import HyperspectralCube, NDArrayF, SpectralBasis, validate

RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Eigenspace image ``z`` with shape ``(v, H, W)``."""

    data: NDArrayF

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"coefficient field must be 3-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("coefficient field contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


def _spectra_matrix(training: HyperspectralCube | Iterable[HyperspectralCube]) -> tuple[NDArrayF, NDArrayF]:
    cubes = [training] if isinstance(training, HyperspectralCube) else list(training)
    if not cubes:
        raise ValueError("no training cubes given")
    wl = cubes[0].wavelengths_nm
    for c in cubes[1:]:
        if c.channels != cubes[0].channels or not np.array_equal(c.wavelengths_nm, wl):
            raise ValueError("training cubes must share one wavelength grid")
    mat = np.concatenate([c.data.reshape(c.channels, -1).T for c in cubes], axis=0)
    return mat, wl


def compute_basis(training, v: int) -> SpectralBasis:
    """Top-``v`` right singular vectors of the (pixels x C) spectra matrix, no centring.

    Rows are ordered by descending singular value and each row's largest
    magnitude entry is made positive.
    """
    mat, wl = _spectra_matrix(training)
    c = mat.shape[1]
    if not 1 <= v <= c:
        raise ValueError(f"basis dimension must be in [1, {c}], got {v}")
    _, s, vt = np.linalg.svd(mat, full_matrices=False)
    if s.size < v or s[v - 1] <= RANK_TOL * max(s[0], 1e-300):
        raise ValueError(f"training spectra have rank below {v}")
    rows = vt[:v].copy()
    pivot = np.argmax(np.abs(rows), axis=1)
    signs = np.sign(rows[np.arange(v), pivot])
    rows *= signs[:, None]
    return SpectralBasis(rows, wl)


def identity_basis(channels: int, wavelengths_nm=None) -> SpectralBasis:
    return SpectralBasis(np.eye(channels), wavelengths_nm)


def project_planes(planes: NDArrayF, basis: SpectralBasis) -> NDArrayF:
    return np.einsum("vc,chw->vhw", basis.rows, planes)


def lift_planes(coeffs: NDArrayF, basis: SpectralBasis) -> NDArrayF:
    return np.einsum("vc,vhw->chw", basis.rows, coeffs)


def project(cube: HyperspectralCube, basis: SpectralBasis) -> CoefficientField:
    if cube.channels != basis.channels:
        raise ValueError(f"dimension mismatch: cube has {cube.channels} channels, basis {basis.channels}")
    return CoefficientField(project_planes(cube.data, basis))


def lift(coeffs: CoefficientField, basis: SpectralBasis, wavelengths_nm=None) -> HyperspectralCube:
    if coeffs.dim != basis.dim:
        raise ValueError(f"dimension mismatch: {coeffs.dim} coefficients, basis dimension {basis.dim}")
    wl = basis.wavelengths_nm if wavelengths_nm is None else wavelengths_nm
    if wl is None:
        wl = np.arange(basis.channels, dtype=np.float64)
    return HyperspectralCube(lift_planes(coeffs.data, basis), wl)


def halve_basis(basis: SpectralBasis) -> SpectralBasis:
    """Keep the leading ``ceil(v / 2)`` rows."""
    if basis.dim < 2:
        raise ValueError("cannot halve a one-dimensional basis")
    keep = math.ceil(basis.dim / 2)
    return SpectralBasis(basis.rows[:keep], basis.wavelengths_nm)


def energy_capture(training, basis: SpectralBasis) -> float:
    """Fraction of squared spectral energy retained by projecting onto ``basis``."""
    mat, _ = _spectra_matrix(training)
    total = float(np.sum(mat**2))
    if total == 0:
        return 1.0
    return float(np.sum((mat @ basis.rows.T) ** 2)) / total


def write_basis_csv(basis: SpectralBasis, path) -> None:
    lines = [f"{basis.dim},{basis.channels}"]
    lines += [",".join(f"{x:.17g}" for x in row) for row in basis.rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_basis_csv(path, wavelengths_nm=None) -> SpectralBasis:
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty basis file")
    try:
        v, c = (int(t) for t in lines[0].split(","))
        rows = np.array([[float(t) for t in ln.split(",")] for ln in lines[1:]])
    except ValueError as exc:
        raise ValueError(f"{path}: malformed basis file ({exc})") from None
    if rows.shape != (v, c):
        raise ValueError(f"{path}: header says {v}x{c}, found {rows.shape[0]}x{rows.shape[1] if rows.ndim == 2 else 0}")
    basis = SpectralBasis(rows, wavelengths_nm)
    validate(basis, raise_on_error=True)
    return basis
