"""Measurement operator ``y = C H x`` on a zero-padded circulant grid, its adjoint,
radiometric scaling and shot-noise simulation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .types import FocalStack, HyperspectralCube, NDArrayF, PsfStack, SpectralResponse, resample_response

# photons m^-2 s^-1 over the visible band for a brightly lit scene
BRIGHT_PHOTON_FLUX = 7.5e17
_INVERSION_LIMIT = 10.0
_INVERSION_MAX_K = 64


@dataclass(frozen=True)
class CropSpec:
    """Centred ``out_height x out_width`` window inside the padded grid."""

    padded_height: int
    padded_width: int
    out_height: int
    out_width: int
    offset: tuple[int, int]

    def __post_init__(self):
        r, c = self.offset
        if r < 0 or c < 0 or r + self.out_height > self.padded_height or c + self.out_width > self.padded_width:
            raise ValueError("crop window does not fit inside the padded extent")

    @classmethod
    def for_kernel(cls, height: int, width: int, kernel_size: int) -> "CropSpec":
        if kernel_size % 2 == 0:
            raise ValueError("kernel size must be odd")
        half = (kernel_size - 1) // 2
        return cls(height + kernel_size - 1, width + kernel_size - 1, height, width, (half, half))

    @property
    def padded_shape(self) -> tuple[int, int]:
        return self.padded_height, self.padded_width

    @property
    def window(self) -> tuple[slice, slice]:
        r, c = self.offset
        return slice(r, r + self.out_height), slice(c, c + self.out_width)

    def crop(self, planes: NDArrayF) -> NDArrayF:
        rows, cols = self.window
        return planes[..., rows, cols]

    def embed(self, planes: NDArrayF) -> NDArrayF:
        """Adjoint of :meth:`crop`: zero-fill outside the window."""
        out = np.zeros(planes.shape[:-2] + self.padded_shape)
        rows, cols = self.window
        out[..., rows, cols] = planes
        return out

    def mask(self) -> NDArrayF:
        m = np.zeros(self.padded_shape)
        rows, cols = self.window
        m[rows, cols] = 1.0
        return m


@dataclass(frozen=True)
class ExposureModel:
    photon_flux: float = BRIGHT_PHOTON_FLUX
    total_exposure_s: float = 5.0
    pixel_area_m2: float = (5.86e-6) ** 2
    light_efficiency: float = 0.196
    seed: int = 0

    def __post_init__(self):
        for name in ("photon_flux", "total_exposure_s", "pixel_area_m2", "light_efficiency"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def photons_per_unit(self) -> float:
        """Expected photon count per unit of normalized measurement value."""
        return self.photon_flux * self.pixel_area_m2 * self.total_exposure_s * self.light_efficiency


def pad_planes(planes: NDArrayF, kernel_size: int) -> NDArrayF:
    if kernel_size % 2 == 0:
        raise ValueError("kernel size must be odd")
    half = (kernel_size - 1) // 2
    width = [(0, 0)] * (planes.ndim - 2) + [(half, half), (half, half)]
    return np.pad(planes, width)


def pad_cube(cube: HyperspectralCube, kernel_size: int) -> HyperspectralCube:
    """Zero-pad every channel by ``(K - 1) / 2`` on each side."""
    return HyperspectralCube(pad_planes(cube.data, kernel_size), cube.wavelengths_nm)


def kernel_otf(kernels: NDArrayF, padded_shape: tuple[int, int]) -> np.ndarray:
    """Real-FFT transfer functions of centred kernels on the padded grid.

    Kernels are embedded with their centre at the origin so that a delta kernel
    gives an all-ones transfer function. Output shape ``kernels.shape[:-2] +
    (Hp, Wp // 2 + 1)``.
    """
    k = kernels.shape[-1]
    half = k // 2
    hp, wp = padded_shape
    if k > hp or k > wp:
        raise ValueError("kernel larger than padded grid")
    grid = np.zeros(kernels.shape[:-2] + (hp, wp))
    grid[..., :k, :k] = kernels
    grid = np.roll(grid, (-half, -half), axis=(-2, -1))
    return sfft.rfft2(grid, axes=(-2, -1))


def _check_shapes(cube_channels: int, psfs: PsfStack, crop: CropSpec) -> None:
    if cube_channels != psfs.channels:
        raise ValueError(f"dimension mismatch: cube has {cube_channels} channels, PSFs {psfs.channels}")
    k = psfs.kernel_size
    if crop.padded_height != crop.out_height + k - 1 or crop.padded_width != crop.out_width + k - 1:
        raise ValueError("dimension mismatch: crop padding inconsistent with kernel size")


def forward_padded(x_pad: NDArrayF, otf: np.ndarray, padded_shape, workers: int = 1) -> NDArrayF:
    """Circulant ``H`` on the padded grid: ``(C, Hp, Wp) -> (N, Hp, Wp)``."""
    xf = sfft.rfft2(x_pad, axes=(-2, -1), workers=workers)
    yf = np.einsum("ncij,cij->nij", otf, xf)
    return sfft.irfft2(yf, s=padded_shape, axes=(-2, -1), workers=workers)


def adjoint_padded(y_pad: NDArrayF, otf: np.ndarray, padded_shape, workers: int = 1) -> NDArrayF:
    """``H^T`` on the padded grid: ``(N, Hp, Wp) -> (C, Hp, Wp)``."""
    yf = sfft.rfft2(y_pad, axes=(-2, -1), workers=workers)
    xf = np.einsum("ncij,nij->cij", otf.conj(), yf)
    return sfft.irfft2(xf, s=padded_shape, axes=(-2, -1), workers=workers)


def apply_forward(
    cube: HyperspectralCube,
    psfs: PsfStack,
    crop: CropSpec | None = None,
    workers: int = 1,
) -> FocalStack:
    """Simulate the clean focal stack: each measurement sums all blurred channels."""
    if crop is None:
        crop = CropSpec.for_kernel(cube.height, cube.width, psfs.kernel_size)
    _check_shapes(cube.channels, psfs, crop)
    if (cube.height, cube.width) != (crop.out_height, crop.out_width):
        raise ValueError("dimension mismatch: cube size differs from crop window")
    otf = kernel_otf(psfs.kernels, crop.padded_shape)
    y = forward_padded(pad_planes(cube.data, psfs.kernel_size), otf, crop.padded_shape, workers)
    return FocalStack(crop.crop(y), psfs.lens_positions_mm)


def apply_adjoint(
    stack: FocalStack,
    psfs: PsfStack,
    crop: CropSpec | None = None,
    workers: int = 1,
) -> NDArrayF:
    """Exact adjoint of :func:`apply_forward`, returned as a ``(C, H, W)`` array."""
    if crop is None:
        crop = CropSpec.for_kernel(stack.height, stack.width, psfs.kernel_size)
    _check_shapes(psfs.channels, psfs, crop)
    if stack.count != psfs.count:
        raise ValueError(f"dimension mismatch: {stack.count} measurements, {psfs.count} PSF rows")
    otf = kernel_otf(psfs.kernels, crop.padded_shape)
    x_pad = adjoint_padded(crop.embed(stack.data), otf, crop.padded_shape, workers)
    return crop.crop(x_pad)


def light_efficiency(component_efficiencies, n_measurements: int) -> tuple[float, float]:
    """Return ``(per_exposure, effective)`` light efficiency.

    ``effective`` is the product of component transmissions; each of the
    ``n_measurements`` exposures receives ``effective / n_measurements``.
    """
    effs = [float(e) for e in component_efficiencies]
    if any(not (0.0 < e <= 1.0) for e in effs):
        raise ValueError("component efficiencies must lie in (0, 1]")
    if n_measurements < 1:
        raise ValueError("need at least one measurement")
    effective = math.prod(effs)
    return effective / n_measurements, effective


def _measurement_stream(seed: int, index: int) -> np.random.Generator:
    # Philox is counter-based: stream (seed, index) yields the same draws whatever the scheduling
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), int(index)])
    return np.random.Generator(np.random.Philox(ss))


def poisson_counts(expected: NDArrayF, seed: int, index: int) -> NDArrayF:
    """Shot-noise draw for one measurement.

    Inversion sampling for means below 10, a rounded normal approximation
    clamped at zero above. Every pixel consumes exactly one uniform and one
    normal variate, in raster order.
    """
    lam = np.asarray(expected, dtype=np.float64)
    rng = _measurement_stream(seed, index)
    u = rng.random(lam.shape)
    g = rng.standard_normal(lam.shape)

    out = np.maximum(np.rint(lam + np.sqrt(np.maximum(lam, 0.0)) * g), 0.0)
    small = lam < _INVERSION_LIMIT
    if small.any():
        ls = lam[small]
        us = u[small]
        pmf = np.exp(-ls)
        cdf = pmf.copy()
        k = np.zeros_like(ls)
        for n in range(1, _INVERSION_MAX_K):
            step = us > cdf
            if not step.any():
                break
            k += step
            pmf = pmf * ls / n
            cdf = cdf + pmf
        out[small] = k
    out[lam <= 0] = 0.0
    return out


def response_weights(response: SpectralResponse | None, wavelengths) -> NDArrayF:
    wl = np.asarray(wavelengths, dtype=np.float64)
    if response is None:
        return np.ones(wl.size)
    return resample_response(response, wl)


def simulate_measurement(
    cube: HyperspectralCube,
    psfs: PsfStack,
    exposure: ExposureModel,
    crop: CropSpec | None = None,
    response: SpectralResponse | None = None,
    noise: bool = True,
    return_counts: bool = False,
    workers: int = 1,
) -> FocalStack:
    """Forward model with spectral response, photon scaling and Poisson noise.

    The returned stack is rescaled to normalized units unless ``return_counts``
    is set, in which case the raw photon counts are returned.
    """
    weights = response_weights(response, cube.wavelengths_nm)
    weighted = HyperspectralCube(cube.data * weights[:, None, None], cube.wavelengths_nm)
    clean = apply_forward(weighted, psfs, crop, workers=workers)
    # tiny negative values can appear from FFT round-off
    y = np.clip(clean.data, 0.0, None)
    scale = exposure.photons_per_unit()
    meta = {
        "seed": str(exposure.seed),
        "photon_flux": repr(exposure.photon_flux),
        "total_exposure_s": repr(exposure.total_exposure_s),
        "pixel_area_m2": repr(exposure.pixel_area_m2),
        "light_efficiency": repr(exposure.light_efficiency),
        "noise": "poisson" if noise else "none",
    }
    if not noise:
        data = clean.data * scale if return_counts else clean.data
        return FocalStack(data, clean.lens_positions_mm, meta)
    counts = np.stack([poisson_counts(y[i] * scale, exposure.seed, i) for i in range(y.shape[0])])
    data = counts if return_counts else counts / scale
    return FocalStack(data, clean.lens_positions_mm, meta)
