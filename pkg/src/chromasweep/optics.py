"""Two-lens chromatic system: dispersion, focal shift, lens positions, PSFs.

Lens positions are expressed as focus offsets in millimetres on the same axis
as the focal-shift curve: a position ``z`` brings the wavelength whose focal
shift equals ``z`` into focus, and any other wavelength is defocused by
``shift(lambda) - z``. Moving the lens is assumed to translate the focal plane
one-to-one and to leave magnification unchanged.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .types import NDArrayF, PsfStack

ANTIALIAS_SIGMA_PX = 0.5
DEFAULT_MAX_KERNEL_SIZE = 63
_SUPERSAMPLE = 16


@dataclass(frozen=True, eq=False)
class LensDispersion:
    """Tabulated focal length ``f(lambda)`` for a single lens."""

    wavelengths_nm: NDArrayF
    focal_lengths_mm: NDArrayF

    def __post_init__(self):
        wl = np.array(self.wavelengths_nm, dtype=np.float64)
        fl = np.array(self.focal_lengths_mm, dtype=np.float64)
        if wl.ndim != 1 or wl.shape != fl.shape or wl.size < 1:
            raise ValueError("dispersion table needs matching 1-D wavelength and focal-length columns")
        if wl.size > 1 and not np.all(np.diff(wl) > 0):
            raise ValueError("dispersion wavelengths must be strictly increasing")
        if not np.all(np.isfinite(fl)) or np.any(fl <= 0):
            raise ValueError("focal lengths must be positive and finite")
        wl.setflags(write=False)
        fl.setflags(write=False)
        object.__setattr__(self, "wavelengths_nm", wl)
        object.__setattr__(self, "focal_lengths_mm", fl)

    def covers(self, wavelengths) -> bool:
        wl = np.asarray(wavelengths, dtype=np.float64)
        return bool(np.all((wl >= self.wavelengths_nm[0]) & (wl <= self.wavelengths_nm[-1])))

    def focal_length(self, wavelengths) -> NDArrayF:
        wl = np.asarray(wavelengths, dtype=np.float64)
        if not self.covers(wl):
            raise ValueError(
                f"wavelength outside dispersion coverage "
                f"[{self.wavelengths_nm[0]}, {self.wavelengths_nm[-1]}] nm"
            )
        return np.interp(wl, self.wavelengths_nm, self.focal_lengths_mm)

    @classmethod
    def constant(cls, focal_length_mm: float, lo_nm: float = 380.0, hi_nm: float = 780.0):
        return cls(np.array([lo_nm, hi_nm]), np.array([focal_length_mm, focal_length_mm]))

    @classmethod
    def from_csv(cls, path) -> "LensDispersion":
        """Read a two-column ``wavelength_nm,focal_length_mm`` CSV with a header line."""
        path = Path(path)
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 2:
            raise ValueError(f"{path}: expected a header line and at least one data row")
        try:
            float(rows[0][0])
        except (ValueError, IndexError):
            pass
        else:
            raise ValueError(f"{path}: missing header line (wavelength_nm,focal_length_mm)")
        body = [r for r in rows[1:] if r and not r[0].lstrip().startswith("#")]
        try:
            data = np.array([[float(r[0]), float(r[1])] for r in body])
        except (ValueError, IndexError) as exc:
            raise ValueError(f"{path}: malformed dispersion row ({exc})") from None
        return cls(data[:, 0], data[:, 1])

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            fh.write("wavelength_nm,focal_length_mm\n")
            for w, f in zip(self.wavelengths_nm, self.focal_lengths_mm):
                fh.write(f"{float(w)!r},{float(f)!r}\n")


def cauchy_dispersion(
    focal_length_d_mm: float,
    a: float = 1.5046,
    b_nm2: float = 4200.0,
    wavelengths_nm=None,
) -> LensDispersion:
    """Thin-lens dispersion from a two-term Cauchy index ``n = a + b / lambda^2``.

    ``focal_length_d_mm`` is the focal length at the helium d-line (587.56 nm);
    the default coefficients approximate a borosilicate crown glass.
    """
    if wavelengths_nm is None:
        wavelengths_nm = np.arange(380.0, 781.0, 5.0)
    wl = np.asarray(wavelengths_nm, dtype=np.float64)
    n = a + b_nm2 / wl**2
    n_d = a + b_nm2 / 587.56**2
    return LensDispersion(wl, focal_length_d_mm * (n_d - 1.0) / (n - 1.0))


@dataclass(frozen=True, eq=False)
class OpticalConfig:
    lens1: LensDispersion
    lens2: LensDispersion
    separation_mm: float = 0.0
    aperture_number: float = 4.0
    pixel_pitch_um: float = 5.86
    sensor_pixels: tuple[int, int] = (1200, 1920)
    scene_distance_m: float = 2.8
    reference_wavelength_nm: float = 550.0
    max_kernel_size: int = DEFAULT_MAX_KERNEL_SIZE

    def __post_init__(self):
        if self.separation_mm < 0:
            raise ValueError("separation_mm must be >= 0")
        if self.aperture_number <= 0:
            raise ValueError("aperture_number must be > 0")
        if self.scene_distance_m <= 0:
            raise ValueError("scene_distance_m must be > 0")
        if self.pixel_pitch_um <= 0:
            raise ValueError("pixel_pitch_um must be > 0")
        if self.max_kernel_size < 1 or self.max_kernel_size % 2 == 0:
            raise ValueError("max_kernel_size must be a positive odd integer")

    def focal_length(self, wavelengths) -> NDArrayF:
        f1 = self.lens1.focal_length(wavelengths)
        f2 = self.lens2.focal_length(wavelengths)
        return combined_focal_length(f1, f2, self.separation_mm)

    def blur_gain(self) -> float:
        """Blur-disk radius in pixels per millimetre of defocus."""
        f_ref = float(self.focal_length(self.reference_wavelength_nm))
        s_mm = self.scene_distance_m * 1e3
        if s_mm <= f_ref:
            raise ValueError("scene closer than the focal length: no real image")
        image_distance = 1.0 / (1.0 / f_ref - 1.0 / s_mm)
        aperture_radius = f_ref / (2.0 * self.aperture_number)
        return aperture_radius / (image_distance * self.pixel_pitch_um * 1e-3)


def combined_focal_length(f1_mm, f2_mm, d_mm):
    """Effective focal length of two thin lenses separated by ``d_mm``.

    ``1/f = 1/f1 + 1/f2 - d / (f1 f2)``; ``f2 = inf`` means a powerless element.
    """
    f1 = np.asarray(f1_mm, dtype=np.float64)
    f2 = np.asarray(f2_mm, dtype=np.float64)
    if np.any(f1 <= 0) or np.any(f2 <= 0):
        raise ValueError("focal lengths must be positive")
    with np.errstate(divide="ignore"):
        p1 = 1.0 / f1
        p2 = 1.0 / f2
    power = p1 + p2 - d_mm * p1 * p2
    if np.any(~(power > 0)):
        raise ValueError("non-positive effective power (afocal or diverging configuration)")
    f = 1.0 / power
    return float(f) if f.ndim == 0 else f


def focal_shift_curve(config: OpticalConfig, wavelengths) -> NDArrayF:
    """Axial focal shift in mm relative to the reference wavelength."""
    wl = np.asarray(wavelengths, dtype=np.float64)
    for lens in (config.lens1, config.lens2):
        if not lens.covers(np.append(wl, config.reference_wavelength_nm)):
            raise ValueError("wavelength outside dispersion table coverage")
    f = np.atleast_1d(config.focal_length(wl))
    f_ref = float(config.focal_length(config.reference_wavelength_nm))
    shift = f - f_ref
    shift[wl == config.reference_wavelength_nm] = 0.0
    return shift


def select_lens_positions(shift_curve, n: int) -> NDArrayF:
    """Lens positions whose in-focus shifts evenly cover the focal-shift range."""
    if n < 1:
        raise ValueError("need at least one lens position")
    shift = np.asarray(shift_curve, dtype=np.float64)
    lo, hi = float(shift.min()), float(shift.max())
    if n == 1:
        return np.array([0.5 * (lo + hi)])
    if not hi > lo:
        raise ValueError("constant focal-shift curve: no spectral encoding possible")
    return lo + (hi - lo) * np.arange(n) / (n - 1)


def depth_of_field(aperture_number: float, coc_m: float, s_m: float, f_m: float) -> float:
    """Approximate total depth of field ``2 N c s^2 / f^2`` for ``s >> f``."""
    if aperture_number <= 0 or s_m <= 0 or f_m <= 0 or coc_m < 0:
        raise ValueError("depth_of_field inputs must be positive (coc may be 0)")
    return 2.0 * aperture_number * coc_m * s_m**2 / f_m**2


def _gaussian_1d(sigma: float, radius: int) -> NDArrayF:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    return g / g.sum()


def required_kernel_size(radius_px: float, sigma: float = ANTIALIAS_SIGMA_PX) -> int:
    return 2 * int(math.ceil(radius_px + 3.0 * sigma)) + 1


def _disk_coverage(radius_px: float, size: int) -> NDArrayF:
    """Fraction of each pixel covered by a centred disk (supersampled, exactly symmetric)."""
    half = size // 2
    disk = np.zeros((size, size))
    if radius_px <= 0:
        disk[half, half] = 1.0
        return disk
    ss = _SUPERSAMPLE
    sub = (np.arange(ss) + 0.5) / ss - 0.5
    offs = np.arange(-half, half + 1, dtype=np.float64)
    # fine coordinates along one axis, symmetric about the centre
    fine = (offs[:, None] + sub[None, :]).ravel()
    inside = (fine[:, None] ** 2 + fine[None, :] ** 2) <= radius_px**2
    counts = inside.reshape(size, ss, size, ss).sum(axis=(1, 3))
    if counts.sum() == 0:
        disk[half, half] = 1.0
        return disk
    return counts.astype(np.float64)


def _symmetrize(kernel: NDArrayF) -> NDArrayF:
    """Copy values from the canonical octant so the kernel is exactly 8-fold symmetric."""
    size = kernel.shape[0]
    half = size // 2
    d = np.abs(np.arange(size) - half)
    lo = np.minimum(d[:, None], d[None, :])
    hi = np.maximum(d[:, None], d[None, :])
    return kernel[half + lo, half + hi]


def disk_psf(radius_px: float, kernel_size: int, sigma: float = ANTIALIAS_SIGMA_PX) -> NDArrayF:
    """Uniform disk of ``radius_px`` blurred by a small Gaussian, normalized to sum 1."""
    if kernel_size % 2 == 0 or kernel_size < 1:
        raise ValueError("kernel_size must be a positive odd integer")
    disk = _disk_coverage(radius_px, kernel_size)
    disk /= disk.sum()
    half = kernel_size // 2
    if sigma > 0 and kernel_size > 1:
        g = _gaussian_1d(sigma, half)
        # separable 'same' convolution with zero boundary; mass leaving the window is renormalized
        tmp = np.apply_along_axis(lambda r: np.convolve(r, g, mode="same"), 1, disk)
        disk = np.apply_along_axis(lambda c: np.convolve(c, g, mode="same"), 0, tmp)
    kernel = _symmetrize(disk)
    kernel = np.clip(kernel, 0.0, None)
    return kernel / kernel.sum()


def defocus_radius_px(wavelength_nm: float, lens_position_mm: float, config: OpticalConfig) -> float:
    shift = float(focal_shift_curve(config, [wavelength_nm])[0])
    return config.blur_gain() * abs(shift - lens_position_mm)


def synthesize_psf(
    wavelength_nm: float,
    lens_position_mm: float,
    config: OpticalConfig,
    kernel_size: int | None = None,
) -> NDArrayF:
    """Geometric-defocus PSF for one wavelength at one lens position.

    The kernel size defaults to the smallest odd size holding the blur disk plus
    the anti-aliasing tail; a size above ``config.max_kernel_size`` is an error.
    """
    radius = defocus_radius_px(wavelength_nm, lens_position_mm, config)
    needed = required_kernel_size(radius)
    size = needed if kernel_size is None else kernel_size
    if size > config.max_kernel_size or needed > config.max_kernel_size:
        raise ValueError(
            f"PSF at {wavelength_nm} nm needs kernel size {max(size, needed)} "
            f"> configured maximum {config.max_kernel_size}"
        )
    return disk_psf(radius, size)


def build_psf_stack(config: OpticalConfig, lens_positions, wavelengths) -> PsfStack:
    """Kernels for every (lens position, wavelength) pair on a common odd size."""
    positions = np.asarray(lens_positions, dtype=np.float64)
    wl = np.asarray(wavelengths, dtype=np.float64)
    shift = focal_shift_curve(config, wl)
    gain = config.blur_gain()
    radii = gain * np.abs(shift[None, :] - positions[:, None])
    size = required_kernel_size(float(radii.max()))
    if size > config.max_kernel_size:
        raise ValueError(
            f"PSF stack needs kernel size {size} > configured maximum {config.max_kernel_size}"
        )
    kernels = np.empty((positions.size, wl.size, size, size))
    for i in range(positions.size):
        for j in range(wl.size):
            kernels[i, j] = disk_psf(float(radii[i, j]), size)
    return PsfStack(kernels, positions, wl)


def second_moment_radius(kernel: NDArrayF) -> float:
    """Root-mean-square distance of kernel mass from the kernel centre, in pixels."""
    size = kernel.shape[0]
    d = np.arange(size) - size // 2
    r2 = d[:, None] ** 2 + d[None, :] ** 2
    return float(np.sqrt((kernel * r2).sum() / kernel.sum()))


def in_focus_indices(psfs: PsfStack) -> NDArrayF:
    """Index of the sharpest wavelength for each lens position."""
    moments = np.array(
        [[second_moment_radius(psfs.kernels[i, j]) for j in range(psfs.channels)] for i in range(psfs.count)]
    )
    return np.argmin(moments, axis=1)
