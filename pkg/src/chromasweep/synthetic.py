"""Synthetic scenes and a reference optical setup for demos and regression tests."""
from __future__ import annotations

import numpy as np

from .optics import OpticalConfig, build_psf_stack, cauchy_dispersion, focal_shift_curve, select_lens_positions
from .types import HyperspectralCube, PsfStack


def default_wavelengths(step_nm: float = 10.0) -> np.ndarray:
    return np.arange(440.0, 720.0 + 0.5 * step_nm, step_nm)


def reference_optics(aperture_number: float = 4.0, max_kernel_size: int = 63) -> OpticalConfig:
    """Two 50 mm crown-glass singlets in contact; roughly 0.65 mm of focal shift over 440-720 nm."""
    lens = cauchy_dispersion(50.0)
    return OpticalConfig(
        lens1=lens,
        lens2=lens,
        separation_mm=0.0,
        aperture_number=aperture_number,
        pixel_pitch_um=5.86,
        scene_distance_m=2.8,
        reference_wavelength_nm=550.0,
        max_kernel_size=max_kernel_size,
    )


def smooth_spectra(wavelengths, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` smooth non-negative reflectance-like spectra, shape ``(count, C)``."""
    wl = np.asarray(wavelengths, dtype=np.float64)
    span = wl[-1] - wl[0] if wl.size > 1 else 1.0
    out = np.empty((count, wl.size))
    for i in range(count):
        centers = rng.uniform(wl[0] - 0.1 * span, wl[-1] + 0.1 * span, 2)
        widths = rng.uniform(0.15, 0.5, 2) * span
        amps = rng.uniform(0.2, 0.8, 2)
        s = 0.1 + sum(a * np.exp(-0.5 * ((wl - c) / w) ** 2) for a, c, w in zip(amps, centers, widths))
        out[i] = s
    return out / out.max()


def make_scene(height: int, width: int, wavelengths, seed: int = 0, materials: int = 6) -> HyperspectralCube:
    """Piecewise-smooth scene mixing a few material spectra with smooth abundance maps."""
    rng = np.random.default_rng(seed)
    wl = np.asarray(wavelengths, dtype=np.float64)
    spectra = smooth_spectra(wl, materials, rng)
    yy, xx = np.mgrid[0:height, 0:width] / max(height, width)
    maps = []
    for _ in range(materials):
        fx, fy = rng.uniform(0.5, 3.0, 2)
        px, py = rng.uniform(0, 2 * np.pi, 2)
        m = np.cos(2 * np.pi * fx * xx + px) * np.cos(2 * np.pi * fy * yy + py)
        maps.append(np.exp(2.0 * m))
    maps = np.array(maps)
    # a few sharp-edged patches give the deconvolution something to recover
    for _ in range(3):
        r0, c0 = rng.integers(0, height // 2), rng.integers(0, width // 2)
        maps[rng.integers(materials), r0 : r0 + height // 3, c0 : c0 + width // 3] *= 4.0
    maps /= maps.sum(axis=0, keepdims=True)
    data = np.einsum("mc,mhw->chw", spectra, maps)
    return HyperspectralCube(data / data.max(), wl)


def reference_psfs(
    n: int = 5,
    wavelengths=None,
    config: OpticalConfig | None = None,
) -> PsfStack:
    wl = default_wavelengths() if wavelengths is None else np.asarray(wavelengths, dtype=np.float64)
    config = config or reference_optics()
    shift = focal_shift_curve(config, wl)
    return build_psf_stack(config, select_lens_positions(shift, n), wl)
