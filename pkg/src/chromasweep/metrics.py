"""Image and spectrum quality metrics and RGB projections."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy.signal import convolve2d

from .types import FocalStack, HyperspectralCube, NDArrayF

SAM_EXCLUDE_NORM = 1e-8

# linear sRGB from XYZ (IEC 61966-2-1, D65 white)
_XYZ_TO_SRGB = np.array(
    [
        [3.2404542, -1.5371385, -0.4985314],
        [-0.9692660, 1.8760108, 0.0415560],
        [0.0556434, -0.2040259, 1.0572252],
    ]
)
_SRGB_TO_XYZ = np.linalg.inv(_XYZ_TO_SRGB)
D65_WHITE_XYZ = _SRGB_TO_XYZ @ np.ones(3)


def _as_array(x) -> NDArrayF:
    if isinstance(x, (HyperspectralCube, FocalStack)):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _same_shape(a, b):
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(recon, truth, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio over all voxels, in dB (``inf`` for identical inputs)."""
    a, b = _same_shape(recon, truth)
    if not peak > 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> NDArrayF:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _ssim_plane(x, y, window, c1, c2):
    def filt(img):
        return convolve2d(img, window, mode="valid")

    mu_x, mu_y = filt(x), filt(y)
    sxx = filt(x * x) - mu_x**2
    syy = filt(y * y) - mu_y**2
    sxy = filt(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def ssim(recon, truth, data_range: float = 1.0, window_size: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean structural similarity, computed per channel (valid windows) then averaged."""
    a, b = _same_shape(recon, truth)
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.shape[-1] < window_size or a.shape[-2] < window_size:
        raise ValueError(f"images smaller than the {window_size}x{window_size} SSIM window")
    window = gaussian_window(window_size, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    planes = a.reshape(-1, *a.shape[-2:]), b.reshape(-1, *b.shape[-2:])
    return float(np.mean([_ssim_plane(x, y, window, c1, c2) for x, y in zip(*planes)]))


def sam(recon, truth) -> float:
    """Mean spectral angle in degrees over pixels with non-zero spectra in both cubes."""
    a, b = _same_shape(recon, truth)
    sa = a.reshape(a.shape[0], -1)
    sb = b.reshape(b.shape[0], -1)
    na = np.linalg.norm(sa, axis=0)
    nb = np.linalg.norm(sb, axis=0)
    keep = (na >= SAM_EXCLUDE_NORM) & (nb >= SAM_EXCLUDE_NORM)
    if not keep.any():
        raise ValueError("no pixel with a non-zero spectrum in both cubes")
    cos = np.sum(sa[:, keep] * sb[:, keep], axis=0) / (na[keep] * nb[keep])
    angles = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    return float(np.mean(angles))


# ---------------------------------------------------------------- colour


def srgb_to_linear(rgb: NDArrayF) -> NDArrayF:
    rgb = np.asarray(rgb, dtype=np.float64)
    return np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(lin: NDArrayF) -> NDArrayF:
    lin = np.clip(np.asarray(lin, dtype=np.float64), 0.0, None)
    return np.where(lin <= 0.0031308, 12.92 * lin, 1.055 * lin ** (1 / 2.4) - 0.055)


def xyz_to_lab(xyz: NDArrayF, white: NDArrayF = D65_WHITE_XYZ) -> NDArrayF:
    """CIE 1976 L*a*b* from XYZ; the last axis holds the three components."""
    t = np.asarray(xyz, dtype=np.float64) / white
    eps = (6 / 29) ** 3
    f = np.where(t > eps, np.cbrt(t), t / (3 * (6 / 29) ** 2) + 4 / 29)
    L = 116 * f[..., 1] - 16
    a = 500 * (f[..., 0] - f[..., 1])
    b = 200 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


def srgb_to_lab(rgb: NDArrayF) -> NDArrayF:
    """sRGB in [0, 1] (last axis = channels) to L*a*b* under D65."""
    lin = srgb_to_linear(rgb)
    return xyz_to_lab(lin @ _SRGB_TO_XYZ.T)


def ciede2000(lab1, lab2, kL: float = 1.0, kC: float = 1.0, kH: float = 1.0) -> NDArrayF:
    """CIEDE2000 colour difference between L*a*b* arrays (last axis = L, a, b)."""
    lab1 = np.asarray(lab1, dtype=np.float64)
    lab2 = np.asarray(lab2, dtype=np.float64)
    L1, a1, b1 = lab1[..., 0], lab1[..., 1], lab1[..., 2]
    L2, a2, b2 = lab2[..., 0], lab2[..., 1], lab2[..., 2]

    C1 = np.hypot(a1, b1)
    C2 = np.hypot(a2, b2)
    Cbar = 0.5 * (C1 + C2)
    G = 0.5 * (1 - np.sqrt(Cbar**7 / (Cbar**7 + 25.0**7)))
    a1p = (1 + G) * a1
    a2p = (1 + G) * a2
    C1p = np.hypot(a1p, b1)
    C2p = np.hypot(a2p, b2)
    h1p = np.degrees(np.arctan2(b1, a1p)) % 360.0
    h2p = np.degrees(np.arctan2(b2, a2p)) % 360.0
    h1p = np.where((a1p == 0) & (b1 == 0), 0.0, h1p)
    h2p = np.where((a2p == 0) & (b2 == 0), 0.0, h2p)

    dLp = L2 - L1
    dCp = C2p - C1p
    prod = C1p * C2p
    dh = h2p - h1p
    dh = np.where(dh > 180, dh - 360, dh)
    dh = np.where(dh < -180, dh + 360, dh)
    dh = np.where(prod == 0, 0.0, dh)
    dHp = 2 * np.sqrt(prod) * np.sin(np.radians(dh) / 2)

    Lbarp = 0.5 * (L1 + L2)
    Cbarp = 0.5 * (C1p + C2p)
    hsum = h1p + h2p
    habs = np.abs(h1p - h2p)
    hbarp = np.where(
        prod == 0,
        hsum,
        np.where(habs <= 180, hsum / 2, np.where(hsum < 360, (hsum + 360) / 2, (hsum - 360) / 2)),
    )
    T = (
        1
        - 0.17 * np.cos(np.radians(hbarp - 30))
        + 0.24 * np.cos(np.radians(2 * hbarp))
        + 0.32 * np.cos(np.radians(3 * hbarp + 6))
        - 0.20 * np.cos(np.radians(4 * hbarp - 63))
    )
    dtheta = 30 * np.exp(-(((hbarp - 275) / 25) ** 2))
    Rc = 2 * np.sqrt(Cbarp**7 / (Cbarp**7 + 25.0**7))
    Sl = 1 + 0.015 * (Lbarp - 50) ** 2 / np.sqrt(20 + (Lbarp - 50) ** 2)
    Sc = 1 + 0.045 * Cbarp
    Sh = 1 + 0.015 * Cbarp * T
    Rt = -np.sin(np.radians(2 * dtheta)) * Rc

    tl = dLp / (kL * Sl)
    tc = dCp / (kC * Sc)
    th = dHp / (kH * Sh)
    return np.sqrt(tl**2 + tc**2 + th**2 + Rt * tc * th)


def delta_e00(rgb_recon, rgb_truth) -> float:
    """Mean CIEDE2000 between two sRGB images with channels on the last axis."""
    a, b = _same_shape(rgb_recon, rgb_truth)
    if a.shape[-1] != 3:
        raise ValueError("RGB images need three channels on the last axis")
    return float(np.mean(ciede2000(srgb_to_lab(a), srgb_to_lab(b))))


@dataclass(frozen=True, eq=False)
class ColorMatch:
    """Colour-matching functions and illuminant sampled on a wavelength grid."""

    wavelengths_nm: NDArrayF
    xbar: NDArrayF
    ybar: NDArrayF
    zbar: NDArrayF
    illuminant: NDArrayF

    def covers(self, wavelengths) -> bool:
        wl = np.asarray(wavelengths)
        return bool(wl.min() >= self.wavelengths_nm[0] and wl.max() <= self.wavelengths_nm[-1])

    def weights(self, wavelengths) -> NDArrayF:
        """Illuminant-weighted matching functions times trapezoid weights, shape ``(3, C)``."""
        wl = np.asarray(wavelengths, dtype=np.float64)
        if not self.covers(wl):
            raise ValueError("colour-matching tables do not cover the cube's wavelengths")
        cmf = np.stack([np.interp(wl, self.wavelengths_nm, t) for t in (self.xbar, self.ybar, self.zbar)])
        ill = np.interp(wl, self.wavelengths_nm, self.illuminant)
        if wl.size == 1:
            trap = np.ones(1)
        else:
            d = np.diff(wl)
            trap = np.zeros(wl.size)
            trap[:-1] += d / 2
            trap[1:] += d / 2
        return cmf * ill * trap


@lru_cache(maxsize=1)
def cie1931_d65() -> ColorMatch:
    """CIE 1931 2-degree observer with the D65 illuminant, 380-780 nm at 5 nm."""
    text = resources.files("chromasweep").joinpath("data/cie1931_d65.csv").read_text()
    rows = np.array([[float(t) for t in ln.split(",")] for ln in text.splitlines()[1:] if ln])
    return ColorMatch(*(rows[:, i] for i in range(5)))


def spectra_to_xyz(data: NDArrayF, wavelengths, colormatch: ColorMatch | None = None) -> NDArrayF:
    """Linear XYZ, shape ``(H, W, 3)``, normalized so a unit spectrum maps to the D65 white."""
    cm = colormatch or cie1931_d65()
    w = cm.weights(wavelengths)
    white = w.sum(axis=1)
    # per-component scaling maps the sampled white exactly onto the reference white
    w = w * (D65_WHITE_XYZ / white)[:, None]
    return np.einsum("kc,chw->hwk", w, np.asarray(data, dtype=np.float64))


def hsi_to_rgb(cube: HyperspectralCube, colormatch: ColorMatch | None = None) -> NDArrayF:
    """Gamma-encoded sRGB projection in [0, 1], shape ``(H, W, 3)``."""
    xyz = spectra_to_xyz(cube.data, cube.wavelengths_nm, colormatch)
    lin = xyz @ _XYZ_TO_SRGB.T
    return np.clip(linear_to_srgb(lin), 0.0, 1.0)


def compose_rgb_from_stack(stack: FocalStack, indices, white_patch=None) -> NDArrayF:
    """Use three grayscale measurements directly as R, G, B.

    ``white_patch`` is ``(row0, row1, col0, col1)``; when given, each channel is
    divided by its mean over that region.
    """
    idx = [int(i) for i in indices]
    if len(idx) != 3:
        raise ValueError("need exactly three measurement indices")
    for i in idx:
        if not 0 <= i < stack.count:
            raise IndexError(f"measurement index {i} out of range [0, {stack.count})")
    rgb = np.stack([stack.data[i] for i in idx], axis=-1)
    if white_patch is not None:
        r0, r1, c0, c1 = white_patch
        means = rgb[r0:r1, c0:c1].reshape(-1, 3).mean(axis=0)
        if np.any(means <= 0):
            raise ValueError("white patch has a non-positive channel mean")
        rgb = rgb / means
    return rgb
