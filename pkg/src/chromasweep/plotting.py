"""Report figures written next to the CSV outputs of the command-line tools."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import psnr  # noqa: E402

# strip the version string so PNG bytes do not depend on the matplotlib build
_PNG_META = {"Software": None}


def _style(ax, xlabel="", ylabel="", title=""):
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3, linewidth=0.5)
    for side in ("top", "right"):
        ax.spines[side].set_visible(False)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_focal_shift(wavelengths, shift_mm, positions_mm, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(wavelengths, shift_mm, "k-", lw=1.5, label="focal shift")
    for z in positions_mm:
        ax.axhline(z, color="tab:red", lw=0.8, ls="--")
    ax.plot([], [], color="tab:red", ls="--", lw=0.8, label="lens positions")
    ax.legend(frameon=False, fontsize=8)
    _style(ax, "wavelength (nm)", "focal shift (mm)")
    return _save(fig, path)


def plot_psf_grid(psfs, path, max_columns: int = 8) -> Path:
    n, c = psfs.count, psfs.channels
    cols = np.unique(np.linspace(0, c - 1, min(c, max_columns)).round().astype(int))
    fig, axes = plt.subplots(n, cols.size, figsize=(1.1 * cols.size, 1.1 * n), squeeze=False)
    for i in range(n):
        for a, j in enumerate(cols):
            ax = axes[i, a]
            ax.imshow(psfs.kernels[i, j], cmap="magma", interpolation="nearest")
            ax.set_xticks([])
            ax.set_yticks([])
            if i == 0:
                ax.set_title(f"{psfs.wavelengths_nm[j]:.0f} nm", fontsize=7)
            if a == 0:
                ax.set_ylabel(f"z={psfs.lens_positions_mm[i]:+.3f}", fontsize=7)
    return _save(fig, path)


def plot_convergence(diagnostics, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    it = diagnostics.iterations
    ax.semilogy(it, np.maximum(diagnostics.steps, 1e-300), "o-", label="step size")
    ax.semilogy(it, np.maximum(diagnostics.primal_residuals, 1e-300), "s-", label="primal residual")
    for event_iter, _, new_dim in diagnostics.halving_events:
        ax.axvline(event_iter, color="gray", ls=":", lw=1)
        ax.text(event_iter, ax.get_ylim()[1], f" v={new_dim}", fontsize=7, va="top")
    ax.legend(frameon=False, fontsize=8)
    _style(ax, "iteration", "value")
    return _save(fig, path)


def plot_rgb_pair(rgb_recon, rgb_truth, path, titles=("reconstruction", "ground truth")) -> Path:
    fig, axes = plt.subplots(1, 2, figsize=(6, 3))
    for ax, img, title in zip(axes, (rgb_recon, rgb_truth), titles):
        ax.imshow(np.clip(img, 0, 1), interpolation="nearest")
        ax.set_title(title, fontsize=9)
        ax.axis("off")
    return _save(fig, path)


def plot_band_psnr(recon, truth, wavelengths, path) -> Path:
    scores = [psnr(recon[j], truth[j]) for j in range(recon.shape[0])]
    finite = np.where(np.isfinite(scores), scores, np.nan)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(wavelengths, finite, "o-", color="tab:blue")
    _style(ax, "wavelength (nm)", "PSNR (dB)")
    return _save(fig, path)


def plot_spectra(recon, truth, wavelengths, pixels, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    colors = plt.cm.tab10(np.arange(len(pixels)) % 10)
    for (r, c), col in zip(pixels, colors):
        ax.plot(wavelengths, truth[:, r, c], "-", color=col, lw=1.2)
        ax.plot(wavelengths, recon[:, r, c], "--", color=col, lw=1.2)
    ax.plot([], [], "k-", label="truth")
    ax.plot([], [], "k--", label="reconstruction")
    ax.legend(frameon=False, fontsize=8)
    _style(ax, "wavelength (nm)", "radiance (normalized)")
    return _save(fig, path)


def plot_grid_log(result, path) -> Path:
    """Heat map of the stage-1 logarithmic scan with the final winner marked."""
    stage1 = [(a, b, s) for stage, a, b, s in result.log if stage == 1]
    mu1 = np.unique([a for a, _, _ in stage1])
    mu2 = np.unique([b for _, b, _ in stage1])
    grid = np.full((mu2.size, mu1.size), np.nan)
    for a, b, s in stage1:
        if np.isfinite(s):
            grid[np.searchsorted(mu2, b), np.searchsorted(mu1, a)] = s
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(grid, origin="lower", cmap="viridis", aspect="auto",
                   extent=(np.log10(mu1[0]) - 0.5, np.log10(mu1[-1]) + 0.5,
                           np.log10(mu2[0]) - 0.5, np.log10(mu2[-1]) + 0.5))
    ax.plot(np.log10(result.mu1), np.log10(result.mu2), "r*", ms=10)
    fig.colorbar(im, ax=ax, label="score")
    _style(ax, "log10 mu1", "log10 mu2")
    ax.grid(False)
    return _save(fig, path)
