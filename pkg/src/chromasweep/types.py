"""Shared immutable containers: cubes, focal stacks, PSF stacks, bases, responses.

All image data is stored plane-major: ``(channel, row, column)`` for cubes,
``(measurement, row, column)`` for stacks and ``(measurement, channel, row,
column)`` for kernels.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
import numpy.typing as npt

NDArrayF = npt.NDArray[np.float64]

KERNEL_SUM_TOL = 1e-9
ORTHONORMAL_TOL = 1e-10


class ValidationError(ValueError):
    """Raised when a container violates one of its invariants."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def _frozen_array(values, ndim: int, name: str) -> NDArrayF:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise ValidationError([f"{name} must be {ndim}-D, got shape {arr.shape}"])
    arr.setflags(write=False)
    return arr


def _check_increasing(values: NDArrayF, name: str) -> list[str]:
    if not np.all(np.isfinite(values)):
        return [f"{name} contains non-finite values"]
    if values.size > 1 and not np.all(np.diff(values) > 0):
        bad = int(np.argmin(np.diff(values) > 0))
        return [f"{name} not strictly increasing at index {bad + 1}"]
    return []


def _check_finite_planes(data: NDArrayF, plane_name: str) -> list[str]:
    bad = ~np.isfinite(data)
    if not bad.any():
        return []
    idx = np.argwhere(bad)
    out = []
    for p, r, c in idx[:5]:
        out.append(f"non-finite value in {plane_name} {p} at pixel (row={r}, col={c})")
    if len(idx) > 5:
        out.append(f"... {len(idx) - 5} more non-finite values")
    return out


@dataclass(frozen=True, eq=False)
class HyperspectralCube:
    """Scene radiance, shape ``(C, H, W)``, normalized to [0, 1] by convention."""

    data: NDArrayF
    wavelengths_nm: NDArrayF

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_array(self.data, 3, "cube data"))
        object.__setattr__(
            self, "wavelengths_nm", _frozen_array(self.wavelengths_nm, 1, "wavelengths_nm")
        )

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def violations(self) -> list[str]:
        out = []
        if self.wavelengths_nm.size != self.channels:
            out.append(
                f"dimension mismatch: {self.wavelengths_nm.size} wavelengths for "
                f"{self.channels} channels"
            )
        out += _check_increasing(self.wavelengths_nm, "wavelengths_nm")
        out += _check_finite_planes(self.data, "channel")
        return out


@dataclass(frozen=True, eq=False)
class FocalStack:
    """Grayscale measurements, shape ``(N, H, W)``, one per lens position."""

    data: NDArrayF
    lens_positions_mm: NDArrayF
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_array(self.data, 3, "stack data"))
        object.__setattr__(
            self,
            "lens_positions_mm",
            _frozen_array(self.lens_positions_mm, 1, "lens_positions_mm"),
        )
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def violations(self) -> list[str]:
        out = []
        if self.count < 1:
            out.append("focal stack must hold at least one measurement")
        if self.lens_positions_mm.size != self.count:
            out.append(
                f"dimension mismatch: {self.lens_positions_mm.size} lens positions for "
                f"{self.count} measurements"
            )
        out += _check_increasing(self.lens_positions_mm, "lens_positions_mm")
        out += _check_finite_planes(self.data, "measurement")
        return out


@dataclass(frozen=True, eq=False)
class PsfStack:
    """Calibration kernels ``K(z_i, lambda_j)``, shape ``(N, C, K, K)``."""

    kernels: NDArrayF
    lens_positions_mm: NDArrayF
    wavelengths_nm: NDArrayF

    def __post_init__(self):
        object.__setattr__(self, "kernels", _frozen_array(self.kernels, 4, "kernels"))
        object.__setattr__(
            self,
            "lens_positions_mm",
            _frozen_array(self.lens_positions_mm, 1, "lens_positions_mm"),
        )
        object.__setattr__(
            self, "wavelengths_nm", _frozen_array(self.wavelengths_nm, 1, "wavelengths_nm")
        )

    @property
    def count(self) -> int:
        return self.kernels.shape[0]

    @property
    def channels(self) -> int:
        return self.kernels.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.kernels.shape[2]

    def violations(self) -> list[str]:
        out = []
        n, c, k, k2 = self.kernels.shape
        if k != k2:
            out.append(f"kernels must be square, got {k}x{k2}")
        if k % 2 == 0:
            out.append(f"kernel size must be odd, got {k}")
        if self.lens_positions_mm.size != n:
            out.append(f"dimension mismatch: {self.lens_positions_mm.size} positions for {n} kernels rows")
        if self.wavelengths_nm.size != c:
            out.append(f"dimension mismatch: {self.wavelengths_nm.size} wavelengths for {c} kernel columns")
        out += _check_increasing(self.lens_positions_mm, "lens_positions_mm")
        out += _check_increasing(self.wavelengths_nm, "wavelengths_nm")
        if not np.all(np.isfinite(self.kernels)):
            out.append("kernels contain non-finite values")
            return out
        for i in range(n):
            for j in range(c):
                kern = self.kernels[i, j]
                if np.any(kern < 0):
                    out.append(f"kernel ({i}, {j}) has negative entries")
                s = float(kern.sum())
                if abs(s - 1.0) > KERNEL_SUM_TOL:
                    out.append(f"kernel ({i}, {j}) not normalized: sum {s!r} != 1")
        return out


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Orthonormal spectral eigenvectors, ``rows`` has shape ``(v, C)``."""

    rows: NDArrayF
    wavelengths_nm: NDArrayF | None = None

    def __post_init__(self):
        object.__setattr__(self, "rows", _frozen_array(self.rows, 2, "basis rows"))
        if self.wavelengths_nm is not None:
            object.__setattr__(
                self, "wavelengths_nm", _frozen_array(self.wavelengths_nm, 1, "wavelengths_nm")
            )

    @property
    def dim(self) -> int:
        return self.rows.shape[0]

    @property
    def channels(self) -> int:
        return self.rows.shape[1]

    def violations(self) -> list[str]:
        out = []
        if self.dim > self.channels:
            out.append(f"basis dimension {self.dim} exceeds channel count {self.channels}")
        if not np.all(np.isfinite(self.rows)):
            out.append("basis contains non-finite values")
            return out
        gram_err = np.abs(self.rows @ self.rows.T - np.eye(self.dim)).max()
        if gram_err >= ORTHONORMAL_TOL:
            out.append(f"basis rows not orthonormal: max |B B^T - I| = {gram_err:.3e}")
        if self.wavelengths_nm is not None:
            if self.wavelengths_nm.size != self.channels:
                out.append("dimension mismatch: basis wavelengths vs channels")
            out += _check_increasing(self.wavelengths_nm, "wavelengths_nm")
        return out


@dataclass(frozen=True, eq=False)
class SpectralResponse:
    """Multiplicative sensor/filter efficiency sampled on an ascending wavelength grid."""

    wavelengths_nm: NDArrayF
    response: NDArrayF

    def __post_init__(self):
        object.__setattr__(
            self, "wavelengths_nm", _frozen_array(self.wavelengths_nm, 1, "wavelengths_nm")
        )
        object.__setattr__(self, "response", _frozen_array(self.response, 1, "response"))

    def violations(self) -> list[str]:
        out = []
        if self.wavelengths_nm.size != self.response.size:
            out.append("dimension mismatch: response length differs from wavelength grid")
        if self.wavelengths_nm.size < 1:
            out.append("response table is empty")
        out += _check_increasing(self.wavelengths_nm, "wavelengths_nm")
        if not np.all(np.isfinite(self.response)):
            out.append("response contains non-finite values")
        elif np.any((self.response < 0) | (self.response > 1)):
            out.append("response values must lie in [0, 1]")
        return out


Container = Union[HyperspectralCube, FocalStack, PsfStack, SpectralBasis, SpectralResponse]


def validate(container: Container, raise_on_error: bool = False) -> list[str]:
    """Return the list of invariant violations (empty when the container is valid)."""
    report = container.violations()
    if report and raise_on_error:
        raise ValidationError(report)
    return report


def resample_response(resp: SpectralResponse, wavelengths) -> NDArrayF:
    """Linearly interpolate ``resp`` at ``wavelengths``; extrapolation is an error."""
    validate(resp, raise_on_error=True)
    wl = np.asarray(wavelengths, dtype=np.float64)
    lo, hi = resp.wavelengths_nm[0], resp.wavelengths_nm[-1]
    outside = (wl < lo) | (wl > hi)
    if outside.any():
        raise ValueError(
            f"wavelength {wl[outside][0]} nm outside response coverage [{lo}, {hi}] nm"
        )
    return np.interp(wl, resp.wavelengths_nm, resp.response)
