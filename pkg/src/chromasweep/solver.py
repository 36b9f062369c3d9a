"""Plug-and-play ADMM in a spectral eigenspace with per-frequency block inversion.

All iterates live on the zero-padded grid ``(H + K - 1, W + K - 1)`` on which
the blur is exactly circulant. The coefficient image ``z`` and the prior slack
``u`` have ``v`` planes, the measurement slack ``v`` has ``N`` planes. Spatial
transforms use real FFTs, so each frequency bin couples only the ``v``
coefficients of that bin and the normal equations reduce to a batch of small
Hermitian ``v x v`` systems.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol

import numpy as np
import scipy.fft as sfft

from .basis import CoefficientField, halve_basis, lift_planes, project_planes
from .forward import CropSpec, kernel_otf, response_weights
from .types import FocalStack, HyperspectralCube, NDArrayF, PsfStack, SpectralBasis, SpectralResponse

log = logging.getLogger(__name__)

SIMULATION_MU = (1.20e-8, 1.1e-13)
REAL_DATA_MU = (1.60e-8, 3.9e-13)


class SolverError(RuntimeError):
    """Raised when the iteration cannot continue; carries the diagnostics so far."""

    def __init__(self, message: str, diagnostics: "Diagnostics | None" = None):
        super().__init__(message)
        self.diagnostics = diagnostics


# ---------------------------------------------------------------- denoisers


class Denoiser(Protocol):
    def __call__(self, image: NDArrayF) -> NDArrayF:
        """Denoise a ``(C, H, W)`` image; must return an array of the same shape."""


@dataclass(frozen=True)
class IdentityDenoiser:
    name = "identity"

    def __call__(self, image):
        return image


@dataclass(frozen=True)
class SoftThreshold:
    """Proximal map of ``tau * ||x||_1``."""

    tau: float
    name = "l1"

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be non-negative")

    def __call__(self, image):
        return np.sign(image) * np.maximum(np.abs(image) - self.tau, 0.0)


def _grad(img):
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, :-1] = img[:, 1:] - img[:, :-1]
    gy[:-1, :] = img[1:, :] - img[:-1, :]
    return gx, gy


def _div(px, py):
    """Discrete divergence, the negative adjoint of :func:`_grad`."""
    out = np.zeros_like(px)
    out[:, :-1] += px[:, :-1]
    out[:, 1:] -= px[:, :-1]
    out[:-1, :] += py[:-1, :]
    out[1:, :] -= py[:-1, :]
    return out


def tv_prox(img: NDArrayF, weight: float, iters: int) -> NDArrayF:
    """Isotropic TV proximal map ``argmin_u 1/2 ||u - img||^2 + weight TV(u)``.

    Chambolle's projected dual iteration, run for a fixed number of steps.
    """
    if weight <= 0:
        return img.copy()
    px = np.zeros_like(img)
    py = np.zeros_like(img)
    step = 0.125
    for _ in range(iters):
        gx, gy = _grad(_div(px, py) - img / weight)
        norm = 1.0 + step * np.sqrt(gx**2 + gy**2)
        px = (px + step * gx) / norm
        py = (py + step * gy) / norm
    return img - weight * _div(px, py)


@dataclass(frozen=True)
class TotalVariation:
    weight: float
    inner_iters: int = 50
    name = "tv"

    def __post_init__(self):
        if self.weight < 0 or self.inner_iters < 1:
            raise ValueError("TV weight must be >= 0 and inner_iters >= 1")

    def __call__(self, image):
        return np.stack([tv_prox(ch, self.weight, self.inner_iters) for ch in image])


def make_denoiser(name: str, tau: float = 0.01, tv_weight: float = 0.01, tv_iters: int = 50) -> Denoiser:
    key = name.lower()
    if key == "identity":
        return IdentityDenoiser()
    if key in ("l1", "soft_threshold"):
        return SoftThreshold(tau)
    if key in ("tv", "total_variation"):
        return TotalVariation(tv_weight, tv_iters)
    raise ValueError(f"unknown denoiser {name!r} (expected identity, l1 or tv)")


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class SolverConfig:
    mu1: float = SIMULATION_MU[0]
    mu2: float = SIMULATION_MU[1]
    max_iters: int = 9
    step_tolerance: float = 1e-3
    divergence_factor: float = 1.0
    halving_check_iter: int = 4
    halving_threshold: float = 0.5
    adaptive_halving: bool = True
    init: str = "image"
    support_constraint: bool = True
    denoiser: Denoiser = field(default_factory=IdentityDenoiser)
    workers: int = 1

    def __post_init__(self):
        if not (self.mu1 > 0 and self.mu2 > 0):
            raise ValueError("mu1 and mu2 must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.step_tolerance > 0:
            raise ValueError("step_tolerance must be positive")
        if self.divergence_factor < 1:
            raise ValueError("divergence_factor must be >= 1")
        if not self.halving_threshold > 0:
            raise ValueError("halving_threshold must be positive")
        if self.init not in ("image", "coefficient"):
            raise ValueError("init must be 'image' or 'coefficient'")


# ---------------------------------------------------------------- operator blocks


@dataclass(frozen=True, eq=False)
class OtfBlocks:
    """Per-frequency transfer matrices and cached inverses of the z-update system.

    ``otf`` has shape ``(N, C, Hp, Wr)``; ``a_hat = A_f B^T`` has shape
    ``(N, v, Hp, Wr)``; ``inverse`` holds ``(mu1 B A_f^H A_f B^T + mu2 I)^-1`` with
    shape ``(Hp, Wr, v, v)``.
    """

    otf: np.ndarray
    a_hat: np.ndarray
    inverse: np.ndarray
    basis: SpectralBasis
    padded_shape: tuple[int, int]
    mu1: float
    mu2: float

    @property
    def dim(self) -> int:
        return self.basis.dim

    def system_matrices(self) -> np.ndarray:
        """The uninverted blocks ``M_f``, shape ``(Hp, Wr, v, v)``."""
        gram = np.einsum("naij,nbij->ijab", self.a_hat.conj(), self.a_hat)
        return self.mu1 * gram + self.mu2 * np.eye(self.dim)


def precompute_otf_blocks(
    psfs: PsfStack,
    basis: SpectralBasis,
    crop: CropSpec,
    mu1: float,
    mu2: float,
    otf: np.ndarray | None = None,
) -> OtfBlocks:
    if basis.channels != psfs.channels:
        raise ValueError(f"dimension mismatch: basis has {basis.channels} channels, PSFs {psfs.channels}")
    if otf is None:
        otf = kernel_otf(psfs.kernels, crop.padded_shape)
    a_hat = np.einsum("ncij,vc->nvij", otf, basis.rows)
    gram = np.einsum("naij,nbij->ijab", a_hat.conj(), a_hat)
    system = mu1 * gram + mu2 * np.eye(basis.dim)
    try:
        chol = np.linalg.cholesky(system)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - mu2 > 0 makes this impossible
        raise AssertionError("z-update block is not positive definite") from exc
    eye = np.broadcast_to(np.eye(basis.dim, dtype=complex), system.shape)
    linv = np.linalg.solve(chol, eye)
    inverse = np.einsum("ijba,ijbc->ijac", linv.conj(), linv)
    return OtfBlocks(otf, a_hat, inverse, basis, crop.padded_shape, mu1, mu2)


def apply_h_hat(z: NDArrayF, blocks: OtfBlocks, workers: int = 1) -> NDArrayF:
    """``H P z`` on the padded grid: ``(v, Hp, Wp) -> (N, Hp, Wp)``."""
    zf = sfft.rfft2(z, axes=(-2, -1), workers=workers)
    return _h_hat_from_freq(zf, blocks, workers)


def _h_hat_from_freq(zf, blocks, workers):
    yf = np.einsum("nvij,vij->nij", blocks.a_hat, zf)
    return sfft.irfft2(yf, s=blocks.padded_shape, axes=(-2, -1), workers=workers)


def apply_h_hat_adjoint(w: NDArrayF, blocks: OtfBlocks, workers: int = 1) -> NDArrayF:
    """``P^T H^T w``: ``(N, Hp, Wp) -> (v, Hp, Wp)``."""
    wf = sfft.rfft2(w, axes=(-2, -1), workers=workers)
    zf = np.einsum("nvij,nij->vij", blocks.a_hat.conj(), wf)
    return sfft.irfft2(zf, s=blocks.padded_shape, axes=(-2, -1), workers=workers)


def apply_normal_operator(z: NDArrayF, blocks: OtfBlocks, workers: int = 1) -> NDArrayF:
    """``(mu1 H^T H + mu2 I) z`` evaluated matrix-free in the spatial domain."""
    hz = apply_h_hat(z, blocks, workers)
    return blocks.mu1 * apply_h_hat_adjoint(hz, blocks, workers) + blocks.mu2 * z


# ---------------------------------------------------------------- ADMM steps


def v_update(y_embedded: NDArrayF, hz: NDArrayF, xi: NDArrayF, mu1: float, mask: NDArrayF) -> NDArrayF:
    """``(C^T C + mu1 I)^-1 (C^T y + mu1 H z - xi)``; ``C^T C`` is the 0/1 window mask."""
    return (y_embedded + mu1 * hz - xi) / (mask + mu1)


def solve_blocks(rhs: NDArrayF, blocks: OtfBlocks, workers: int = 1) -> tuple[NDArrayF, np.ndarray]:
    """Solve ``(mu1 H^T H + mu2 I) z = rhs``; returns ``z`` and its spectrum."""
    if rhs.shape[0] != blocks.dim:
        raise ValueError(f"basis dimension mismatch: rhs has {rhs.shape[0]} planes, blocks {blocks.dim}")
    rf = sfft.rfft2(rhs, axes=(-2, -1), workers=workers)
    zf = np.einsum("ijab,bij->aij", blocks.inverse, rf)
    return sfft.irfft2(zf, s=blocks.padded_shape, axes=(-2, -1), workers=workers), zf


def z_update(v, xi, u, eta, blocks: OtfBlocks, workers: int = 1) -> tuple[NDArrayF, np.ndarray]:
    """Wiener-like step: exact solve of the eigenspace normal equations."""
    wf = sfft.rfft2(blocks.mu1 * v + xi, axes=(-2, -1), workers=workers)
    rf = np.einsum("nvij,nij->vij", blocks.a_hat.conj(), wf)
    rf += sfft.rfft2(eta + blocks.mu2 * u, axes=(-2, -1), workers=workers)
    if rf.shape[0] != blocks.dim:
        raise ValueError("basis dimension mismatch with cached blocks")
    zf = np.einsum("ijab,bij->aij", blocks.inverse, rf)
    return sfft.irfft2(zf, s=blocks.padded_shape, axes=(-2, -1), workers=workers), zf


def u_update(
    z, eta, basis: SpectralBasis, denoiser: Denoiser, mu2: float, support: NDArrayF | None = None
) -> NDArrayF:
    """Denoise ``z - eta / mu2`` in the image domain and project back to the eigenspace.

    ``eta`` is the unscaled multiplier of ``u = z``, which fixes the sign and
    scale of the shift. ``support`` is an optional 0/1 mask on the padded grid; the denoised image
    is zeroed outside it, since the scene is known to vanish on the padding.
    """
    image = lift_planes(z - eta / mu2, basis)
    out = np.asarray(denoiser(image), dtype=np.float64)
    if out.shape != image.shape:
        raise ValueError(f"denoiser changed image shape {image.shape} -> {out.shape}")
    if support is not None:
        out = out * support
    return project_planes(out, basis)


def dual_update(xi, eta, v, hz, u, z, mu1: float, mu2: float) -> tuple[NDArrayF, NDArrayF]:
    return xi + mu1 * (v - hz), eta + mu2 * (u - z)


# ---------------------------------------------------------------- driver


@dataclass
class SolverState:
    z: NDArrayF
    u: NDArrayF
    v: NDArrayF
    xi: NDArrayF
    eta: NDArrayF
    iteration: int = 0
    steps: list[float] = field(default_factory=list)

    def coefficients(self) -> CoefficientField:
        return CoefficientField(self.z)

    def check_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in (self.z, self.u, self.v, self.xi, self.eta))


@dataclass
class Diagnostics:
    iterations: list[int] = field(default_factory=list)
    steps: list[float] = field(default_factory=list)
    primal_residuals: list[float] = field(default_factory=list)
    basis_dims: list[int] = field(default_factory=list)
    halving_events: list[tuple[int, int, int]] = field(default_factory=list)
    stop_reason: str = ""

    def record(self, it: int, step: float, residual: float, dim: int) -> None:
        self.iterations.append(it)
        self.steps.append(step)
        self.primal_residuals.append(residual)
        self.basis_dims.append(dim)

    @property
    def iterations_used(self) -> int:
        return self.iterations[-1] if self.iterations else 0

    def to_csv(self) -> str:
        lines = ["iter,step,primal_residual,basis_dim"]
        for it, s, r, d in zip(self.iterations, self.steps, self.primal_residuals, self.basis_dims):
            lines.append(f"{it},{s!r},{r!r},{d}")
        return "\n".join(lines) + "\n"


def _relative_change(new, old) -> float:
    den = float(np.linalg.norm(old))
    num = float(np.linalg.norm(new - old))
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / den


def initial_coefficients(basis: SpectralBasis, shape: tuple[int, int], mode: str = "image") -> NDArrayF:
    """Starting point 0.5 everywhere, either in the image domain or in coefficient space."""
    if mode == "coefficient":
        return np.full((basis.dim,) + shape, 0.5)
    per_pixel = basis.rows @ np.full(basis.channels, 0.5)
    return np.broadcast_to(per_pixel[:, None, None], (basis.dim,) + shape).copy()


def run_admm(
    stack: FocalStack,
    psfs: PsfStack,
    basis: SpectralBasis,
    config: SolverConfig = SolverConfig(),
    response: SpectralResponse | None = None,
    callback: Callable[[SolverState], None] | None = None,
) -> tuple[HyperspectralCube, Diagnostics]:
    """Reconstruct a hyperspectral cube from a focal stack.

    Stops when the relative change of ``z`` falls below ``step_tolerance``, when
    it grows past ``divergence_factor`` times the previous change, or after
    ``max_iters`` iterations. At ``halving_check_iter`` the basis is halved if
    ``||z - u|| / ||u||`` exceeds ``halving_threshold``.
    """
    if stack.count != psfs.count:
        raise ValueError(f"dimension mismatch: {stack.count} measurements, {psfs.count} PSF rows")
    if basis.channels != psfs.channels:
        raise ValueError("dimension mismatch: basis and PSF channel counts differ")
    workers = config.workers
    crop = CropSpec.for_kernel(stack.height, stack.width, psfs.kernel_size)
    mu1, mu2 = config.mu1, config.mu2
    otf = kernel_otf(psfs.kernels, crop.padded_shape)
    blocks = precompute_otf_blocks(psfs, basis, crop, mu1, mu2, otf=otf)
    mask = crop.mask()
    y_emb = crop.embed(stack.data)

    hp, wp = crop.padded_shape
    z0 = initial_coefficients(basis, (hp, wp), config.init)
    if config.support_constraint:
        z0 = z0 * mask
    state = SolverState(
        z=z0,
        u=z0.copy(),
        v=np.zeros((stack.count, hp, wp)),
        xi=np.zeros((stack.count, hp, wp)),
        eta=np.zeros((basis.dim, hp, wp)),
    )
    diag = Diagnostics()
    hz = apply_h_hat(state.z, blocks, workers)
    prev_step = None
    just_halved = False

    for it in range(1, config.max_iters + 1):
        z_old = state.z
        state.v = v_update(y_emb, hz, state.xi, mu1, mask)
        state.z, zf = z_update(state.v, state.xi, state.u, state.eta, blocks, workers)
        state.u = u_update(
            state.z, state.eta, blocks.basis, config.denoiser, mu2, mask if config.support_constraint else None
        )
        hz = _h_hat_from_freq(zf, blocks, workers)
        state.xi, state.eta = dual_update(state.xi, state.eta, state.v, hz, state.u, state.z, mu1, mu2)
        state.iteration = it

        step = _relative_change(state.z, z_old)
        state.steps.append(step)
        residual = float(np.linalg.norm(state.v - hz))
        diag.record(it, step, residual, blocks.dim)
        if callback is not None:
            callback(state)
        if not state.check_finite():
            diag.stop_reason = "non-finite state"
            raise SolverError(f"non-finite solver state at iteration {it}", diag)

        if step < config.step_tolerance:
            diag.stop_reason = "converged"
            break
        if prev_step is not None and not just_halved and step > config.divergence_factor * prev_step:
            diag.stop_reason = "step increased"
            break
        prev_step = step
        just_halved = False

        if config.adaptive_halving and it == config.halving_check_iter:
            u_norm = float(np.linalg.norm(state.u))
            gap = float(np.linalg.norm(state.z - state.u)) / u_norm if u_norm > 0 else float("inf")
            if gap > config.halving_threshold:
                if blocks.dim < 2:
                    diag.stop_reason = "halving requested at v=1"
                    raise SolverError("basis halving requested with a one-dimensional basis", diag)
                new_basis = halve_basis(blocks.basis)
                keep = new_basis.dim
                log.info("iteration %d: z-u gap %.3g > %.3g, basis %d -> %d", it, gap, config.halving_threshold, blocks.dim, keep)
                diag.halving_events.append((it, blocks.dim, keep))
                # leading rows are kept, so re-projection is a truncation
                state.z = state.z[:keep].copy()
                state.u = state.u[:keep].copy()
                state.eta = state.eta[:keep].copy()
                blocks = precompute_otf_blocks(psfs, new_basis, crop, mu1, mu2, otf=otf)
                hz = apply_h_hat(state.z, blocks, workers)
                just_halved = True
    else:
        diag.stop_reason = "max_iters"
    if not diag.stop_reason:
        diag.stop_reason = "max_iters"

    x = crop.crop(lift_planes(state.z, blocks.basis))
    if response is not None:
        weights = response_weights(response, psfs.wavelengths_nm)
        with np.errstate(divide="ignore", invalid="ignore"):
            x = np.where(weights[:, None, None] > 0, x / weights[:, None, None], 0.0)
    x = np.maximum(x, 0.0)
    return HyperspectralCube(x, psfs.wavelengths_nm), diag


# ---------------------------------------------------------------- tuning


@dataclass
class GridSearchResult:
    mu1: float
    mu2: float
    score: float
    log: list[tuple[int, float, float, float]]

    def to_csv(self) -> str:
        lines = ["stage,mu1,mu2,score"]
        lines += [f"{s},{a!r},{b!r},{c!r}" for s, a, b, c in self.log]
        return "\n".join(lines) + "\n"


def _log_axis(lo: float, hi: float) -> NDArrayF:
    if lo == hi:
        return np.array([lo])
    if not (0 < lo < hi):
        raise ValueError("grid bounds must satisfy 0 < lo <= hi")
    e_lo, e_hi = np.log10(lo), np.log10(hi)
    n = int(round(e_hi - e_lo)) + 1
    return 10.0 ** np.linspace(e_lo, e_hi, n)


def _refine_axis(center: float, fixed: bool, halfwidth_decades: float, n: int) -> NDArrayF:
    if fixed:
        return np.array([center])
    return np.linspace(center * 10.0**-halfwidth_decades, center * 10.0**halfwidth_decades, n)


def _linear_refine(center: float, step: float, fixed: bool, n: int) -> NDArrayF:
    if fixed:
        return np.array([center])
    half = (n - 1) // 2
    pts = center + step * np.arange(-half, half + 1) / half
    return pts[pts > 0]


def grid_search(
    objective: Callable[[float, float], float],
    mu1_range: tuple[float, float] = (1e-15, 1e-5),
    mu2_range: tuple[float, float] = (1e-15, 1e-5),
    stage3: bool = False,
    refine_points: int = 9,
) -> GridSearchResult:
    """Three-stage search for ``(mu1, mu2)`` maximizing ``objective``.

    Stage 1 scans powers of ten between the bounds; stage 2 scans a linear
    ``refine_points``-square grid covering one decade centred on the stage-1
    winner; the optional stage 3 repeats a linear scan of ``+-`` one stage-2
    spacing around the stage-2 winner. A degenerate range pins that axis.
    Ties go to the lexicographically smaller pair.
    """
    fixed1 = mu1_range[0] == mu1_range[1]
    fixed2 = mu2_range[0] == mu2_range[1]
    log_entries: list[tuple[int, float, float, float]] = []
    best: list = [None]

    def scan(stage: int, axis1, axis2):
        for a in axis1:
            for b in axis2:
                score = float(objective(float(a), float(b)))
                log_entries.append((stage, float(a), float(b), score))
                if not np.isfinite(score):
                    continue
                cand = (score, float(a), float(b))
                cur = best[0]
                if cur is None or score > cur[0] or (score == cur[0] and (cand[1], cand[2]) < (cur[1], cur[2])):
                    best[0] = cand

    scan(1, _log_axis(*mu1_range), _log_axis(*mu2_range))
    if best[0] is None:
        raise ValueError("objective is non-finite at every stage-1 grid point")
    _, w1, w2 = best[0]
    if not (fixed1 and fixed2):
        ax1 = _refine_axis(w1, fixed1, 0.5, refine_points)
        ax2 = _refine_axis(w2, fixed2, 0.5, refine_points)
        scan(2, ax1, ax2)
        if stage3:
            _, w1, w2 = best[0]
            d1 = (ax1[-1] - ax1[0]) / (refine_points - 1) if ax1.size > 1 else 0.0
            d2 = (ax2[-1] - ax2[0]) / (refine_points - 1) if ax2.size > 1 else 0.0
            scan(3, _linear_refine(w1, d1, fixed1, refine_points), _linear_refine(w2, d2, fixed2, refine_points))
    score, m1, m2 = best[0]
    return GridSearchResult(m1, m2, score, log_entries)


def with_mu(config: SolverConfig, mu1: float, mu2: float) -> SolverConfig:
    return replace(config, mu1=mu1, mu2=mu2)
