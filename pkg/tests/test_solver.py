import math

import numpy as np
import pytest

from chromasweep.basis import identity_basis, lift_planes
from chromasweep.forward import CropSpec, apply_forward
from chromasweep.solver import (
    REAL_DATA_MU,
    SIMULATION_MU,
    Diagnostics,
    SoftThreshold,
    SolverConfig,
    SolverError,
    TotalVariation,
    apply_h_hat,
    apply_h_hat_adjoint,
    apply_normal_operator,
    dual_update,
    grid_search,
    initial_coefficients,
    make_denoiser,
    precompute_otf_blocks,
    run_admm,
    solve_blocks,
    tv_prox,
    u_update,
    v_update,
    with_mu,
    z_update,
)
from chromasweep.types import FocalStack, HyperspectralCube, PsfStack, SpectralBasis
from helpers import delta_psfs, random_psfs
from oracles.dense import circulant_blur_matrix, dense_admm, dft_matrix
from recovery_case import build_mismatch_case


def _random_basis(rng, v, c):
    q, _ = np.linalg.qr(rng.standard_normal((c, v)))
    return SpectralBasis(q.T, 400.0 + 10.0 * np.arange(c))


def _dense_h_hat(kernels, basis, padded_shape):
    p = padded_shape[0] * padded_shape[1]
    return circulant_blur_matrix(kernels, padded_shape) @ np.kron(basis.rows.T, np.eye(p))


def _blocks(rng, n, c, v, k, h, w, mu1=0.7, mu2=0.3):
    psfs = random_psfs(rng, n, c, k)
    basis = _random_basis(rng, v, c)
    crop = CropSpec.for_kernel(h, w, k)
    return psfs, basis, crop, precompute_otf_blocks(psfs, basis, crop, mu1, mu2)


# ---- configuration ----------------------------------------------------------

def test_default_config_uses_simulation_pair():
    cfg = SolverConfig()
    assert (cfg.mu1, cfg.mu2) == SIMULATION_MU == (1.20e-8, 1.1e-13)
    assert REAL_DATA_MU == (1.60e-8, 3.9e-13)
    assert cfg.max_iters == 9 and cfg.halving_check_iter == 4 and cfg.divergence_factor == 1.0


@pytest.mark.parametrize(
    "kwargs",
    [{"mu1": 0.0}, {"mu2": -1.0}, {"max_iters": 0}, {"step_tolerance": 0.0},
     {"divergence_factor": 0.5}, {"halving_threshold": 0.0}, {"init": "zeros"}],
)
def test_config_rejects_invalid_values(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_with_mu_replaces_only_the_pair():
    cfg = with_mu(SolverConfig(max_iters=3), 1.0, 2.0)
    assert (cfg.mu1, cfg.mu2, cfg.max_iters) == (1.0, 2.0, 3)


# ---- OTF blocks -------------------------------------------------------------

def test_delta_kernels_identity_basis_blocks():
    n, c, mu1, mu2 = 3, 2, 0.4, 0.1
    crop = CropSpec.for_kernel(4, 4, 3)
    blocks = precompute_otf_blocks(delta_psfs(n, c, 3), identity_basis(c), crop, mu1, mu2)
    np.testing.assert_allclose(blocks.a_hat, 1.0, atol=1e-14)
    expected = mu1 * n * np.ones((c, c)) + mu2 * np.eye(c)
    np.testing.assert_allclose(blocks.system_matrices(), np.broadcast_to(expected, blocks.inverse.shape), atol=1e-13)


def test_zero_mu1_blocks_are_scaled_identity(rng):
    # mu1 = 0 is outside the solver contract but the block algebra must still hold
    psfs = random_psfs(rng, 2, 3, 3)
    blocks = precompute_otf_blocks(psfs, _random_basis(rng, 2, 3), CropSpec.for_kernel(4, 4, 3), 0.0, 0.5)
    np.testing.assert_allclose(blocks.system_matrices(), np.broadcast_to(0.5 * np.eye(2), (6, 4, 2, 2)), atol=1e-15)


def test_blocks_are_hermitian_positive_definite(rng):
    *_, blocks = _blocks(rng, 3, 4, 3, 5, 6, 5)
    m = blocks.system_matrices()
    np.testing.assert_allclose(m, np.conj(np.swapaxes(m, -1, -2)), atol=1e-13)
    assert np.all(np.linalg.eigvalsh(m) > 0)
    np.testing.assert_allclose(m @ blocks.inverse, np.broadcast_to(np.eye(3), m.shape), atol=1e-10)


def test_blocks_match_dense_dft_diagonalisation(rng):
    mu1, mu2 = 0.9, 0.2
    psfs, basis, crop, blocks = _blocks(rng, 2, 3, 2, 3, 4, 4, mu1, mu2)
    hp, wp = crop.padded_shape
    assert (hp, wp) == (6, 6)
    p = hp * wp
    h_hat = _dense_h_hat(psfs.kernels, basis, (hp, wp))
    dense = mu1 * h_hat.T @ h_hat + mu2 * np.eye(2 * p)
    f2 = np.kron(dft_matrix(hp), dft_matrix(wp))
    f2_inv = np.conj(f2).T / p
    m_fast = blocks.system_matrices()
    worst = 0.0
    for a in range(2):
        for b in range(2):
            diag_block = f2 @ dense[a * p:(a + 1) * p, b * p:(b + 1) * p] @ f2_inv
            off = diag_block - np.diag(np.diag(diag_block))
            assert np.abs(off).max() < 1e-9
            full = np.diag(diag_block).reshape(hp, wp)
            worst = max(worst, np.abs(full[:, : wp // 2 + 1] - m_fast[:, :, a, b]).max())
    assert worst < 1e-9


def test_basis_channel_mismatch_rejected(rng):
    with pytest.raises(ValueError, match="dimension mismatch"):
        precompute_otf_blocks(random_psfs(rng, 2, 3, 3), _random_basis(rng, 2, 4), CropSpec.for_kernel(4, 4, 3), 1, 1)


def test_h_hat_and_adjoint_match_dense(rng):
    psfs, basis, crop, blocks = _blocks(rng, 2, 3, 2, 3, 5, 4)
    h_hat = _dense_h_hat(psfs.kernels, basis, crop.padded_shape)
    z = rng.standard_normal((2,) + crop.padded_shape)
    w = rng.standard_normal((2,) + crop.padded_shape)
    np.testing.assert_allclose(apply_h_hat(z, blocks).ravel(), h_hat @ z.ravel(), atol=1e-12)
    np.testing.assert_allclose(apply_h_hat_adjoint(w, blocks).ravel(), h_hat.T @ w.ravel(), atol=1e-12)


# ---- individual steps -------------------------------------------------------

def test_v_update_matches_diagonal_oracle(rng):
    crop = CropSpec.for_kernel(3, 4, 3)
    mask = crop.mask()
    y = crop.embed(rng.random((2, 3, 4)))
    hz, xi = rng.standard_normal((2, 2, 5, 6))
    mu1 = 0.37
    diag = np.tile(mask.ravel(), 2) + mu1
    oracle = np.linalg.solve(np.diag(diag), y.ravel() + mu1 * hz.ravel() - xi.ravel())
    assert np.abs(v_update(y, hz, xi, mu1, mask).ravel() - oracle).max() < 1e-12


def test_v_update_fixed_point_inside_window(rng):
    crop = CropSpec.for_kernel(4, 4, 3)
    hz = rng.random((2, 6, 6))
    y = crop.embed(crop.crop(hz))
    v = v_update(y, hz, np.zeros_like(hz), 0.8, crop.mask())
    np.testing.assert_allclose(crop.crop(v), crop.crop(hz), atol=1e-15)


def test_v_update_large_mu1_limit(rng):
    crop = CropSpec.for_kernel(4, 4, 3)
    hz, xi = rng.random((2, 2, 6, 6))
    y = crop.embed(rng.random((2, 4, 4)))
    v = v_update(y, hz, xi, 1e9, crop.mask())
    np.testing.assert_allclose(v, hz, atol=1e-8)


@pytest.mark.parametrize("seed", range(6))
def test_z_update_matches_dense_solve(seed):
    rng = np.random.default_rng(seed)
    h = int(rng.integers(4, 9))
    w = int(rng.integers(4, 9))
    c, v, n = int(rng.integers(2, 5)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
    v = min(v, c)
    mu1, mu2 = 10.0 ** rng.uniform(-3, 1), 10.0 ** rng.uniform(-3, 1)
    psfs, basis, crop, blocks = _blocks(rng, n, c, v, 3, h, w, mu1, mu2)
    shape = crop.padded_shape
    vv, xi = rng.standard_normal((2, n) + shape)
    u, eta = rng.standard_normal((2, v) + shape)
    z, _ = z_update(vv, xi, u, eta, blocks)

    h_hat = _dense_h_hat(psfs.kernels, basis, shape)
    rhs = h_hat.T @ (mu1 * vv.ravel() + xi.ravel()) + eta.ravel() + mu2 * u.ravel()
    dense = np.linalg.solve(mu1 * h_hat.T @ h_hat + mu2 * np.eye(rhs.size), rhs)
    assert np.abs(z.ravel() - dense).max() < 1e-8
    resid = apply_normal_operator(z, blocks) - rhs.reshape(z.shape)
    assert np.linalg.norm(resid) / np.linalg.norm(rhs) < 1e-8


def test_z_update_reduces_to_u_plus_scaled_eta_without_data(rng):
    psfs, basis, crop, _ = _blocks(rng, 2, 3, 2, 3, 4, 4)
    blocks = precompute_otf_blocks(psfs, basis, crop, 0.0, 0.25)
    shape = crop.padded_shape
    u, eta = rng.standard_normal((2, 2) + shape)
    vv, xi = rng.standard_normal((2, 2) + shape)
    z, _ = z_update(vv, np.zeros_like(xi), u, eta, blocks)
    np.testing.assert_allclose(z, u + eta / 0.25, atol=1e-12)


def test_solve_blocks_rejects_wrong_dimension(rng):
    *_, blocks = _blocks(rng, 2, 3, 2, 3, 4, 4)
    with pytest.raises(ValueError, match="basis dimension mismatch"):
        solve_blocks(np.zeros((3, 6, 6)), blocks)


def test_u_update_identity_prior_is_shifted_z(rng):
    basis = _random_basis(rng, 3, 5)
    z, eta = rng.standard_normal((2, 3, 4, 4))
    u = u_update(z, eta, basis, make_denoiser("identity"), mu2=0.5)
    np.testing.assert_allclose(u, z - eta / 0.5, atol=1e-12)


def test_u_update_support_mask_zeroes_padding(rng):
    basis = identity_basis(2)
    crop = CropSpec.for_kernel(3, 3, 3)
    z = rng.random((2, 5, 5))
    u = u_update(z, np.zeros_like(z), basis, make_denoiser("identity"), 1.0, crop.mask())
    assert np.all(u[:, 0, :] == 0) and np.all(u[:, :, -1] == 0)
    np.testing.assert_allclose(crop.crop(u), crop.crop(z))


def test_soft_threshold_small_values_vanish(rng):
    tau = 0.3
    z = rng.uniform(-0.29, 0.29, (2, 4, 4))
    u = u_update(z, np.zeros_like(z), identity_basis(2), SoftThreshold(tau), 1.0)
    assert np.all(u == 0.0)


def test_soft_threshold_shrinks_by_tau():
    tau = 0.2
    img = np.array([[[2 * tau, -2 * tau, 0.5 * tau]]])
    np.testing.assert_allclose(SoftThreshold(tau)(img), [[[tau, -tau, 0.0]]], atol=1e-15)


def test_tv_prox_flattens_noise_and_keeps_constants(rng):
    const = np.full((8, 8), 0.6)
    np.testing.assert_allclose(tv_prox(const, 0.1, 30), const, atol=1e-12)
    noisy = 0.5 + 0.1 * rng.standard_normal((16, 16))
    smooth = tv_prox(noisy, 0.2, 100)
    tv = lambda a: np.abs(np.diff(a, axis=0)).sum() + np.abs(np.diff(a, axis=1)).sum()
    assert tv(smooth) < 0.5 * tv(noisy)
    assert smooth.mean() == pytest.approx(noisy.mean(), abs=1e-10)


def test_tv_divergence_is_negative_adjoint_of_gradient(rng):
    from chromasweep.solver import _div, _grad

    img = rng.standard_normal((5, 7))
    px, py = rng.standard_normal((2, 5, 7))
    gx, gy = _grad(img)
    assert abs(np.vdot(gx, px) + np.vdot(gy, py) + np.vdot(img, _div(px, py))) < 1e-12


def test_tv_prox_beats_random_perturbations(rng):
    g = 0.5 + 0.1 * rng.standard_normal((8, 8))
    weight = 0.1

    def objective(u):
        dx = np.pad(np.diff(u, axis=1), ((0, 0), (0, 1)))
        dy = np.pad(np.diff(u, axis=0), ((0, 1), (0, 0)))
        return 0.5 * np.sum((u - g) ** 2) + weight * np.sum(np.sqrt(dx**2 + dy**2))

    u = tv_prox(g, weight, 500)
    best = objective(u)
    assert all(objective(u + 1e-3 * rng.standard_normal(u.shape)) > best for _ in range(50))


def test_make_denoiser_names():
    assert isinstance(make_denoiser("l1", tau=0.1), SoftThreshold)
    assert isinstance(make_denoiser("total_variation"), TotalVariation)
    with pytest.raises(ValueError):
        make_denoiser("bm3d")


def test_dual_update_cases(rng):
    v, hz, u, z, xi, eta = rng.standard_normal((6, 2, 3, 3))
    same_xi, same_eta = dual_update(xi, eta, hz, hz, z, z, 0.7, 0.3)
    np.testing.assert_array_equal(same_xi, xi)
    np.testing.assert_array_equal(same_eta, eta)
    r_xi, _ = dual_update(np.zeros_like(xi), eta, v, hz, u, z, 1.0, 0.3)
    np.testing.assert_allclose(r_xi, v - hz)
    once_xi, once_eta = dual_update(xi, eta, v, hz, u, z, 0.7, 0.3)
    twice_xi, twice_eta = dual_update(once_xi, once_eta, v, hz, u, z, 0.7, 0.3)
    np.testing.assert_allclose(twice_xi, xi + 2 * 0.7 * (v - hz))
    np.testing.assert_allclose(twice_eta, eta + 2 * 0.3 * (u - z))


def test_initial_coefficients_modes():
    basis = SpectralBasis(np.array([[0.6, 0.8], [0.8, -0.6]]))
    image = initial_coefficients(basis, (2, 3), "image")
    np.testing.assert_allclose(lift_planes(image, basis), 0.5)
    assert np.all(initial_coefficients(basis, (2, 3), "coefficient") == 0.5)


# ---- full iteration ---------------------------------------------------------

def _tiny_problem(rng, c=3, v=2, n=2, h=4, w=4, k=3):
    psfs = random_psfs(rng, n, c, k)
    basis = _random_basis(rng, v, c)
    cube = HyperspectralCube(rng.random((c, h, w)), psfs.wavelengths_nm)
    return apply_forward(cube, psfs), psfs, basis


@pytest.mark.parametrize(
    "denoiser,support",
    [(make_denoiser("identity"), True), (make_denoiser("identity"), False),
     (SoftThreshold(0.05), True), (TotalVariation(0.05, 10), True)],
)
def test_fast_iterates_match_dense_reference(rng, denoiser, support):
    stack, psfs, basis = _tiny_problem(rng)
    mu1, mu2 = 0.6, 0.2
    cfg = SolverConfig(mu1=mu1, mu2=mu2, max_iters=6, step_tolerance=1e-300, divergence_factor=1e300,
                       adaptive_halving=False, support_constraint=support, denoiser=denoiser)
    fast = []
    run_admm(stack, psfs, basis, cfg, callback=lambda s: fast.append(s.z.copy()))
    dense = dense_admm(stack.data, psfs.kernels, basis.rows, mu1, mu2, 6, denoiser, support)
    assert len(fast) == len(dense) == 6
    for a, b in zip(fast, dense):
        assert np.abs(a - b).max() < 1e-7


def test_zero_measurements_with_l1_prior_go_to_zero():
    c = 3
    psfs = random_psfs(np.random.default_rng(4), 2, c, 3)
    stack = FocalStack(np.zeros((2, 6, 6)), [0.0, 1.0])
    cfg = SolverConfig(mu1=1.0, mu2=1.0, max_iters=200, step_tolerance=1e-300, divergence_factor=1e300,
                       adaptive_halving=False, denoiser=SoftThreshold(0.05))
    rec, _ = run_admm(stack, psfs, identity_basis(c, psfs.wavelengths_nm), cfg)
    assert np.abs(rec.data).max() < 1e-6


def _well_posed(seed):
    rng = np.random.default_rng(seed)
    wl = [450.0, 550.0, 650.0]
    cube = HyperspectralCube(rng.random((3, 10, 10)), wl)
    psfs = PsfStack(rng.random((5, 3, 1, 1)) + 0.2, np.arange(5.0), wl)
    return cube, psfs, apply_forward(cube, psfs)


@pytest.mark.parametrize("seed", range(6))
def test_well_posed_instance_converges_within_four_iterations(seed):
    cube, psfs, stack = _well_posed(seed)
    rec, diag = run_admm(stack, psfs, identity_basis(3, psfs.wavelengths_nm), SolverConfig(mu1=0.03, mu2=1e-6))
    assert diag.stop_reason == "converged"
    assert diag.iterations_used <= 4
    assert diag.steps[-1] < 1e-3
    assert np.abs(rec.data - cube.data).max() < 1e-3


def test_primal_residual_decreases_on_noiseless_problem():
    cube, psfs, stack = _well_posed(9)
    cfg = SolverConfig(mu1=1.0, mu2=1e-3, step_tolerance=1e-300, divergence_factor=1e300)
    _, diag = run_admm(stack, psfs, identity_basis(3, psfs.wavelengths_nm), cfg)
    assert diag.iterations_used == 9
    assert diag.primal_residuals[8] < diag.primal_residuals[0]


def test_solver_is_deterministic_across_workers(rng):
    stack, psfs, basis = _tiny_problem(rng, h=12, w=10)
    a, da = run_admm(stack, psfs, basis, SolverConfig(mu1=0.1, mu2=0.1, workers=1))
    b, db = run_admm(stack, psfs, basis, SolverConfig(mu1=0.1, mu2=0.1, workers=4))
    assert a.data.tobytes() == b.data.tobytes()
    assert da.to_csv() == db.to_csv()


def test_output_is_clamped_and_response_divided(rng):
    from chromasweep.types import SpectralResponse

    stack, psfs, basis = _tiny_problem(rng)
    cfg = SolverConfig(mu1=0.1, mu2=0.1)
    plain, _ = run_admm(stack, psfs, basis, cfg)
    resp = SpectralResponse(psfs.wavelengths_nm, [0.5, 1.0, 0.25])
    scaled, _ = run_admm(stack, psfs, basis, cfg, response=resp)
    assert plain.data.min() >= 0.0
    np.testing.assert_allclose(scaled.data, plain.data / np.array([0.5, 1.0, 0.25])[:, None, None])


def test_shape_mismatches_are_rejected(rng):
    stack, psfs, basis = _tiny_problem(rng)
    with pytest.raises(ValueError):
        run_admm(FocalStack(stack.data[:1], [0.0]), psfs, basis)
    with pytest.raises(ValueError):
        run_admm(stack, psfs, _random_basis(rng, 2, 4))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_state_raises_with_diagnostics(rng):
    stack, psfs, basis = _tiny_problem(rng)
    data = stack.data.copy()
    data[0, 0, 0] = 1e308
    with pytest.raises(SolverError) as info:
        run_admm(FocalStack(data, [0.0, 1.0]), psfs, basis,
                 SolverConfig(mu1=1e300, mu2=1e300, step_tolerance=1e-300, divergence_factor=1e300))
    assert isinstance(info.value.diagnostics, Diagnostics)
    assert info.value.diagnostics.stop_reason == "non-finite state"


def test_diagnostics_csv_layout():
    d = Diagnostics()
    d.record(1, 0.5, 0.25, 4)
    d.record(2, 0.125, 0.0625, 4)
    assert d.to_csv() == "iter,step,primal_residual,basis_dim\n1,0.5,0.25,4\n2,0.125,0.0625,4\n"
    assert d.iterations_used == 2


# ---- adaptive halving -------------------------------------------------------

def test_model_mismatch_triggers_one_halving_at_iteration_four():
    stack, psfs, basis = build_mismatch_case()
    cfg = SolverConfig(mu1=5e-3, mu2=5e-3, halving_threshold=0.01)
    rec, diag = run_admm(stack, psfs, basis, cfg)
    assert diag.halving_events == [(4, 16, 8)]
    assert diag.basis_dims[:4] == [16] * 4
    assert set(diag.basis_dims[4:]) == {8}
    assert diag.iterations_used <= 9
    assert rec.channels == 16


def test_no_halving_when_disabled_or_gap_small():
    stack, psfs, basis = build_mismatch_case()
    _, diag = run_admm(stack, psfs, basis, SolverConfig(mu1=5e-3, mu2=5e-3, halving_threshold=0.01,
                                                        adaptive_halving=False))
    assert diag.halving_events == []
    _, diag = run_admm(stack, psfs, basis, SolverConfig(mu1=5e-3, mu2=5e-3, halving_threshold=1e6))
    assert diag.halving_events == []


def test_halving_with_one_vector_is_an_error():
    stack, psfs, basis = build_mismatch_case()
    single = SpectralBasis(basis.rows[:1], basis.wavelengths_nm)
    cfg = SolverConfig(mu1=5e-3, mu2=5e-3, halving_threshold=0.01, divergence_factor=1e300)
    with pytest.raises(SolverError, match="one-dimensional") as info:
        run_admm(stack, psfs, single, cfg)
    assert info.value.diagnostics.iterations_used == 4


# ---- grid search ------------------------------------------------------------

def _peaked(m1, m2):
    return lambda a, b: -((math.log10(a) - math.log10(m1)) ** 2) - (math.log10(b) - math.log10(m2)) ** 2


def test_stage_one_finds_grid_node_peak():
    result = grid_search(_peaked(1e-8, 1e-13))
    stage1 = [e for e in result.log if e[0] == 1]
    assert len(stage1) == 121
    best = max(stage1, key=lambda e: e[3])
    assert best[1] == pytest.approx(1e-8, rel=1e-12) and best[2] == pytest.approx(1e-13, rel=1e-12)
    assert result.mu1 == pytest.approx(1e-8, rel=1e-12) and result.mu2 == pytest.approx(1e-13, rel=1e-12)
    assert len([e for e in result.log if e[0] == 2]) == 81


@pytest.mark.parametrize("pair", [SIMULATION_MU, REAL_DATA_MU])
def test_tuned_pairs_are_within_stage_two_reach(pair):
    result = grid_search(_peaked(*pair))
    winner1 = max((e for e in result.log if e[0] == 1), key=lambda e: e[3])
    for centre, target in zip(winner1[1:3], pair):
        assert centre * 10**-0.5 <= target <= centre * 10**0.5
    # the stage-2 winner is a neighbouring node of the peak, at most one spacing away
    for found, centre, target in zip((result.mu1, result.mu2), winner1[1:3], pair):
        spacing = (10**0.5 - 10**-0.5) * centre / 8
        assert abs(found - target) <= spacing
    assert 1e-15 <= pair[0] <= 1e-5 and 1e-15 <= pair[1] <= 1e-5


def test_stage_three_refines_further():
    target = (1.37e-8, 2.2e-13)
    two = grid_search(_peaked(*target))
    three = grid_search(_peaked(*target), stage3=True)
    assert three.score >= two.score
    assert any(e[0] == 3 for e in three.log)


def test_single_point_range_returns_it():
    result = grid_search(lambda a, b: 1.0, (3e-9, 3e-9), (4e-12, 4e-12))
    assert (result.mu1, result.mu2, result.score) == (3e-9, 4e-12, 1.0)
    assert len(result.log) == 1


def test_ties_prefer_smaller_pair():
    result = grid_search(lambda a, b: 0.0, (1e-3, 1e-1), (1e-3, 1e-1))
    assert (result.mu1, result.mu2) == pytest.approx((1e-3 * 10**-0.5, 1e-3 * 10**-0.5))


def test_all_non_finite_objective_fails():
    with pytest.raises(ValueError, match="non-finite"):
        grid_search(lambda a, b: float("nan"), (1e-3, 1e-1), (1e-3, 1e-1))


def test_grid_log_csv():
    result = grid_search(lambda a, b: -a - b, (1e-2, 1e-2), (1e-3, 1e-2))
    lines = result.to_csv().splitlines()
    assert lines[0] == "stage,mu1,mu2,score"
    assert len(lines) == 1 + len(result.log)
