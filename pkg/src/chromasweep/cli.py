"""Command-line entry point: ``chromasweep <command> [options]``.

Every command accepts ``--config FILE`` with ``key = value`` lines (``#``
starts a comment); keys are option names with or without the leading dashes.
Flags given on the command line override the file.

Exit codes: 0 success, 1 solver failure, 2 I/O or validation failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as cio
from .basis import compute_basis, energy_capture, read_basis_csv, write_basis_csv
from .forward import BRIGHT_PHOTON_FLUX, ExposureModel, light_efficiency, simulate_measurement
from .metrics import compose_rgb_from_stack, delta_e00, hsi_to_rgb, psnr, sam, ssim
from .optics import (
    LensDispersion,
    OpticalConfig,
    build_psf_stack,
    cauchy_dispersion,
    focal_shift_curve,
    select_lens_positions,
)
from .solver import REAL_DATA_MU, SIMULATION_MU, SolverConfig, SolverError, grid_search, make_denoiser, run_admm
from .synthetic import make_scene
from .types import HyperspectralCube, SpectralResponse, ValidationError, validate

log = logging.getLogger("chromasweep")

EXIT_OK, EXIT_SOLVER, EXIT_IO = 0, 1, 2
METRICS = ("psnr", "ssim", "sam", "de00")


class UsageError(ValueError):
    """Invalid option values or inconsistent inputs."""


# ---------------------------------------------------------------- parsing helpers


def parse_wavelengths(text: str) -> np.ndarray:
    """``start:stop:step`` (inclusive) or a comma-separated list, in nm."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"wavelength range {text!r} must be start:stop:step")
        lo, hi, step = (float(p) for p in parts)
        if step <= 0 or hi < lo:
            raise UsageError(f"wavelength range {text!r} needs step > 0 and stop >= start")
        n = int(np.floor((hi - lo) / step + 1e-9)) + 1
        return lo + step * np.arange(n)
    return parse_floats(text)


def parse_floats(text: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.split(",") if t.strip()])
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def parse_ints(text: str, count: int | None = None) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",")]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None
    if count is not None and len(vals) != count:
        raise UsageError(f"expected {count} integers, got {text!r}")
    return vals


def parse_range(text: str) -> tuple[float, float]:
    parts = text.split(":")
    if len(parts) == 1:
        v = float(parts[0])
        return v, v
    if len(parts) != 2:
        raise UsageError(f"range {text!r} must be lo:hi or a single value")
    return float(parts[0]), float(parts[1])


def read_config_file(path) -> dict[str, str]:
    entries = {}
    path = Path(path)
    for n, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        entries[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return entries


def _apply_config(sub: argparse.ArgumentParser, entries: dict[str, str]) -> None:
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in entries.items():
        action = actions.get(key)
        if action is None or key in ("help", "config"):
            raise UsageError(f"unknown config key {key!r} for this command")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            flag = value.lower() in ("1", "true", "yes", "on")
            if not flag and value.lower() not in ("0", "false", "no", "off"):
                raise UsageError(f"config key {key!r} expects a boolean, got {value!r}")
            defaults[key] = flag if isinstance(action, argparse._StoreTrueAction) else not flag
        else:
            # argparse runs ``type`` on string defaults
            defaults[key] = value
    sub.set_defaults(**defaults)


def read_response_csv(path) -> SpectralResponse:
    """Two columns ``wavelength_nm,response`` with a header line."""
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise UsageError(f"{path}: malformed response CSV ({exc})") from None
    if data.shape[1] != 2:
        raise UsageError(f"{path}: expected two columns")
    resp = SpectralResponse(data[:, 0], data[:, 1])
    validate(resp, raise_on_error=True)
    return resp


def _write_text(path, text: str) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True)
    path.write_text(text)


def _figures():
    # imported lazily so that commands without --figures never load matplotlib
    from . import plotting

    return plotting


# ---------------------------------------------------------------- commands


def cmd_make_scene(args) -> int:
    wl = parse_wavelengths(args.wavelengths)
    cube = make_scene(args.height, args.width, wl, seed=args.seed, materials=args.materials)
    cio.write_cube(args.out, cube, {"generator": "make_scene", "seed": str(args.seed), "materials": str(args.materials)})
    print(f"wrote {args.out}: H={cube.height} W={cube.width} C={cube.channels}")
    return EXIT_OK


def _optical_config(args) -> OpticalConfig:
    lens1 = LensDispersion.from_csv(args.lens1) if args.lens1 else cauchy_dispersion(args.focal_length)
    lens2 = LensDispersion.from_csv(args.lens2) if args.lens2 else cauchy_dispersion(args.focal_length)
    return OpticalConfig(
        lens1=lens1,
        lens2=lens2,
        separation_mm=args.separation,
        aperture_number=args.aperture,
        pixel_pitch_um=args.pixel_pitch,
        scene_distance_m=args.scene_distance,
        reference_wavelength_nm=args.reference_wavelength,
        max_kernel_size=args.max_kernel_size,
    )


def cmd_make_psfs(args) -> int:
    wl = parse_wavelengths(args.wavelengths)
    config = _optical_config(args)
    shift = focal_shift_curve(config, wl)
    if args.positions:
        positions = parse_floats(args.positions)
    else:
        positions = select_lens_positions(shift, args.n)
    psfs = build_psf_stack(config, positions, wl)
    cio.write_psfs(args.out, psfs)
    print(f"focal shift range: {shift.min():.6f} .. {shift.max():.6f} mm over {wl.size} bands")
    print("lens positions (mm): " + ", ".join(f"{p:.6f}" for p in positions))
    print(f"wrote {args.out}: N={psfs.count} C={psfs.channels} K={psfs.kernel_size}")
    if args.figures:
        plotting = _figures()
        fig_dir = Path(args.figures)
        plotting.plot_focal_shift(wl, shift, positions, fig_dir / "focal_shift.png")
        plotting.plot_psf_grid(psfs, fig_dir / "psf_grid.png")
    return EXIT_OK


def cmd_make_basis(args) -> int:
    cubes = [cio.read_cube(p)[0] for p in args.training]
    basis = compute_basis(cubes, args.v)
    write_basis_csv(basis, args.out)
    print(f"wrote {args.out}: v={basis.dim} C={basis.channels} energy={energy_capture(cubes, basis):.6f}")
    return EXIT_OK


def _check_same_axis(a, b, what: str) -> None:
    if a.shape != b.shape or not np.allclose(a, b, rtol=0, atol=1e-6):
        raise UsageError(f"{what} differ between inputs")


def cmd_simulate(args) -> int:
    cube, _ = cio.read_cube(args.scene)
    psfs = cio.read_psfs(args.psfs)
    if cube.channels != psfs.channels:
        raise UsageError(f"shape mismatch: scene has {cube.channels} bands, PSFs have {psfs.channels}")
    _check_same_axis(cube.wavelengths_nm, psfs.wavelengths_nm, "wavelengths")
    effs = parse_floats(args.efficiencies)
    per_exposure, product = light_efficiency(effs, psfs.count)
    exposure = ExposureModel(
        photon_flux=args.photon_flux,
        total_exposure_s=args.exposure,
        pixel_area_m2=args.pixel_area,
        light_efficiency=per_exposure,
        seed=args.seed,
    )
    response = read_response_csv(args.response) if args.response else None
    stack = simulate_measurement(cube, psfs, exposure, response=response, noise=not args.no_noise, workers=args.threads)
    meta = dict(stack.metadata)
    meta.update(
        {
            "scene": Path(args.scene).name,
            "psfs": Path(args.psfs).name,
            "efficiencies": ",".join(repr(float(e)) for e in effs),
            "efficiency_product": repr(product),
            "response": Path(args.response).name if args.response else "flat",
        }
    )
    out = type(stack)(stack.data, stack.lens_positions_mm, meta)
    cio.write_stack(args.out, out)
    print(f"wrote {args.out}: H={out.height} W={out.width} N={out.count} light_efficiency={per_exposure:.6f}")
    return EXIT_OK


def _solver_config(args, mu1: float | None = None, mu2: float | None = None) -> SolverConfig:
    preset = REAL_DATA_MU if args.preset == "real" else SIMULATION_MU
    return SolverConfig(
        mu1=mu1 if mu1 is not None else (args.mu1 if args.mu1 is not None else preset[0]),
        mu2=mu2 if mu2 is not None else (args.mu2 if args.mu2 is not None else preset[1]),
        max_iters=args.max_iters,
        step_tolerance=args.step_tolerance,
        divergence_factor=args.divergence_factor,
        halving_check_iter=args.halving_check_iter,
        halving_threshold=args.halving_threshold,
        adaptive_halving=not args.no_halving,
        init=args.init,
        support_constraint=not args.no_support,
        denoiser=make_denoiser(args.denoiser, args.tau, args.tv_weight, args.tv_iters),
        workers=args.threads,
    )


def _load_problem(args):
    stack = cio.read_stack(args.stack)
    psfs = cio.read_psfs(args.psfs)
    basis = read_basis_csv(args.basis)
    if stack.count != psfs.count:
        raise UsageError(f"shape mismatch: {stack.count} measurements but {psfs.count} PSF rows")
    if basis.channels != psfs.channels:
        raise UsageError(f"shape mismatch: basis has {basis.channels} channels, PSFs {psfs.channels}")
    return stack, psfs, basis


def cmd_reconstruct(args) -> int:
    stack, psfs, basis = _load_problem(args)
    config = _solver_config(args)
    response = read_response_csv(args.response) if args.response else None
    diag_path = Path(args.diagnostics) if args.diagnostics else Path(args.out).with_suffix(".diag.csv")
    try:
        cube, diag = run_admm(stack, psfs, basis, config, response=response)
    except SolverError as exc:
        if exc.diagnostics is not None:
            _write_text(diag_path, exc.diagnostics.to_csv())
        print(f"error: {exc} (diagnostics: {diag_path})", file=sys.stderr)
        return EXIT_SOLVER
    meta = {
        "stack": Path(args.stack).name,
        "mu1": repr(config.mu1),
        "mu2": repr(config.mu2),
        "denoiser": args.denoiser,
        "iterations": str(diag.iterations_used),
        "stop_reason": diag.stop_reason,
        "basis_dim": str(diag.basis_dims[-1]),
    }
    cio.write_cube(args.out, cube, meta)
    _write_text(diag_path, diag.to_csv())
    for it, old, new in diag.halving_events:
        print(f"basis halved at iteration {it}: {old} -> {new}")
    print(f"iterations={diag.iterations_used} final_step={diag.steps[-1]:.6g} stop={diag.stop_reason}")
    print(f"wrote {args.out} and {diag_path}")
    if args.figures:
        _figures().plot_convergence(diag, Path(args.figures) / "convergence.png")
    return EXIT_OK


def cmd_tune(args) -> int:
    stack, psfs, basis = _load_problem(args)
    truth, _ = cio.read_cube(args.truth)
    if (truth.height, truth.width, truth.channels) != (stack.height, stack.width, psfs.channels):
        raise UsageError(
            f"shape mismatch: truth is {truth.height}x{truth.width}x{truth.channels}, "
            f"stack implies {stack.height}x{stack.width}x{psfs.channels}"
        )
    base = _solver_config(args, mu1=1.0, mu2=1.0)

    def objective(mu1, mu2):
        try:
            cube, _ = run_admm(stack, psfs, basis, SolverConfig(**{**base.__dict__, "mu1": mu1, "mu2": mu2}))
        except SolverError:
            return float("nan")
        return psnr(cube.data, truth.data)

    result = grid_search(objective, parse_range(args.mu1_range), parse_range(args.mu2_range), stage3=args.stage3)
    log_path = Path(args.log) if args.log else Path(args.stack).with_suffix(".tune.csv")
    _write_text(log_path, result.to_csv())
    print(f"best mu1={result.mu1!r} mu2={result.mu2!r} psnr={result.score:.4f} dB ({len(result.log)} evaluations)")
    print(f"wrote {log_path}")
    if args.figures:
        _figures().plot_grid_log(result, Path(args.figures) / "grid_search.png")
    return EXIT_OK


def compute_metrics(recon: HyperspectralCube, truth: HyperspectralCube, names) -> dict[str, float]:
    out = {}
    for name in names:
        if name == "psnr":
            out[name] = psnr(recon.data, truth.data)
        elif name == "ssim":
            out[name] = ssim(recon.data, truth.data)
        elif name == "sam":
            out[name] = sam(recon.data, truth.data)
        elif name == "de00":
            out[name] = delta_e00(hsi_to_rgb(recon), hsi_to_rgb(truth))
    return out


def cmd_evaluate(args) -> int:
    recon, _ = cio.read_cube(args.recon)
    truth, _ = cio.read_cube(args.truth)
    if recon.data.shape != truth.data.shape:
        raise UsageError(f"shape mismatch: {recon.data.shape} vs {truth.data.shape}")
    names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = sorted(set(names) - set(METRICS))
    if unknown:
        raise UsageError(f"unknown metric(s) {', '.join(unknown)}; choose from {', '.join(METRICS)}")
    values = compute_metrics(recon, truth, names)
    lines = ["metric,value"] + [f"{k},{v!r}" for k, v in values.items()]
    if args.compose_rgb:
        if not args.stack:
            raise UsageError("--compose-rgb needs --stack")
        stack = cio.read_stack(args.stack)
        patch = parse_ints(args.white_patch, 4) if args.white_patch else None
        composed = compose_rgb_from_stack(stack, parse_ints(args.compose_rgb, 3), patch)
        de = delta_e00(np.clip(composed, 0, 1), hsi_to_rgb(truth))
        lines.append(f"de00_composed,{de!r}")
        if args.rgb:
            cio.write_ppm(f"{args.rgb}_composed.ppm", np.clip(composed, 0, 1))
    text = "\n".join(lines) + "\n"
    if args.out:
        _write_text(args.out, text)
    sys.stdout.write(text)
    if args.rgb or args.figures:
        rgb_recon, rgb_truth = hsi_to_rgb(recon), hsi_to_rgb(truth)
        if args.rgb:
            cio.write_ppm(f"{args.rgb}_recon.ppm", rgb_recon)
            cio.write_ppm(f"{args.rgb}_truth.ppm", rgb_truth)
        if args.figures:
            plotting = _figures()
            fig_dir = Path(args.figures)
            plotting.plot_rgb_pair(rgb_recon, rgb_truth, fig_dir / "rgb_comparison.png")
            plotting.plot_band_psnr(recon.data, truth.data, truth.wavelengths_nm, fig_dir / "band_psnr.png")
            h, w = truth.height, truth.width
            pixels = [(h // 4, w // 4), (h // 2, w // 2), (3 * h // 4, 3 * w // 4)]
            plotting.plot_spectra(recon.data, truth.data, truth.wavelengths_nm, pixels, fig_dir / "spectra.png")
    return EXIT_OK


def _fmt_axis(values) -> str:
    return ", ".join(f"{v:g}" for v in values)


def cmd_info(args) -> int:
    obj = cio.read_any(args.file)
    if isinstance(obj, cio.ImageFile):
        h, w, planes = obj.dims
        label = "C" if obj.magic == "HSC1" else "N"
        axis = "wavelengths_nm" if label == "C" else "lens_positions_mm"
        print(f"{obj.magic} H={h} W={w} {label}={planes}")
        print(f"{axis}: {_fmt_axis(obj.axis_values)}")
        for k, v in obj.metadata.items():
            print(f"  {k}={v}")
    else:
        print(f"PSF1 N={obj.count} C={obj.channels} K={obj.kernel_size}")
        print(f"lens_positions_mm: {_fmt_axis(obj.lens_positions_mm)}")
        print(f"wavelengths_nm: {_fmt_axis(obj.wavelengths_nm)}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_solver_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--preset", choices=("simulation", "real"), default="simulation",
                   help="default (mu1, mu2) pair when --mu1/--mu2 are not given")
    g.add_argument("--mu1", type=float)
    g.add_argument("--mu2", type=float)
    g.add_argument("--max-iters", type=int, default=9)
    g.add_argument("--step-tolerance", type=float, default=1e-3)
    g.add_argument("--divergence-factor", type=float, default=1.0)
    g.add_argument("--halving-check-iter", type=int, default=4)
    g.add_argument("--halving-threshold", type=float, default=0.5)
    g.add_argument("--no-halving", action="store_true", help="disable adaptive basis halving")
    g.add_argument("--init", choices=("image", "coefficient"), default="image")
    g.add_argument("--no-support", action="store_true", help="do not zero the prior slack on the padding")
    g.add_argument("--denoiser", choices=("identity", "l1", "tv"), default="identity")
    g.add_argument("--tau", type=float, default=0.01, help="soft-threshold level for --denoiser l1")
    g.add_argument("--tv-weight", type=float, default=0.01)
    g.add_argument("--tv-iters", type=int, default=50)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; command-line flags take precedence")
    common.add_argument("--threads", type=int, default=1, help="FFT worker threads (output does not depend on it)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="chromasweep", description="Chromatic focal-sweep hyperspectral imaging.")
    subs = parser.add_subparsers(dest="command", required=True)
    table = {}

    def add(name, func, help_text):
        p = subs.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func)
        table[name] = p
        return p

    p = add("make-scene", cmd_make_scene, "write a synthetic hyperspectral cube")
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--wavelengths", default="440:720:10")
    p.add_argument("--materials", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("make-psfs", cmd_make_psfs, "synthesize a PSF stack from lens dispersion")
    p.add_argument("--lens1", help="dispersion CSV (wavelength_nm,focal_length_mm); default: 50 mm crown singlet")
    p.add_argument("--lens2", help="dispersion CSV for the second lens")
    p.add_argument("--focal-length", type=float, default=50.0, help="focal length of the built-in singlets (mm)")
    p.add_argument("--separation", type=float, default=0.0, help="lens separation (mm)")
    p.add_argument("--aperture", type=float, default=4.0, help="aperture number")
    p.add_argument("--pixel-pitch", type=float, default=5.86, help="pixel pitch (um)")
    p.add_argument("--scene-distance", type=float, default=2.8, help="scene distance (m)")
    p.add_argument("--reference-wavelength", type=float, default=550.0)
    p.add_argument("--max-kernel-size", type=int, default=63)
    p.add_argument("--wavelengths", default="440:720:10")
    p.add_argument("--n", type=int, default=5, help="number of evenly spaced lens positions")
    p.add_argument("--positions", help="explicit comma-separated lens positions (mm); overrides --n")
    p.add_argument("--out", required=True)
    p.add_argument("--figures", help="directory for focal-shift and PSF figures")

    p = add("make-basis", cmd_make_basis, "fit a spectral basis to training cubes")
    p.add_argument("--training", nargs="+", required=True)
    p.add_argument("--v", type=int, default=8)
    p.add_argument("--out", required=True)

    p = add("simulate", cmd_simulate, "render a noisy focal stack from a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--psfs", required=True)
    p.add_argument("--photon-flux", type=float, default=BRIGHT_PHOTON_FLUX, help="photons / (m^2 s)")
    p.add_argument("--exposure", type=float, default=5.0, help="total exposure over all measurements (s)")
    p.add_argument("--pixel-area", type=float, default=(5.86e-6) ** 2, help="m^2")
    p.add_argument("--efficiencies", default="0.99,0.99", help="per-component transmission coefficients")
    p.add_argument("--response", help="sensor response CSV (wavelength_nm,response)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-noise", action="store_true")
    p.add_argument("--out", required=True)

    p = add("reconstruct", cmd_reconstruct, "recover a cube from a focal stack")
    p.add_argument("--stack", required=True)
    p.add_argument("--psfs", required=True)
    p.add_argument("--basis", required=True)
    p.add_argument("--response")
    p.add_argument("--out", required=True)
    p.add_argument("--diagnostics", help="per-iteration CSV (default: <out>.diag.csv)")
    p.add_argument("--figures", help="directory for the convergence plot")
    _add_solver_options(p)

    p = add("tune", cmd_tune, "grid-search (mu1, mu2) against a ground-truth cube")
    p.add_argument("--stack", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--psfs", required=True)
    p.add_argument("--basis", required=True)
    p.add_argument("--mu1-range", default="1e-15:1e-5")
    p.add_argument("--mu2-range", default="1e-15:1e-5")
    p.add_argument("--stage3", action="store_true")
    p.add_argument("--log", help="grid log CSV (default: <stack>.tune.csv)")
    p.add_argument("--figures", help="directory for the grid-search heat map")
    _add_solver_options(p)

    p = add("evaluate", cmd_evaluate, "compare a reconstruction with ground truth")
    p.add_argument("--recon", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--metrics", default="psnr,ssim,sam,de00")
    p.add_argument("--out", help="metrics CSV")
    p.add_argument("--rgb", help="prefix for P6 PPM renderings")
    p.add_argument("--compose-rgb", help="three measurement indices stacked as R,G,B")
    p.add_argument("--stack", help="focal stack used by --compose-rgb")
    p.add_argument("--white-patch", help="r0,r1,c0,c1 region used to white-balance --compose-rgb")
    p.add_argument("--figures", help="directory for RGB, per-band PSNR and spectra figures")

    p = add("info", cmd_info, "print the header of a cube, stack or PSF file")
    p.add_argument("file")
    return parser, table


def main(argv=None) -> int:
    parser, table = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
        if args.config:
            _apply_config(table[args.command], read_config_file(args.config))
            args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return args.func(args)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValidationError as exc:
        print("error: invalid input:\n  " + "\n  ".join(exc.violations), file=sys.stderr)
        return EXIT_IO
    except (OSError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
