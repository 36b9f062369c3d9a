"""Hyperspectral reconstruction from chromatic focal-sweep measurements.

The pipeline is: synthesize or load PSFs (:mod:`optics`), simulate a focal
stack (:mod:`forward`), fit a spectral basis (:mod:`basis`), reconstruct with
plug-and-play ADMM (:mod:`solver`) and score the result (:mod:`metrics`).
"""
from .basis import CoefficientField, compute_basis, lift, project
from .forward import CropSpec, ExposureModel, apply_adjoint, apply_forward, simulate_measurement
from .optics import OpticalConfig, build_psf_stack, focal_shift_curve, select_lens_positions
from .solver import SolverConfig, SolverError, grid_search, run_admm
from .types import (
    FocalStack,
    HyperspectralCube,
    PsfStack,
    SpectralBasis,
    SpectralResponse,
    ValidationError,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "CoefficientField",
    "CropSpec",
    "ExposureModel",
    "FocalStack",
    "HyperspectralCube",
    "OpticalConfig",
    "PsfStack",
    "SolverConfig",
    "SolverError",
    "SpectralBasis",
    "SpectralResponse",
    "ValidationError",
    "apply_adjoint",
    "apply_forward",
    "build_psf_stack",
    "compute_basis",
    "focal_shift_curve",
    "grid_search",
    "lift",
    "project",
    "run_admm",
    "select_lens_positions",
    "simulate_measurement",
    "validate",
]
