"""Spectral Galerkin simulation of wave equations driven by transport noise."""

from .dynamics import (DEFAULT_SCHEME, GalerkinState, Integrator, Model, ModelSpec, Scheme,
                       SimulationBlowup, coupled_pair_run, initial_state, run, run_ensemble)
from .noise import NoiseSpec, build_basis, covariance_norms, make_scaling_family, uniform_shell
from .nonlinearity import Nonlinearity
from .rng import BrownianDriver
from .spectral import LatticeSpec, SpectralField

__version__ = "0.1.0"

__all__ = [
    "BrownianDriver", "DEFAULT_SCHEME", "GalerkinState", "Integrator", "LatticeSpec", "Model",
    "ModelSpec", "NoiseSpec", "Nonlinearity", "Scheme", "SimulationBlowup", "SpectralField",
    "build_basis", "coupled_pair_run", "covariance_norms", "initial_state",
    "make_scaling_family", "run", "run_ensemble", "uniform_shell",
]
