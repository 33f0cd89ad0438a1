"""Wavelet-Galerkin information-projection estimation of Poisson intensities
observed through a positive definite integral operator."""

from importlib.resources import files

from .errors import (
    ConfigError,
    DiagonalSingularity,
    ExponentOverflow,
    IllPosedDiscretization,
    InfeasibleTarget,
    InvalidIntensity,
    SingularHessian,
    SolverError,
    UnfoldError,
)
from .estimator import EstimatorConfig, ExpFamilyModel, estimate, estimate_linear, estimate_nonlinear, information_projection
from .metrics import kl_divergence, l2_error, lemma_suite, rate_regression, theory_diagnostics
from .operators import KernelSpec, build_stiffness_matrix, wavelet_galerkin_matrix
from .simulate import CountData, IntensitySpec, fold_intensity, simulate_counts
from .wavelets import HAAR, SYM6, SampledFunction, WaveletCoefficients, fwt, get_filter, iwt

__all__ = [
    "ConfigError",
    "DiagonalSingularity",
    "ExponentOverflow",
    "IllPosedDiscretization",
    "InfeasibleTarget",
    "InvalidIntensity",
    "SingularHessian",
    "SolverError",
    "UnfoldError",
    "EstimatorConfig",
    "ExpFamilyModel",
    "estimate",
    "estimate_linear",
    "estimate_nonlinear",
    "information_projection",
    "kl_divergence",
    "l2_error",
    "lemma_suite",
    "rate_regression",
    "theory_diagnostics",
    "KernelSpec",
    "build_stiffness_matrix",
    "wavelet_galerkin_matrix",
    "CountData",
    "IntensitySpec",
    "fold_intensity",
    "simulate_counts",
    "HAAR",
    "SYM6",
    "SampledFunction",
    "WaveletCoefficients",
    "fwt",
    "get_filter",
    "iwt",
    "config_path",
]


def config_path(name: str):
    """Path of a shipped config (``peak``, ``fred``, ``peak_desk``, ``fred_desk``, ``smooth_rate``)."""
    return files(__name__) / "configs" / f"{name}.json"
