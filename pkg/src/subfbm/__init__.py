"""Strong approximation of sub-fractional Brownian motion by transport processes."""

from ._backend import BACKEND
from .approximants import ApproximantEvaluator, exact_covariance
from .errors import DomainError, ParameterError, SingularityError, VerificationError
from .kernels import KernelSpec, ModelParams, PowerKernel, eval_kernel, schedules, validate_kernel_bounds
from .oracles import calibrate_C, calibration_report, cholesky_sample
from .paths import DriverSet, PiecewisePath, generate_transport, make_drivers, sample_grid_bm
from .stieltjes import integrate_by_parts, integrate_dZ, z3_tail_term

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ApproximantEvaluator",
    "DomainError",
    "DriverSet",
    "KernelSpec",
    "ModelParams",
    "ParameterError",
    "PiecewisePath",
    "PowerKernel",
    "SingularityError",
    "VerificationError",
    "calibrate_C",
    "calibration_report",
    "cholesky_sample",
    "eval_kernel",
    "exact_covariance",
    "generate_transport",
    "integrate_by_parts",
    "integrate_dZ",
    "make_drivers",
    "sample_grid_bm",
    "schedules",
    "validate_kernel_bounds",
    "z3_tail_term",
]
