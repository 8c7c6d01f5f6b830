"""Closed-form KL-unbalanced optimal transport between Gaussian measures."""

__version__ = "0.1.0"

from .certificate import CertificateReport, build_potentials, certify, dual_value, slack
from .closed_form import ClosedFormSolution, primal_objective, solve, solve_1d
from .errors import (
    CertificateError,
    ConvergenceError,
    DefinitenessError,
    DimensionError,
    GaussUOTError,
    NumericalError,
    ProblemFileError,
    QuadratureError,
)
from .gaussian import GaussianMeasure, UotProblem, gaussian_kl, w2_sq_gaussian

__all__ = [
    "CertificateError",
    "CertificateReport",
    "ClosedFormSolution",
    "ConvergenceError",
    "DefinitenessError",
    "DimensionError",
    "GaussUOTError",
    "GaussianMeasure",
    "NumericalError",
    "ProblemFileError",
    "QuadratureError",
    "UotProblem",
    "build_potentials",
    "certify",
    "dual_value",
    "gaussian_kl",
    "primal_objective",
    "slack",
    "solve",
    "solve_1d",
    "w2_sq_gaussian",
]
