"""Data-conforming LQR toolkit.

Identify a linear model from trajectory data, synthesize LQR controllers
through convex SDP formulations (standard, certainty-equivalence, and
data-conforming variants), and validate the designs with seeded Monte Carlo
closed-loop campaigns.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataConformError,
    DegenerateDataError,
    IllConditionedError,
    InstabilityError,
    NotPsdError,
    NumericalError,
    PeViolationError,
)
from .lqr_core import LqrWeights, solve_riccati
from .sysid import TrajectoryData, LinearModel, EmpiricalMoments, check_pe, empirical_moments, least_squares_id

__all__ = [
    "ConfigError",
    "DataConformError",
    "DegenerateDataError",
    "EmpiricalMoments",
    "IllConditionedError",
    "InstabilityError",
    "LinearModel",
    "LqrWeights",
    "NotPsdError",
    "NumericalError",
    "PeViolationError",
    "TrajectoryData",
    "check_pe",
    "empirical_moments",
    "least_squares_id",
    "solve_riccati",
]
