"""Solve F(u) = 0 by integrating u' = Phi(t, u), with certificates and envelope audits."""

from .core import (Ball, Certificate, Check, Constants, ExitReason, ProblemSpec, RateFunctions,
                   Trajectory, finite_difference_jacobian, vector_norm)
from .errors import DSMError
from .fields import FieldKind, PhiField, build_field
from .integrate import IntegrationConfig, solve_ivp, solve_to_finite_horizon

__all__ = [
    "Ball", "Certificate", "Check", "Constants", "DSMError", "ExitReason", "FieldKind",
    "IntegrationConfig", "PhiField", "ProblemSpec", "RateFunctions", "Trajectory",
    "build_field", "finite_difference_jacobian", "solve_ivp", "solve_to_finite_horizon",
    "vector_norm",
]
__version__ = "0.1.0"
