"""Right-hand sides Phi(t, u) for the flow du/dt = Phi(t, u).

Each constructor returns a :class:`PhiField`. Rate constants ``(c1, c2)`` are
attached only when sampled constants are supplied (see
:func:`dsm.audit.estimate_constants`); fields never estimate them on their own.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import LinAlgWarning, lapack, lu_factor, lu_solve

from .core import Constants, ProblemSpec, as_state, vector_norm
from .errors import DegenerateDescentDirection, SingularJacobian, SingularNormalEquations

CONDITION_LIMIT = 1e12


class FieldKind(enum.Enum):
    NEWTON = "newton"
    SIMPLE_ITERATION = "simple-iteration"
    GRADIENT = "gradient"
    GAUSS_NEWTON = "gauss-newton"
    MODIFIED_NEWTON = "modified-newton"
    DESCENT = "descent"
    CUSTOM = "custom"


@dataclass(frozen=True)
class DerivedRates:
    c1: float
    c2: float
    b: float = 1.0


@dataclass(frozen=True)
class PhiField:
    evaluate: Callable[[float, np.ndarray], np.ndarray]
    kind: FieldKind
    derived_rates: Optional[DerivedRates] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __call__(self, t, u) -> np.ndarray:
        return self.evaluate(t, u)


def derived_rates(kind: FieldKind, constants: Constants) -> DerivedRates:
    """Constant rates (c1, c2) implied by the hypotheses for each classical flow."""
    c = constants
    if kind is FieldKind.NEWTON:
        return DerivedRates(1.0, c.m1)
    if kind is FieldKind.SIMPLE_ITERATION:
        return DerivedRates(c.mu, 1.0)
    if kind is FieldKind.GRADIENT:
        return DerivedRates(c.m1**-2, c.M1)
    if kind is FieldKind.GAUSS_NEWTON:
        return DerivedRates(1.0, c.m1**2 * c.M1)
    if kind is FieldKind.MODIFIED_NEWTON:
        return DerivedRates(0.5, c.m0)
    if kind is FieldKind.DESCENT:
        return DerivedRates(0.5, c.m1 / 2.0)
    raise ValueError(f"no derived rates for {kind}")


def factorize(matrix, u, error=SingularJacobian):
    """LU factors of ``matrix``; raises ``error`` if the 1-norm condition estimate exceeds 1e12."""
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    if not np.all(np.isfinite(m)):
        raise error(u, math.inf)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)  # singularity is judged below
        lu, piv = lu_factor(m, check_finite=False)
    anorm = np.linalg.norm(m, 1)
    rcond, info = lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or anorm == 0.0 or rcond * CONDITION_LIMIT < 1.0:
        cond = math.inf if rcond == 0.0 else 1.0 / rcond
        raise error(u, cond)
    return lu, piv


def _rates(kind, constants):
    return None if constants is None else derived_rates(kind, constants)


def newton_field(problem: ProblemSpec, constants: Optional[Constants] = None) -> PhiField:
    def evaluate(t, u):
        return -lu_solve(factorize(problem.jacobian(u), u), problem.F(u), check_finite=False)

    return PhiField(evaluate, FieldKind.NEWTON, _rates(FieldKind.NEWTON, constants))


def simple_iteration_field(problem: ProblemSpec, constants: Optional[Constants] = None) -> PhiField:
    def evaluate(t, u):
        return -problem.F(u)

    return PhiField(evaluate, FieldKind.SIMPLE_ITERATION,
                    _rates(FieldKind.SIMPLE_ITERATION, constants))


def gradient_field(problem: ProblemSpec, constants: Optional[Constants] = None) -> PhiField:
    def evaluate(t, u):
        return -problem.jacobian(u).T @ problem.F(u)

    return PhiField(evaluate, FieldKind.GRADIENT, _rates(FieldKind.GRADIENT, constants))


def gauss_newton_field(problem: ProblemSpec, constants: Optional[Constants] = None) -> PhiField:
    def evaluate(t, u):
        jac = problem.jacobian(u)
        factors = factorize(jac.T @ jac, u, error=SingularNormalEquations)
        return -lu_solve(factors, jac.T @ problem.F(u), check_finite=False)

    return PhiField(evaluate, FieldKind.GAUSS_NEWTON, _rates(FieldKind.GAUSS_NEWTON, constants))


def modified_newton_field(problem: ProblemSpec, u0, constants: Optional[Constants] = None) -> PhiField:
    """Newton flow with the Jacobian frozen (and factored once) at ``u0``."""
    u0 = as_state(u0, problem.dim)
    factors = factorize(problem.jacobian(u0), u0)

    def evaluate(t, u):
        return -lu_solve(factors, problem.F(u), check_finite=False)

    return PhiField(evaluate, FieldKind.MODIFIED_NEWTON,
                    _rates(FieldKind.MODIFIED_NEWTON, constants))


def prescribed_modified_newton_radius(M2: float, m0: float) -> float:
    """Radius ``1/(2 M2 m0)`` on which the frozen-Jacobian flow has c1 = 1/2."""
    prod = 2.0 * M2 * m0
    return math.inf if prod == 0.0 else 1.0 / prod


def descent_field(functional_f, gradient_f, direction_h, b: Optional[float] = None) -> PhiField:
    """``Phi = -f(u) / (f'(u), h(u)) * h(u)``, so that f decays like ``exp(-t)``.

    No rates are derived for arbitrary directions; ``b`` is stored as metadata.
    """

    def evaluate(t, u):
        fval = float(functional_f(u))
        h = np.asarray(direction_h(u), dtype=float)
        if fval == 0.0:
            return np.zeros_like(h)
        g = np.asarray(gradient_f(u), dtype=float)
        denom = float(g @ h)
        if abs(denom) < 1e-30 * (1.0 + vector_norm(g) * vector_norm(h)):
            raise DegenerateDescentDirection(f"(f'(u), h(u)) = {denom!r} is degenerate")
        return -(fval / denom) * h

    return PhiField(evaluate, FieldKind.CUSTOM, meta={"b": b})


def least_squares_descent_field(problem: ProblemSpec, constants: Optional[Constants] = None) -> PhiField:
    """Descent flow for ``f = |F|^2`` along ``h = f' = 2 J^T F``."""

    def evaluate(t, u):
        fu = problem.F(u)
        fval = float(fu @ fu)
        if fval == 0.0:
            return np.zeros(problem.dim)
        g = 2.0 * (problem.jacobian(u).T @ fu)
        gg = float(g @ g)
        if gg < 1e-30 * (1.0 + gg):
            raise DegenerateDescentDirection(f"|f'(u)|^2 = {gg!r} is degenerate")
        return -(fval / gg) * g

    return PhiField(evaluate, FieldKind.DESCENT, _rates(FieldKind.DESCENT, constants))


def contact_norm(x: float, width: float) -> float:
    """``x`` for ``x >= width``; below it ``width * (z + (1 - z)**5 / 2)`` with ``z = x / width``.

    The blend matches ``x`` to four derivatives at ``width`` and stays at least
    ``0.36 * width``, so step-size control sees no kink.
    """
    if x >= width:
        return x
    z = x / width
    return width * (z + 0.5 * (1.0 - z) ** 5)


def scaled_newton_field(problem: ProblemSpec, a: float, g1: Callable[[float], float] = lambda t: 1.0,
                        contact_width: float = 1e-4) -> PhiField:
    """Newton direction rescaled so that ``(F' Phi, F) = -g1(t) |F|^a``.

    For ``a < 2`` the factor ``|F|^(a-2)`` blows up at the root, so below
    ``contact_width`` the norm is replaced by a smooth positive blend (see
    :func:`contact_norm`). The identity holds whenever ``|F| >= contact_width``
    and the field stays Lipschitz.
    """

    def evaluate(t, u):
        fu = problem.F(u)
        norm = vector_norm(fu)
        if a < 2.0:
            norm = contact_norm(norm, contact_width)
        elif norm == 0.0:
            return np.zeros(problem.dim)
        step = lu_solve(factorize(problem.jacobian(u), u), fu, check_finite=False)
        return -float(g1(t)) * norm ** (a - 2.0) * step

    return PhiField(evaluate, FieldKind.CUSTOM, meta={"a": a, "contact_width": contact_width})


def custom_field(fn: Callable[[float, np.ndarray], np.ndarray],
                 rates: Optional[DerivedRates] = None) -> PhiField:
    return PhiField(lambda t, u: np.asarray(fn(t, u), dtype=float), FieldKind.CUSTOM, rates)


_CONSTRUCTORS = {
    FieldKind.NEWTON: newton_field,
    FieldKind.SIMPLE_ITERATION: simple_iteration_field,
    FieldKind.GRADIENT: gradient_field,
    FieldKind.GAUSS_NEWTON: gauss_newton_field,
    FieldKind.DESCENT: least_squares_descent_field,
}


def build_field(kind: FieldKind, problem: ProblemSpec, u0=None,
                constants: Optional[Constants] = None) -> PhiField:
    """Construct one of the six classical flows by kind."""
    if kind is FieldKind.MODIFIED_NEWTON:
        if u0 is None:
            raise ValueError("modified Newton flow needs the base point u0")
        return modified_newton_field(problem, u0, constants)
    try:
        return _CONSTRUCTORS[kind](problem, constants)
    except KeyError:
        raise ValueError(f"no constructor for field kind {kind}") from None
