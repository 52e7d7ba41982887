"""Shared domain types: problems, trust balls, rate functions, trajectories, certificates.

States are plain 1-D float ``numpy`` arrays and matrices are 2-D arrays; the
Hilbert space of the theory is realised as R^n with the Euclidean inner product.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import quadrature
from .errors import StencilFailure

NORM_GUARD = 1e-30


def as_state(u, dim: Optional[int] = None) -> np.ndarray:
    """Validate and copy ``u`` into a finite 1-D float array."""
    arr = np.array(u, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ValueError("state must have at least one entry")
    if dim is not None and arr.size != dim:
        raise ValueError(f"state has {arr.size} entries, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("state entries must be finite")
    return arr


def vector_norm(u) -> float:
    return float(np.linalg.norm(np.asarray(u, dtype=float).reshape(-1)))


def operator_norm(m) -> float:
    """Spectral norm (largest singular value)."""
    return float(np.linalg.norm(np.atleast_2d(np.asarray(m, dtype=float)), 2))


def relative_deviation(actual, reference) -> float:
    diff = np.linalg.norm(np.asarray(actual, dtype=float) - np.asarray(reference, dtype=float))
    return float(diff / max(np.linalg.norm(reference), NORM_GUARD))


@dataclass(frozen=True)
class ProblemSpec:
    """A square nonlinear system F(u) = 0 on R^dim.

    ``fd_step`` is relative: coordinate steps are ``fd_step * (1 + |u|)``.
    """

    name: str
    dim: int
    eval_F: Callable[[np.ndarray], np.ndarray]
    eval_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    fd_step: float = 1e-6
    oracle_root: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if not self.fd_step > 0:
            raise ValueError("fd_step must be positive")
        if self.oracle_root is not None:
            object.__setattr__(self, "oracle_root", as_state(self.oracle_root, self.dim))

    def F(self, u) -> np.ndarray:
        out = np.asarray(self.eval_F(np.asarray(u, dtype=float)), dtype=float).reshape(-1)
        if out.size != self.dim:
            raise ValueError(f"F returned {out.size} entries for a dim-{self.dim} problem")
        return out

    def residual(self, u) -> float:
        return vector_norm(self.F(u))

    @property
    def has_analytic_jacobian(self) -> bool:
        return self.eval_jacobian is not None

    def jacobian(self, u) -> np.ndarray:
        if self.eval_jacobian is None:
            return finite_difference_jacobian(self, u)
        return np.atleast_2d(np.asarray(self.eval_jacobian(np.asarray(u, dtype=float)), dtype=float))


def finite_difference_jacobian(problem: ProblemSpec, u) -> np.ndarray:
    """Central-difference Jacobian, column j from F(u +- h e_j)."""
    u = as_state(u, problem.dim)
    h = problem.fd_step * (1.0 + vector_norm(u))
    jac = np.empty((problem.dim, problem.dim))
    for j in range(problem.dim):
        up = u.copy()
        dn = u.copy()
        up[j] += h
        dn[j] -= h
        fp = problem.F(up)
        fm = problem.F(dn)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise StencilFailure(j, u)
        jac[:, j] = (fp - fm) / (2.0 * h)
    return jac


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_state(self.center))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    @property
    def dim(self) -> int:
        return self.center.size

    def distance(self, u) -> float:
        return vector_norm(np.asarray(u, dtype=float) - self.center)

    def contains(self, u) -> bool:
        return self.distance(u) <= self.radius

    def with_radius(self, radius: float) -> "Ball":
        return Ball(self.center, radius)


@dataclass(frozen=True)
class RateFunctions:
    """Rate functions of the sufficient conditions.

    ``(F'(u) Phi, F) <= -g1(t) |F|^a`` and ``|Phi| <= g2(t) |F|^b``.
    ``integral_g1(t)`` and ``tail_integral_G(t)`` are optional closed forms;
    without them quadrature is used. ``spec`` is a serialisable description
    (see :func:`rates_from_spec`).
    """

    g1: Callable[[float], float]
    g2: Callable[[float], float]
    a: float = 2.0
    b: float = 1.0
    integral_g1: Optional[Callable[[float], float]] = None
    tail_integral_G: Optional[Callable[[float], float]] = None
    spec: Optional[dict] = None

    @classmethod
    def constant(cls, c1: float, c2: float, a: float = 2.0, b: float = 1.0) -> "RateFunctions":
        c1 = float(c1)
        c2 = float(c2)
        return cls(
            g1=lambda t: c1,
            g2=lambda t: c2,
            a=a,
            b=b,
            integral_g1=lambda t: c1 * t,
            tail_integral_G=lambda t: (c2 / c1) * math.exp(-c1 * t),
            spec={"g1": {"kind": "constant", "value": c1},
                  "g2": {"kind": "constant", "value": c2}, "a": a, "b": b},
        )

    def int_g1(self, t: float) -> float:
        """Integral of g1 over [0, t]."""
        if self.integral_g1 is not None:
            return float(self.integral_g1(t))
        return quadrature.integrate_finite(self.g1, 0.0, t)

    def G(self, x: float) -> float:
        return float(self.g2(x)) * math.exp(-self.int_g1(x))

    def tail_G(self, t: float) -> float:
        """Integral of G over [t, inf); raises DivergentTailIntegral."""
        if self.tail_integral_G is not None:
            return float(self.tail_integral_G(t))
        return quadrature.integrate_tail(self.G, t)

    def int_g2(self, lo: float, hi: float) -> float:
        return quadrature.integrate_finite(self.g2, lo, hi)


def scalar_function(desc: dict) -> tuple[Callable[[float], float], Callable[[float], float]]:
    """Closed-form registry for serialisable scalar functions of t >= 0.

    Returns ``(f, F)`` with ``F(t) = int_0^t f``. Kinds:
    ``constant`` {value}; ``power`` {scale, power}: scale*(1+t)**power;
    ``exponential`` {scale, rate}: scale*exp(-rate*t).
    """
    kind = desc["kind"]
    if kind == "constant":
        c = float(desc["value"])
        return (lambda t: c), (lambda t: c * t)
    if kind == "power":
        s = float(desc.get("scale", 1.0))
        p = float(desc["power"])
        if p == -1.0:
            return (lambda t: s / (1.0 + t)), (lambda t: s * math.log1p(t))
        return (lambda t: s * (1.0 + t) ** p), (lambda t: s * ((1.0 + t) ** (p + 1) - 1.0) / (p + 1))
    if kind == "exponential":
        s = float(desc.get("scale", 1.0))
        r = float(desc["rate"])
        if r == 0.0:
            return (lambda t: s), (lambda t: s * t)
        return (lambda t: s * math.exp(-r * t)), (lambda t: s * -math.expm1(-r * t) / r)
    raise ValueError(f"unknown scalar function kind {kind!r}")


def rates_from_spec(spec: dict) -> RateFunctions:
    g1, int_g1 = scalar_function(spec["g1"])
    g2, _ = scalar_function(spec["g2"])
    return RateFunctions(g1=g1, g2=g2, a=float(spec.get("a", 2.0)), b=float(spec.get("b", 1.0)),
                         integral_g1=int_g1, spec=dict(spec))


class ExitReason(enum.Enum):
    RESIDUAL_CONVERGED = "ResidualConverged"
    FINITE_HORIZON_REACHED = "FiniteHorizonReached"
    LEFT_BALL = "LeftBall"
    MAX_TIME_REACHED = "MaxTimeReached"
    STEP_FAILURE = "StepFailure"


@dataclass
class Trajectory:
    """Recorded solution of an initial value problem.

    ``residuals[i]`` is the residual norm at ``states[i]``: ``|F(u)|`` for the
    nonlinear flows and ``|A(u) + alpha(t) u - f|`` for the regularised ones.
    ``residual_floor`` is the floating-point resolution of that residual near
    the final state; values below it are not meaningful.
    """

    times: np.ndarray
    states: np.ndarray
    residuals: np.ndarray
    exit_reason: ExitReason
    rel_tol: float = 0.0
    abs_tol: float = 0.0
    residual_floor: float = 0.0
    nsteps: int = 0
    nfev: int = 0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.residuals = np.asarray(self.residuals, dtype=float)
        n = self.times.size
        if n < 1 or self.states.shape[0] != n or self.residuals.size != n:
            raise ValueError("times, states and residuals must have equal nonzero length")
        if n > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self):
        return self.times.size

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_residual(self) -> float:
        return float(self.residuals[-1])

    @property
    def final_time(self) -> float:
        return float(self.times[-1])


@dataclass(frozen=True)
class Check:
    """One checked inequality ``lhs <= rhs``."""

    condition_id: str
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def satisfied(self) -> bool:
        return bool(self.lhs <= self.rhs)

    def to_dict(self) -> dict:
        return {"condition_id": self.condition_id, "satisfied": self.satisfied,
                "lhs": self.lhs, "rhs": self.rhs, "margin": self.margin}


@dataclass(frozen=True)
class Constants:
    """Sampled hypothesis constants on a ball, already inflated by ``safety``.

    ``mu`` is the lower bound of the symmetric part of F' (deflated by
    ``safety``) used by the simple-iteration flow.
    """

    m1: float
    M1: float
    M2: float
    m0: float
    mu: float
    samples: int
    seed: int
    safety: float = 1.05

    def to_dict(self) -> dict:
        return {"m1": self.m1, "M1": self.M1, "M2": self.M2, "m0": self.m0, "mu": self.mu,
                "samples": self.samples, "seed": self.seed, "safety": self.safety}


@dataclass
class Certificate:
    checks: list = field(default_factory=list)
    constants: Optional[Constants] = None
    c1: Optional[float] = None
    c2: Optional[float] = None
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.satisfied for c in self.checks)

    def check(self, condition_id: str) -> Check:
        for c in self.checks:
            if c.condition_id == condition_id:
                return c
        raise KeyError(condition_id)

    def to_dict(self) -> dict:
        consts = self.constants.to_dict() if self.constants is not None else {}
        consts.update({"c1": self.c1, "c2": self.c2})
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks],
                "constants": consts, "info": self.info}
