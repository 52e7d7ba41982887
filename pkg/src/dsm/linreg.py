"""Regularised linear evolution du/dt = -A u - alpha(t) u + f for selfadjoint A >= 0.

A is represented by its spectrum (diagonal in an orthonormal eigenbasis), so
the null-space projector P and the spectral integral become componentwise
expressions. Dense symmetric matrices are diagonalised first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import quadrature
from .core import Certificate, Check, ExitReason, as_state, scalar_function
from .errors import DivergentTailIntegral, InconsistentRightHandSide


@dataclass(frozen=True)
class SpectralOperator:
    eigenvalues: np.ndarray

    def __post_init__(self):
        lam = np.array(self.eigenvalues, dtype=float).reshape(-1)
        if lam.size == 0 or not np.all(np.isfinite(lam)):
            raise ValueError("eigenvalues must be a nonempty finite list")
        if np.any(lam < 0):
            raise ValueError("operator must be nonnegative")
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def null_indices(self) -> np.ndarray:
        return np.nonzero(self.eigenvalues == 0.0)[0]

    def project_null(self, v) -> np.ndarray:
        out = np.zeros(self.dim)
        idx = self.null_indices
        out[idx] = np.asarray(v, dtype=float)[idx]
        return out

    def apply(self, v) -> np.ndarray:
        return self.eigenvalues * np.asarray(v, dtype=float)

    @classmethod
    def from_symmetric(cls, matrix, tol: float = 1e-12):
        """Diagonalise a symmetric PSD matrix; returns ``(operator, eigenvectors)``.

        Eigenvalues below ``tol * max|lambda|`` are set to exactly zero.
        """
        m = np.asarray(matrix, dtype=float)
        if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
            raise ValueError("matrix is not symmetric")
        lam, vecs = np.linalg.eigh(0.5 * (m + m.T))
        cutoff = tol * max(1.0, float(np.abs(lam).max()))
        if np.any(lam < -cutoff):
            raise ValueError("matrix is not positive semidefinite")
        lam = np.where(np.abs(lam) <= cutoff, 0.0, lam)
        return cls(lam), vecs


@dataclass(frozen=True)
class AlphaSchedule:
    """Regularisation parameter alpha(t) with optional closed-form integral and finite total q."""

    alpha: Callable[[float], float]
    integral_alpha: Optional[Callable[[float], float]] = None
    q: Optional[float] = None
    spec: Optional[dict] = None

    @classmethod
    def zero(cls) -> "AlphaSchedule":
        return cls(lambda t: 0.0, lambda t: 0.0, 0.0, {"kind": "constant", "value": 0.0})

    @classmethod
    def power(cls, p: float, scale: float = 1.0) -> "AlphaSchedule":
        """``scale * (1 + t)**p``; q is finite only for p < -1."""
        desc = {"kind": "power", "scale": scale, "power": p}
        return cls.from_spec(desc)

    @classmethod
    def exponential(cls, rate: float, scale: float = 1.0) -> "AlphaSchedule":
        return cls.from_spec({"kind": "exponential", "scale": scale, "rate": rate})

    @classmethod
    def from_spec(cls, desc: dict) -> "AlphaSchedule":
        alpha, integral = scalar_function(desc)
        q = None
        if desc["kind"] == "constant" and float(desc["value"]) == 0.0:
            q = 0.0
        elif desc["kind"] == "exponential" and float(desc["rate"]) > 0:
            q = float(desc.get("scale", 1.0)) / float(desc["rate"])
        elif desc["kind"] == "power" and float(desc["power"]) < -1:
            q = -float(desc.get("scale", 1.0)) / (float(desc["power"]) + 1.0)
        return cls(alpha, integral, q, dict(desc))

    def H(self, t: float) -> float:
        """Integral of alpha over [0, t]."""
        if self.integral_alpha is not None:
            return float(self.integral_alpha(t))
        return quadrature.integrate_finite(self.alpha, 0.0, t)

    def h(self, t: float) -> float:
        return math.exp(self.H(t))

    def total(self) -> float:
        """q = int_0^inf alpha, or inf when the operational divergence rule fires."""
        if self.q is not None:
            return self.q
        try:
            return quadrature.integrate_tail(self.alpha, 0.0)
        except DivergentTailIntegral:
            return math.inf


def _check_rhs(op: SpectralOperator, f: np.ndarray, tol: float = 0.0):
    for j in op.null_indices:
        if abs(f[j]) > tol:
            raise InconsistentRightHandSide(int(j), float(f[j]))


def minimal_norm_solution(op: SpectralOperator, f) -> np.ndarray:
    """``y_j = f_j / lambda_j`` on the range, 0 on the null space."""
    f = as_state(f, op.dim)
    _check_rhs(op, f)
    y = np.zeros(op.dim)
    mask = op.eigenvalues > 0
    y[mask] = f[mask] / op.eigenvalues[mask]
    return y


def limit_state(op: SpectralOperator, f, u0, schedule: AlphaSchedule) -> np.ndarray:
    """``u(inf) = y - P y + exp(-q) P u0`` (``exp(-inf) = 0``)."""
    y = minimal_norm_solution(op, f)
    q = schedule.total()
    return y - op.project_null(y) + math.exp(-q) * op.project_null(as_state(u0, op.dim))


def _forcing_integral(lam: float, t: float, schedule: AlphaSchedule) -> float:
    """``int_0^t exp(-lam s) h(t - s) / h(t) ds``, every factor bounded by 1."""
    Ht = schedule.H(t)

    def integrand(s):
        return math.exp(-lam * s - (Ht - schedule.H(t - s)))

    if lam > 0 and 50.0 / lam < t:
        split = 50.0 / lam
        return (quadrature.integrate_finite(integrand, 0.0, split)
                + quadrature.integrate_finite(integrand, split, t))
    return quadrature.integrate_finite(integrand, 0.0, t)


def evolve_linear(op: SpectralOperator, f, u0, schedule: AlphaSchedule, t: float) -> np.ndarray:
    """State at time ``t`` of ``du/dt = -A u - alpha(t) u + f``, ``u(0) = u0``."""
    f = as_state(f, op.dim)
    u0 = as_state(u0, op.dim)
    _check_rhs(op, f)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return u0.copy()
    if schedule.integral_alpha is None:
        return _evolve_augmented(op, f, u0, schedule, t)
    Ht = schedule.H(t)
    out = np.empty(op.dim)
    for j, lam in enumerate(op.eigenvalues):
        free = u0[j] * math.exp(-lam * t - Ht)
        forced = 0.0 if f[j] == 0.0 else f[j] * _forcing_integral(lam, t, schedule)
        out[j] = free + forced
    return out


def _evolve_augmented(op, f, u0, schedule, t):
    # no closed-form integral of alpha: integrate the component ODEs directly
    from .integrate import IntegrationConfig, integrate_flow

    lam = op.eigenvalues

    def rhs(s, y):
        return -lam * y - schedule.alpha(s) * y + f

    cfg = IntegrationConfig(rel_tol=1e-12, abs_tol=1e-14, max_time=max(t, 1e-3),
                            residual_stop=0.0, record_every=max(t, 1e-3))
    traj = integrate_flow(rhs, u0, lambda s, y: 0.0, cfg, t_end=t, residual_stop=0.0,
                          end_reason=ExitReason.MAX_TIME_REACHED)
    return traj.final_state


def evolve_dense(matrix, f, u0, schedule: AlphaSchedule, t: float) -> np.ndarray:
    """Same as :func:`evolve_linear` for a dense symmetric PSD matrix."""
    op, vecs = SpectralOperator.from_symmetric(matrix)
    f_hat = vecs.T @ np.asarray(f, dtype=float)
    f_hat[op.null_indices] = np.where(
        np.abs(f_hat[op.null_indices]) <= 1e-12 * max(1.0, np.linalg.norm(f)), 0.0,
        f_hat[op.null_indices])
    return vecs @ evolve_linear(op, f_hat, vecs.T @ np.asarray(u0, dtype=float), schedule, t)


def slow_convergence_witness(T: float, margin: float = 0.5) -> tuple[float, float]:
    """Eigenvalue ``lambda_m`` for which the rank-one solve is still far from converged at ``T``.

    With ``y = phi_m``, ``u0 = 0`` and no regularisation ``|u(T) - y| = exp(-T lambda_m)``.
    Choosing ``lambda_m = (1 - margin) / T`` gives ``exp(margin - 1) > margin``.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if not 0.0 < margin < 1.0:
        raise ValueError("margin must lie in (0, 1)")
    lam = (1.0 - margin) / T
    return lam, math.exp(-T * lam)


def validate_alpha_schedule_linear(schedule: AlphaSchedule, grid) -> Certificate:
    """Measure the schedule properties that the linear limit results are stated with.

    Only nonnegativity is required; positivity, monotone decay, the size of
    ``|alpha'| / alpha^2`` and divergence of ``int alpha`` are reported in ``info``.
    """
    grid = np.asarray(grid, dtype=float)
    vals = np.array([schedule.alpha(t) for t in grid])
    deriv = np.gradient(vals, grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(vals > 0, np.abs(deriv) / vals**2,
                         np.where(deriv == 0, 0.0, np.inf))
    half = max(1, grid.size // 2)
    sup_full = float(ratio.max())
    sup_half = float(ratio[:half].max())
    q = schedule.total()
    info = {
        "positive": bool(np.all(vals > 0)),
        "nonincreasing": bool(np.all(np.diff(vals) <= 0)),
        "ratio_sup": sup_full,
        "ratio_bounded": bool(math.isfinite(sup_full) and sup_full <= 2.0 * sup_half + 1e-12),
        "integral_divergent": not math.isfinite(q),
        "q": q,
    }
    return Certificate(checks=[Check("4.nonnegative", -float(vals.min()), 0.0)], info=info)


def h_monotonicity_gap(schedule: AlphaSchedule, pairs) -> float:
    """Largest violation of ``0 < h(t - s) <= h(t)`` over ``(s, t)`` pairs with s in [0, t]."""
    worst = -math.inf
    for s, t in pairs:
        hts = schedule.h(t - s)
        ht = schedule.h(t)
        if not hts > 0:
            return math.inf
        worst = max(worst, hts - ht)
    return worst
