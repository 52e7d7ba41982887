"""Regularised flow du/dt = -[A(u) + alpha(t) u - f] for monotone A."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import quadrature
from .audit import EnvelopeReport, compare_envelope, default_slack
from .core import Ball, Certificate, Check, ProblemSpec, Trajectory, as_state, vector_norm
from .errors import DivergentTailIntegral
from .integrate import IntegrationConfig, integrate_flow
from .linreg import AlphaSchedule


@dataclass(frozen=True)
class MonotoneProblem:
    eval_A: Callable[[np.ndarray], np.ndarray]
    f: np.ndarray
    dim: int
    eval_A_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    oracle_root: Optional[np.ndarray] = None
    name: str = "monotone"

    def __post_init__(self):
        object.__setattr__(self, "f", as_state(self.f, self.dim))
        if self.oracle_root is not None:
            object.__setattr__(self, "oracle_root", as_state(self.oracle_root, self.dim))

    def A(self, u) -> np.ndarray:
        return np.asarray(self.eval_A(np.asarray(u, dtype=float)), dtype=float).reshape(-1)

    def as_problem(self) -> ProblemSpec:
        """The unregularised equation ``A(u) - f = 0`` as a ProblemSpec."""
        f = self.f
        return ProblemSpec(self.name, self.dim, lambda u: self.A(u) - f, self.eval_A_jacobian,
                           oracle_root=self.oracle_root)

    def jacobian(self, u) -> np.ndarray:
        return self.as_problem().jacobian(u)

    def regularised_residual(self, t: float, u, schedule: AlphaSchedule) -> float:
        u = np.asarray(u, dtype=float)
        return vector_norm(self.A(u) + schedule.alpha(t) * u - self.f)


def check_monotone(problem: MonotoneProblem, ball: Ball, pairs: int = 200, seed: int = 0) -> Check:
    """Sampled monotonicity: ``(A(u) - A(v), u - v) >= -1e-9 |u - v|^2``.

    ``lhs`` is the worst normalised defect ``-(A(u) - A(v), u - v) / |u - v|^2``.
    """
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for _ in range(pairs):
        pts = []
        for _ in range(2):
            d = rng.standard_normal(problem.dim)
            d /= np.linalg.norm(d)
            pts.append(ball.center + ball.radius * rng.random() ** (1 / problem.dim) * d)
        u, v = pts
        diff = u - v
        nn = float(diff @ diff)
        if nn == 0.0:
            continue
        worst = max(worst, -float((problem.A(u) - problem.A(v)) @ diff) / nn)
    return Check("monotone", worst, 1e-9)


def check_jacobian_monotone(problem: MonotoneProblem, points) -> Check:
    """Smallest eigenvalue of the symmetric part of A' over ``points`` must be >= -1e-6."""
    worst = math.inf
    for u in points:
        jac = problem.jacobian(u)
        worst = min(worst, float(np.linalg.eigvalsh(0.5 * (jac + jac.T))[0]))
    return Check("jacobian-monotone", -worst, 1e-6)


def _divided_second(grid, vals):
    d1 = np.diff(vals) / np.diff(grid)
    mids = 0.5 * (grid[1:] + grid[:-1])
    return np.diff(d1) / np.diff(mids)


def validate_alpha_schedule_A3(schedule: AlphaSchedule, grid) -> Certificate:
    """Grid checks of the schedule assumptions for the monotone problem.

    Positive, non-increasing, convex (second divided differences >= -1e-9),
    and ``|alpha'| / alpha^2`` on the last tenth of the grid at most half its
    value on the first tenth, as an operational stand-in for the limit being 0.
    ``info`` holds the fitted lower bound ``alpha(t) >= 1 / (c1 t + c2)``.
    """
    grid = np.asarray(grid, dtype=float)
    vals = np.array([schedule.alpha(t) for t in grid])
    deriv = np.gradient(vals, grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.abs(deriv) / vals**2
    tenth = max(1, grid.size // 10)
    early = float(np.mean(ratio[:tenth]))
    late = float(np.mean(ratio[-tenth:]))
    checks = [
        Check("schedule.positive", -float(vals.min()), -np.finfo(float).tiny),
        Check("schedule.nonincreasing", float(np.max(np.diff(vals))), 0.0),
        Check("schedule.convex", -float(_divided_second(grid, vals).min()), 1e-9),
        Check("schedule.ratio_limit", late, 0.5 * early),
    ]
    info = {"ratio_first_tenth": early, "ratio_last_tenth": late}
    if np.all(vals > 0):
        inv = 1.0 / vals
        c2 = float(inv[0]) if grid[0] == 0.0 else float(inv.min())
        pos = grid > 0
        c1 = float(np.max((inv[pos] - c2) / grid[pos])) if np.any(pos) else 0.0
        info["lower_bound_c1"] = max(c1, 0.0)
        info["lower_bound_c2"] = c2
    return Certificate(checks=checks, info=info)


def solve_monotone(problem: MonotoneProblem, schedule: AlphaSchedule, u0,
                   config: IntegrationConfig = IntegrationConfig(max_time=200.0)) -> Trajectory:
    """Integrate the regularised flow on ``[0, max_time]``.

    Residuals are ``h(t) = |A(u) + alpha(t) u - f|``. No residual stopping is
    applied: a small h at fixed alpha does not mean the flow has settled.
    """
    u0 = as_state(u0, problem.dim)
    f = problem.f

    def rhs(t, u):
        return -(problem.A(u) + schedule.alpha(t) * u - f)

    def residual(t, u):
        return problem.regularised_residual(t, u, schedule)

    return integrate_flow(rhs, u0, residual, config, residual_stop=0.0)


def audit_monotone_residual(traj: Trajectory, schedule: AlphaSchedule,
                            slack: Optional[float] = None) -> EnvelopeReport:
    """Compare ``h(t)`` with ``phi(t) = h(0) exp(-int_0^t alpha)``.

    When ``phi`` is integrable, ``info["state_tail"]`` holds the estimates
    ``int_t^inf phi`` of ``|u(inf) - u(t)|`` at the recorded times.
    """
    if slack is None:
        slack = default_slack(traj.rel_tol)
    h0 = float(traj.residuals[0])
    phi = np.array([h0 * math.exp(-schedule.H(t)) for t in traj.times])
    report = compare_envelope(traj.times, traj.residuals, phi, slack, traj.residual_floor)

    def phi_at(s):
        return h0 * math.exp(-schedule.H(s))

    try:
        tails = [quadrature.integrate_tail(phi_at, t) for t in (0.0, traj.final_time)]
        report.info["phi_integrable"] = True
        report.info["phi_integral"] = tails[0]
        report.info["state_tail_final"] = tails[1]
    except DivergentTailIntegral:
        report.info["phi_integrable"] = False
    return report
