"""Constant estimation, sufficient-condition checks, envelopes and trajectory audits."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from . import quadrature
from .core import (Ball, Certificate, Check, Constants, ProblemSpec, RateFunctions, Trajectory,
                   vector_norm)
from .errors import DivergentTailIntegral, HorizonNotReached, IncompleteCertificate
from .fields import FieldKind, derived_rates, prescribed_modified_newton_radius

SAFETY = 1.05
CONDITION_LIMIT = 1e12
HORIZON_SEARCH_LIMIT = 1e15


def sample_ball(ball: Ball, samples: int, seed: int) -> np.ndarray:
    """Scrambled-Sobol points distributed uniformly in ``ball``; row 0 is the centre."""
    n = ball.dim
    engine = qmc.Sobol(d=n + 1, scramble=True, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # non power-of-two sample counts
        cube = engine.random(samples)
    cube = np.clip(cube, 1e-12, 1 - 1e-12)
    if n == 1:
        directions = np.where(cube[:, :1] < 0.5, -1.0, 1.0)
    else:
        gauss = ndtri(cube[:, :n])
        directions = gauss / np.linalg.norm(gauss, axis=1, keepdims=True)
    radii = ball.radius * cube[:, n] ** (1.0 / n)
    points = ball.center + directions * radii[:, None]
    return np.vstack([ball.center, points])


def _unit_directions(n: int, rng: np.random.Generator, extra: int = 2) -> np.ndarray:
    dirs = [np.eye(n)]
    if n > 1 and extra:
        v = rng.standard_normal((extra, n))
        dirs.append(v / np.linalg.norm(v, axis=1, keepdims=True))
    return np.vstack(dirs)


def _inverse_norm(jac: np.ndarray) -> float:
    s = np.linalg.svd(jac, compute_uv=False)
    if s[-1] == 0.0 or s[0] > CONDITION_LIMIT * s[-1]:
        return math.inf
    return float(1.0 / s[-1])


def _sample_constants(problem: ProblemSpec, u: np.ndarray, directions: np.ndarray, eps: float):
    jac = problem.jacobian(u)
    s = np.linalg.svd(jac, compute_uv=False)
    inv = _inverse_norm(jac)
    mu = float(np.linalg.eigvalsh(0.5 * (jac + jac.T))[0])
    second = 0.0
    for v in directions:
        diff = problem.jacobian(u + eps * v) - jac
        second = max(second, float(np.linalg.norm(diff, 2)) / eps)
    return inv, float(s[0]), second, mu


def estimate_constants(problem: ProblemSpec, ball: Ball, samples: int = 256, seed: int = 0,
                       safety: float = SAFETY, workers: int = 1) -> Constants:
    """Sample the hypothesis constants over ``ball``.

    ``m1 = max |F'(u)^-1|``, ``M1 = max |F'(u)|``, ``M2`` from difference
    quotients of F' along coordinate and random unit directions, ``m0`` at the
    centre and ``mu`` the smallest eigenvalue of the symmetric part of F'.
    Upper bounds are inflated by ``safety``; ``mu`` is moved down by it. A
    singular sample makes ``m1`` infinite. Results do not depend on ``workers``.
    """
    if samples < 100:
        raise ValueError("at least 100 samples are required")
    points = sample_ball(ball, samples, seed)
    rng = np.random.default_rng(seed)
    direction_sets = [_unit_directions(problem.dim, rng) for _ in range(len(points))]
    eps = 1e-5 * max(1.0, ball.radius if math.isfinite(ball.radius) else 1.0)

    def job(i):
        return _sample_constants(problem, points[i], direction_sets[i], eps)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(len(points))))
    else:
        results = [job(i) for i in range(len(points))]

    inv, big, second, mu = (np.array(col) for col in zip(*results))
    m0 = _inverse_norm(problem.jacobian(ball.center))
    mu_min = float(mu.min())
    return Constants(
        m1=float(inv.max()) * safety,
        M1=float(big.max()) * safety,
        M2=float(second.max()) * safety,
        m0=m0 * safety,
        mu=mu_min / safety if mu_min > 0 else mu_min * safety,
        samples=samples,
        seed=seed,
        safety=safety,
    )


def check_ball_condition(g0: float, rates: RateFunctions, ball: Ball) -> Check:
    """``g0 * int_0^inf G <= R``; raises DivergentTailIntegral if the integral diverges."""
    return Check("ball", g0 * rates.tail_G(0.0), ball.radius)


def _constant(constants, name):
    value = constants.get(name) if isinstance(constants, Mapping) else getattr(constants, name, None)
    if value is None or (isinstance(value, float) and math.isnan(value)):
        raise IncompleteCertificate(f"constant {name} is required")
    return float(value)


def check_method_condition(kind: FieldKind, constants, g0: float, R: float) -> Check:
    """Constant-rate ball condition specialised to each classical flow."""
    if kind is FieldKind.NEWTON:
        return Check(f"method.{kind.value}", _constant(constants, "m1") * g0, R)
    if kind is FieldKind.SIMPLE_ITERATION:
        mu = _constant(constants, "mu")
        return Check("method.simple-iteration", g0 / mu if mu > 0 else math.inf, R)
    if kind is FieldKind.GRADIENT:
        return Check("method.gradient", _constant(constants, "M1") * _constant(constants, "m1") ** 2 * g0, R)
    if kind is FieldKind.GAUSS_NEWTON:
        return Check("method.gauss-newton", _constant(constants, "M1") * _constant(constants, "m1") ** 2 * g0, R)
    if kind is FieldKind.MODIFIED_NEWTON:
        m0 = _constant(constants, "m0")
        return Check("method.modified-newton", 4.0 * m0**2 * _constant(constants, "M2") * g0, 1.0)
    if kind is FieldKind.DESCENT:
        return Check(f"method.{kind.value}", _constant(constants, "m1") * g0, R)
    raise IncompleteCertificate(f"no sufficient condition is known for {kind}")


def certify(problem: ProblemSpec, kind: FieldKind, ball: Ball, samples: int = 256,
            seed: int = 0, constants: Optional[Constants] = None) -> Certificate:
    """Estimate constants on ``ball`` and check the conditions for flow ``kind``.

    For the frozen-Jacobian flow the working radius is ``min(R, 1/(2 M2 m0))``,
    recorded as ``info["radius"]``.
    """
    if constants is None:
        constants = estimate_constants(problem, ball, samples, seed)
    g0 = problem.residual(ball.center)
    rates = derived_rates(kind, constants)
    radius = ball.radius
    info = {"kind": kind.value, "g0": g0}
    if kind is FieldKind.MODIFIED_NEWTON:
        prescribed = prescribed_modified_newton_radius(constants.M2, constants.m0)
        radius = min(radius, prescribed)
        info["prescribed_radius"] = prescribed
    info["radius"] = radius
    checks = []
    if rates.c1 > 0 and math.isfinite(rates.c2):
        constant_rates = RateFunctions.constant(rates.c1, rates.c2)
        checks.append(check_ball_condition(g0, constant_rates, ball.with_radius(radius)))
    else:
        checks.append(Check("ball", math.inf, radius))
    checks.append(check_method_condition(kind, constants, g0, radius))
    return Certificate(checks=checks, constants=constants, c1=rates.c1, c2=rates.c2, info=info)


def residual_envelope(rates: RateFunctions, g0: float, t: float) -> float:
    """Upper bound on ``|F(u(t))|`` for exponent ``a`` (exp, finite-time, or algebraic decay)."""
    a = rates.a
    if g0 == 0.0:
        return 0.0
    integral = rates.int_g1(t)
    if a == 2.0:
        return g0 * math.exp(-integral)
    if a < 2.0:
        base = g0 ** (2.0 - a) - (2.0 - a) * integral
        return max(0.0, base) ** (1.0 / (2.0 - a))
    return (g0 ** (2.0 - a) + (a - 2.0) * integral) ** (1.0 / (2.0 - a))


def tail_bound(rates: RateFunctions, g0: float, t: float) -> float:
    """Upper bound ``g0 * int_t^inf G`` on ``|u(t) - u(inf)|``."""
    return g0 * rates.tail_G(t)


def finite_time_horizon(rates: RateFunctions, g0: float, rel_tol: float = 1e-10) -> float:
    """Time ``T`` with ``(2 - a) int_0^T g1 = g0^(2 - a)``, by bracketing and bisection."""
    a = rates.a
    if not 0.0 < a < 2.0:
        raise ValueError("finite horizon exists only for 0 < a < 2")
    if g0 == 0.0:
        return 0.0
    target = g0 ** (2.0 - a) / (2.0 - a)
    lo, hi = 0.0, 1.0
    while rates.int_g1(hi) < target:
        lo, hi = hi, 2.0 * hi
        if hi > HORIZON_SEARCH_LIMIT:
            raise HorizonNotReached(
                f"int_0^T g1 stays below {target:.6g} up to T={HORIZON_SEARCH_LIMIT:g}")
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if rates.int_g1(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def check_theorem2_ball(rates: RateFunctions, g0: float, T: float, R: float) -> Check:
    """``g0^b * int_0^T g2 <= R`` (b = 1 is the standard form)."""
    return Check("finite-horizon-ball", g0**rates.b * rates.int_g2(0.0, T), R)


def check_theorem3_condition(rates: RateFunctions, g0: float, R: float) -> Check:
    """``int_0^inf g2(s) h(s) ds <= R`` with ``h`` the algebraic residual envelope; needs a > 2."""
    if not rates.a > 2.0:
        raise ValueError("the algebraic-decay condition needs a > 2")
    if g0 == 0.0:
        return Check("algebraic-tail", 0.0, R)
    try:
        lhs = quadrature.integrate_tail(lambda s: rates.g2(s) * residual_envelope(rates, g0, s))
    except DivergentTailIntegral:
        lhs = math.inf
    return Check("algebraic-tail", lhs, R)


@dataclass
class EnvelopeReport:
    """Pointwise comparison of a measured quantity against its theoretical bound.

    A point is a violation when ``actual > bound * (1 + slack) + noise_floor``.
    """

    times: np.ndarray
    actual_residuals: np.ndarray
    envelope_values: np.ndarray
    violations: list
    max_relative_overshoot: float
    slack: float = 0.0
    noise_floor: float = 0.0
    tail: Optional["EnvelopeReport"] = None
    info: dict = field(default_factory=dict)

    @property
    def clean(self) -> bool:
        return not self.violations and (self.tail is None or self.tail.clean)

    def summary(self) -> dict:
        out = {"points": int(self.times.size), "violations": len(self.violations),
               "max_relative_overshoot": self.max_relative_overshoot, "slack": self.slack,
               "noise_floor": self.noise_floor, "clean": self.clean}
        out.update(self.info)
        if self.tail is not None:
            out["tail"] = self.tail.summary()
        return out


def compare_envelope(times, actual, bound, slack: float, noise_floor: float = 0.0) -> EnvelopeReport:
    times = np.asarray(times, dtype=float)
    actual = np.asarray(actual, dtype=float)
    bound = np.asarray(bound, dtype=float)
    over = (actual - noise_floor - bound) / np.maximum(bound, 1e-30)
    bad = np.nonzero(actual > bound * (1.0 + slack) + noise_floor)[0]
    violations = [(float(times[i]), float(actual[i]), float(bound[i])) for i in bad]
    max_over = float(over.max()) if over.size else -math.inf
    return EnvelopeReport(times, actual, bound, violations, max_over, slack, noise_floor)


def default_slack(rel_tol: float) -> float:
    return 1e-6 + 10.0 * rel_tol


def audit_trajectory(traj: Trajectory, rates: RateFunctions, slack: Optional[float] = None,
                     root=None, noise_floor: Optional[float] = None,
                     residual_cutoff: Optional[float] = None) -> EnvelopeReport:
    """Audit residuals against the residual envelope and, for a = 2, states against the tail bound.

    ``root`` defaults to the final state. The state audit only uses times at
    which the tail bound exceeds ten times the estimated noise in ``u(inf)``.
    With ``residual_cutoff`` the residual audit stops at the first recorded
    residual below it; fields smoothed near ``F = 0`` satisfy their rate
    inequality only above that level.
    """
    if slack is None:
        slack = default_slack(traj.rel_tol)
    if noise_floor is None:
        noise_floor = traj.residual_floor
    g0 = float(traj.residuals[0])
    n = len(traj)
    if residual_cutoff is not None:
        below = np.nonzero(traj.residuals < residual_cutoff)[0]
        if below.size:
            n = max(1, int(below[0]))
    bound = np.array([residual_envelope(rates, g0, t) for t in traj.times[:n]])
    report = compare_envelope(traj.times[:n], traj.residuals[:n], bound, slack, noise_floor)
    if n < len(traj):
        report.info["audited_until"] = float(traj.times[n - 1])
    if rates.a != 2.0 or len(traj) < 2:
        return report
    try:
        tails = np.array([tail_bound(rates, g0, t) for t in traj.times])
    except DivergentTailIntegral:
        report.info["tail"] = "divergent"
        return report
    final = traj.final_state
    state_tol = traj.abs_tol + traj.rel_tol * vector_norm(final)
    if root is None:
        y = final
        noise = state_tol + tails[-1]
    else:
        y = np.asarray(root, dtype=float)
        noise = state_tol + vector_norm(final - y)
    keep = tails > 10.0 * noise
    distances = np.linalg.norm(traj.states - y, axis=1)
    report.tail = compare_envelope(traj.times[keep], distances[keep], tails[keep], slack)
    report.tail.info["state_noise"] = noise
    return report
