"""Adaptive Dormand-Prince 5(4) integration of du/dt = Phi(t, u).

Steps are clipped so that every point of the output grid ``k * record_every``
is hit exactly by a step end; no interpolated states are ever recorded. The
continuous extension of the pair is used only to bracket and bisect events
(residual convergence, leaving the trust ball), after which a fresh step is
taken from the last accepted point to the event time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import Ball, ExitReason, ProblemSpec, Trajectory, as_state
from .errors import DSMError, StepFailure
from .fields import PhiField

# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# 5th-order minus embedded 4th-order weights
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension: y(t + x h) = y + h * K^T P [x, x^2, x^3, x^4]
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 10.0
PI_BETA = 0.04
PI_ALPHA = 0.2 - 0.75 * PI_BETA
MIN_STEP = 1e-14
EVENT_TIME_TOL = 1e-9
FLOOR_FACTOR = 32.0


@dataclass(frozen=True)
class IntegrationConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_time: float = 50.0
    residual_stop: float = 1e-10
    max_steps: int = 10**6
    record_every: float = 0.01

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_time", "record_every"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.residual_stop < 0:
            raise ValueError("residual_stop must be nonnegative")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        if self.record_every > self.max_time:
            raise ValueError("record_every must not exceed max_time")

    def replace(self, **changes) -> "IntegrationConfig":
        values = dict(self.__dict__)
        values.update(changes)
        return IntegrationConfig(**values)


class _Stepper:
    """One Dormand-Prince step with FSAL reuse and compensated state summation."""

    def __init__(self, rhs, rel_tol, abs_tol):
        self.rhs = rhs
        self.rel_tol = rel_tol
        self.abs_tol = abs_tol
        self.nfev = 0

    def f(self, t, y):
        self.nfev += 1
        return np.asarray(self.rhs(t, y), dtype=float)

    def step(self, t, y, f0, h, comp):
        """Returns (y_new, f_new, err_norm, K, comp_new)."""
        K = np.empty((7, y.size))
        K[0] = f0
        for s in range(1, 6):
            K[s] = self.f(t + _C[s] * h, y + h * (_A[s] @ K[:s]))
        incr = h * (_B[:6] @ K[:6])
        # Kahan-compensated y + incr
        corrected = incr - comp
        y_new = y + corrected
        comp_new = (y_new - y) - corrected
        K[6] = self.f(t + h, y_new)
        err = h * (_E @ K)
        scale = self.abs_tol + self.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))
        return y_new, K[6], err_norm, K, comp_new

    def initial_step(self, t, y, f0, span):
        scale = self.abs_tol + self.rel_tol * np.abs(y)
        d0 = np.sqrt(np.mean((y / scale) ** 2))
        d1 = np.sqrt(np.mean((f0 / scale) ** 2))
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h0 = min(h0, span)
        y1 = y + h0 * f0
        f1 = self.f(t + h0, y1)
        d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
        if d1 <= 1e-15 and d2 <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** 0.2
        return min(100 * h0, h1, span)


def _dense(y, h, K, x):
    powers = np.array([x, x * x, x**3, x**4])
    return y + h * (K.T @ (_P @ powers))


def _bisect_event(y, h, K, t, indicator):
    """Smallest x in (0, 1] (to EVENT_TIME_TOL in time) where indicator(t + x h, y(x)) >= 0."""
    lo, hi = 0.0, 1.0
    while (hi - lo) * h > EVENT_TIME_TOL:
        mid = 0.5 * (lo + hi)
        if indicator(t + mid * h, _dense(y, h, K, mid)) >= 0.0:
            hi = mid
        else:
            lo = mid
    return hi


def residual_floor(residual_fn: Callable[[float, np.ndarray], float], t: float, u) -> float:
    """Resolution of ``residual_fn`` at ``u``: its spread under one-ulp coordinate moves."""
    u = np.asarray(u, dtype=float)
    r0 = residual_fn(t, u)
    spread = 0.0
    for j in range(u.size):
        for direction in (np.inf, -np.inf):
            v = u.copy()
            v[j] = np.nextafter(v[j], direction)
            spread = max(spread, abs(residual_fn(t, v) - r0))
    return FLOOR_FACTOR * max(spread, np.finfo(float).eps * abs(r0))


def integrate_flow(rhs: Callable[[float, np.ndarray], np.ndarray], u0, residual_fn,
                   config: IntegrationConfig, ball: Optional[Ball] = None,
                   t_end: Optional[float] = None, residual_stop: Optional[float] = None,
                   end_reason: ExitReason = ExitReason.MAX_TIME_REACHED) -> Trajectory:
    """Integrate ``du/dt = rhs(t, u)`` from ``u(0) = u0`` up to ``t_end``.

    ``residual_fn(t, u)`` gives the recorded residual; integration stops early
    when it drops to ``residual_stop`` or when ``u`` leaves ``ball``.
    """
    y = as_state(u0).copy()
    t_end = config.max_time if t_end is None else float(t_end)
    stop = config.residual_stop if residual_stop is None else residual_stop
    stepper = _Stepper(rhs, config.rel_tol, config.abs_tol)

    times = [0.0]
    states = [y.copy()]
    r0 = float(residual_fn(0.0, y))
    residuals = [r0]

    def finish(reason):
        floor = residual_floor(residual_fn, times[-1], states[-1])
        return Trajectory(np.array(times), np.array(states), np.array(residuals), reason,
                          rel_tol=config.rel_tol, abs_tol=config.abs_tol, residual_floor=floor,
                          nsteps=nsteps, nfev=stepper.nfev)

    nsteps = 0
    if t_end == 0.0:
        return finish(end_reason)
    if stop > 0 and r0 <= stop:
        return finish(ExitReason.RESIDUAL_CONVERGED)

    def indicator(tt, yy):
        # >= 0 once an event has happened
        vals = []
        if stop > 0:
            vals.append(stop - float(residual_fn(tt, yy)))
        if ball is not None and math.isfinite(ball.radius):
            vals.append(ball.distance(yy) - ball.radius)
        return max(vals) if vals else -1.0

    def partial(message, t, err=None):
        traj = finish(ExitReason.STEP_FAILURE)
        failure = StepFailure(message, t, traj)
        if err is not None:
            raise failure from err
        raise failure

    t = 0.0
    comp = np.zeros_like(y)
    try:
        f0 = stepper.f(t, y)
    except DSMError as exc:
        exc.t = t
        raise
    grid_index = 1
    n_grid = int(math.floor(t_end / config.record_every + 1e-9))
    h = stepper.initial_step(t, y, f0, t_end)
    err_prev = 1e-4
    rejected = False

    while True:
        target = min(grid_index * config.record_every, t_end) if grid_index <= n_grid else t_end
        if t_end - target < 1e-9 * config.record_every:
            target = t_end
        h_step = min(h, target - t)
        if h_step < MIN_STEP and target - t >= MIN_STEP:
            partial("step size underflow", t)
        if nsteps >= config.max_steps:
            partial("maximum number of steps exceeded", t)
        try:
            y_new, f_new, err, K, comp_new = stepper.step(t, y, f0, h_step, comp)
        except DSMError as exc:
            exc.t = t
            raise
        nsteps += 1
        if not (math.isfinite(err) and np.all(np.isfinite(y_new))):
            h = h_step * FAC_MIN
            rejected = True
            continue
        if err > 1.0:
            h = h_step * max(FAC_MIN, SAFETY * err**-0.2)
            rejected = True
            continue

        # accepted
        end_hit = h_step == target - t
        t_new = target if end_hit else t + h_step
        if indicator(t_new, y_new) >= 0.0:
            x = _bisect_event(y, h_step, K, t, indicator)
            y_ev = stepper.step(t, y, f0, x * h_step, comp)[0]
            if indicator(t + x * h_step, y_ev) < 0.0:
                # the interpolant is less accurate than the step: refine with real steps
                lo, hi, y_hi = x, 1.0, y_new
                while (hi - lo) * h_step > EVENT_TIME_TOL:
                    mid = 0.5 * (lo + hi)
                    y_mid = stepper.step(t, y, f0, mid * h_step, comp)[0]
                    if indicator(t + mid * h_step, y_mid) >= 0.0:
                        hi, y_hi = mid, y_mid
                    else:
                        lo = mid
                x, y_ev = hi, y_hi
            t_ev = t + x * h_step
            if t_ev <= times[-1]:
                t_ev = np.nextafter(times[-1], np.inf)
            times.append(t_ev)
            states.append(y_ev)
            residuals.append(float(residual_fn(t_ev, y_ev)))
            left = ball is not None and ball.distance(y_ev) >= ball.radius * (1 - 1e-6) and not (
                stop > 0 and residuals[-1] <= stop * (1 + 1e-6))
            return finish(ExitReason.LEFT_BALL if left else ExitReason.RESIDUAL_CONVERGED)

        fac = SAFETY * max(err, 1e-10) ** -PI_ALPHA * err_prev**PI_BETA
        fac = min(1.0 if rejected else FAC_MAX, max(FAC_MIN, fac))
        clipped = end_hit and h_step < h
        # a step shortened to land on the grid says nothing against the previous proposal
        h = max(h_step * fac, h) if clipped else h_step * fac
        err_prev = max(err, 1e-4)
        rejected = False
        t, y, f0, comp = t_new, y_new, f_new, comp_new
        if end_hit:
            grid_index += 1
            times.append(t)
            states.append(y.copy())
            residuals.append(float(residual_fn(t, y)))
            if t >= t_end:
                return finish(end_reason)


def _check_start(problem: ProblemSpec, ball: Ball):
    if ball.dim != problem.dim:
        raise ValueError("ball dimension does not match the problem")


def solve_ivp(field: PhiField, problem: ProblemSpec, ball: Ball,
              config: IntegrationConfig = IntegrationConfig()) -> Trajectory:
    """Integrate the flow from ``ball.center`` until convergence, ball exit or ``max_time``."""
    _check_start(problem, ball)
    return integrate_flow(field.evaluate, ball.center, lambda t, u: problem.residual(u), config,
                          ball=ball)


def solve_to_finite_horizon(field: PhiField, problem: ProblemSpec, ball: Ball, T: float,
                            config: IntegrationConfig = IntegrationConfig()) -> Trajectory:
    """Integrate on ``[0, T]`` without residual stopping; exit reason FiniteHorizonReached."""
    _check_start(problem, ball)
    if T < 0:
        raise ValueError("horizon must be nonnegative")
    cfg = config if T <= 0 or config.record_every <= T else config.replace(record_every=T)
    return integrate_flow(field.evaluate, ball.center, lambda t, u: problem.residual(u), cfg,
                          ball=ball, t_end=T, residual_stop=0.0,
                          end_reason=ExitReason.FINITE_HORIZON_REACHED)
