import math

import numpy as np
import pytest

from dsm import corpus
from dsm.audit import estimate_constants, finite_time_horizon
from dsm.core import Ball, ExitReason, ProblemSpec
from dsm.errors import DSMError, StepFailure
from dsm.fields import (FieldKind, PhiField, build_field, newton_field, scaled_newton_field,
                        simple_iteration_field)
from dsm.integrate import IntegrationConfig, integrate_flow, solve_ivp, solve_to_finite_horizon


def scalar_affine(slope, root):
    return ProblemSpec("aff", 1, lambda u: slope * (u - root), lambda u: np.array([[slope]]))


def test_config_validation():
    with pytest.raises(ValueError):
        IntegrationConfig(rel_tol=0.0)
    with pytest.raises(ValueError):
        IntegrationConfig(max_time=1.0, record_every=2.0)
    with pytest.raises(ValueError):
        IntegrationConfig(residual_stop=-1.0)
    assert IntegrationConfig().replace(max_time=3.0).max_time == 3.0


def test_newton_flow_closed_form():
    p = scalar_affine(1.0, 1.0)
    traj = solve_ivp(newton_field(p), p, Ball([0.0], 3.0), IntegrationConfig(max_time=1.0))
    assert traj.exit_reason is ExitReason.MAX_TIME_REACHED
    assert traj.final_time == 1.0
    assert abs(traj.final_state[0] - (1 - math.exp(-1))) <= 1e-6
    expected = 1 - np.exp(-traj.times)
    assert np.max(np.abs(traj.states[:, 0] - expected)) <= 1e-8


def test_simple_iteration_closed_form():
    p = scalar_affine(2.0, 1.0)
    traj = solve_ivp(simple_iteration_field(p), p, Ball([2.0], 3.0),
                     IntegrationConfig(max_time=2.0))
    np.testing.assert_allclose(traj.states[:, 0], 1 + np.exp(-2 * traj.times), rtol=1e-8)
    np.testing.assert_allclose(traj.residuals, 2 * np.exp(-2 * traj.times), rtol=1e-7)


def test_twobytwo_newton_reaches_oracle():
    entry = corpus.get("twobytwo")
    traj = solve_ivp(newton_field(entry.problem), entry.problem, entry.recommended_ball)
    assert traj.exit_reason is ExitReason.RESIDUAL_CONVERGED
    assert traj.final_residual <= 1e-10 * (1 + 1e-6)
    assert np.linalg.norm(traj.final_state - entry.oracle_root) <= 1e-6


def test_record_grid_and_residual_recomputation():
    entry = corpus.get("twobytwo")
    p = entry.problem
    traj = solve_ivp(newton_field(p), p, entry.recommended_ball, IntegrationConfig(max_time=3.0))
    assert traj.times[0] == 0.0
    np.testing.assert_allclose(traj.times[:301], np.arange(301) * 0.01, atol=1e-12)
    for u, r in zip(traj.states, traj.residuals):
        assert abs(p.residual(u) - r) / max(r, 1e-30) <= 1e-12


def test_finite_horizon_scalar():
    # F(u) = u - 1 from u0 = -1: |F(u0)| = 2, so T = 2 for a = 1, g1 = 1
    p = scalar_affine(1.0, 1.0)
    fld = scaled_newton_field(p, 1.0)
    traj = solve_to_finite_horizon(fld, p, Ball([-1.0], 5.0), 2.0, IntegrationConfig())
    assert traj.exit_reason is ExitReason.FINITE_HORIZON_REACHED
    assert traj.final_time == 2.0
    assert traj.final_residual <= 1e-3


def test_finite_horizon_zero():
    p = scalar_affine(1.0, 1.0)
    traj = solve_to_finite_horizon(scaled_newton_field(p, 1.0), p, Ball([1.0], 1.0), 0.0)
    assert len(traj) == 1 and traj.exit_reason is ExitReason.FINITE_HORIZON_REACHED


def test_scaled_newton_a1_linear_decay_near_horizon():
    entry = corpus.get("scaled-newton-a1")
    p, ball = entry.problem, entry.recommended_ball
    consts = estimate_constants(p, ball)
    g0 = p.residual(ball.center)
    T = finite_time_horizon(entry.exponent_rates(consts.m1), g0)
    traj = solve_to_finite_horizon(entry.custom_field(), p, ball, T,
                                   IntegrationConfig(record_every=T / 200))
    window = (traj.times > 0.5 * T) & (traj.times < 0.95 * T)
    slope = np.polyfit(traj.times[window], traj.residuals[window], 1)[0]
    assert slope == pytest.approx(-1.0, abs=1e-6)


def test_left_ball_event():
    p = scalar_affine(1.0, 10.0)
    outward = PhiField(lambda t, u: np.array([1.0]), FieldKind.CUSTOM)
    ball = Ball([0.0], 0.5)
    traj = solve_ivp(outward, p, ball, IntegrationConfig(max_time=5.0))
    assert traj.exit_reason is ExitReason.LEFT_BALL
    dist = np.abs(traj.states[:, 0])
    assert dist[-1] >= 0.5 * (1 - 1e-6)
    assert np.all(dist[:-1] <= 0.5)
    assert traj.final_time == pytest.approx(0.5, abs=1e-8)


def test_residual_event_time_localised():
    p = scalar_affine(1.0, 1.0)
    cfg = IntegrationConfig(residual_stop=1e-3)
    traj = solve_ivp(newton_field(p), p, Ball([0.0], 3.0), cfg)
    assert traj.exit_reason is ExitReason.RESIDUAL_CONVERGED
    assert traj.final_time == pytest.approx(math.log(1e3), abs=1e-8)


def test_step_failure_carries_partial_trajectory():
    p = scalar_affine(1.0, 1.0)
    cfg = IntegrationConfig(max_steps=5)
    with pytest.raises(StepFailure) as info:
        solve_ivp(newton_field(p), p, Ball([0.0], 3.0), cfg)
    traj = info.value.trajectory
    assert traj.exit_reason is ExitReason.STEP_FAILURE and len(traj) >= 1


def test_step_underflow_on_blowup():
    # du/dt = u^2 from u0 = 1 blows up at t = 1
    p = scalar_affine(1.0, 0.0)
    fld = PhiField(lambda t, u: u * u, FieldKind.CUSTOM)
    with pytest.raises(StepFailure) as info:
        solve_ivp(fld, p, Ball([1.0], math.inf), IntegrationConfig(max_time=2.0))
    assert info.value.t == pytest.approx(1.0, abs=1e-3)


def test_field_error_reports_time():
    class Boom(DSMError):
        pass

    def evaluate(t, u):
        if u[0] < 0.5:
            raise Boom("field undefined")
        return np.array([-1.0])

    p = scalar_affine(1.0, 0.0)
    with pytest.raises(Boom) as info:
        solve_ivp(PhiField(evaluate, FieldKind.CUSTOM), p, Ball([1.0], 3.0))
    assert 0.0 < info.value.t <= 0.5 + 1e-9


def test_residual_stop_at_start():
    p = scalar_affine(1.0, 1.0)
    traj = solve_ivp(newton_field(p), p, Ball([1.0], 1.0))
    assert len(traj) == 1 and traj.exit_reason is ExitReason.RESIDUAL_CONVERGED


def classical_pairs():
    for e in corpus.corpus():
        if e.category == "nonlinear" and e.extras.get("expect_certificate") is not False:
            for k in e.recommended_fields:
                if k is not FieldKind.CUSTOM:
                    yield e.name, k


@pytest.mark.parametrize("name, kind", list(classical_pairs()))
def test_residuals_non_increasing(name, kind):
    entry = corpus.get(name)
    p, ball = entry.problem, entry.recommended_ball
    fld = build_field(kind, p, ball.center, estimate_constants(p, ball))
    traj = solve_ivp(fld, p, ball)
    assert np.all(np.diff(traj.residuals) <= 1e-9)


def test_integrate_flow_is_reentrant():
    from concurrent.futures import ThreadPoolExecutor
    entry = corpus.get("twobytwo")
    p = entry.problem
    fld = newton_field(p)

    def run(_):
        return solve_ivp(fld, p, entry.recommended_ball).final_state

    with ThreadPoolExecutor(4) as pool:
        results = list(pool.map(run, range(4)))
    for r in results[1:]:
        assert np.array_equal(r, results[0])


def test_integrate_flow_generic_rhs():
    cfg = IntegrationConfig(max_time=1.0, residual_stop=0.0)
    traj = integrate_flow(lambda t, y: np.array([y[1], -y[0]]), [0.0, 1.0],
                          lambda t, y: 0.0, cfg)
    assert traj.final_state == pytest.approx([math.sin(1.0), math.cos(1.0)], abs=1e-8)
