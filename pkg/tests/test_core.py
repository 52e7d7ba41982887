import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsm.core import (Ball, Certificate, Check, ExitReason, ProblemSpec, RateFunctions, Trajectory,
                      as_state, finite_difference_jacobian, operator_norm, rates_from_spec,
                      relative_deviation, scalar_function, vector_norm)
from dsm.errors import DivergentTailIntegral, StencilFailure
from dsm import quadrature


@pytest.mark.parametrize("u, expected", [([0, 0, 0], 0.0), ([3, 4], 5.0), ([1, 1, 1, 1], 2.0)])
def test_vector_norm_examples(u, expected):
    assert vector_norm(u) == expected


def test_as_state_rejects_bad_input():
    with pytest.raises(ValueError):
        as_state([1.0, math.nan])
    with pytest.raises(ValueError):
        as_state([])
    with pytest.raises(ValueError):
        as_state([1.0, 2.0], dim=3)


def test_fd_jacobian_identity():
    p = ProblemSpec("id", 2, lambda u: u)
    np.testing.assert_allclose(finite_difference_jacobian(p, [0.3, -7.0]), np.eye(2), atol=1e-9)


def test_fd_jacobian_square_map():
    p = ProblemSpec("sq", 2, lambda u: np.array([u[0] ** 2, u[1]]))
    np.testing.assert_allclose(finite_difference_jacobian(p, [3.0, 5.0]), [[6, 0], [0, 1]],
                               atol=1e-7)


def test_fd_jacobian_cubic_against_analytic():
    p = ProblemSpec("cubic", 1, lambda u: u + u**3 - 2.0)
    assert abs(finite_difference_jacobian(p, [1.0])[0, 0] - 4.0) <= 1e-6


def test_fd_stencil_failure_names_coordinate():
    def F(u):
        with np.errstate(invalid="ignore"):
            return np.array([u[0], np.sqrt(u[1])])

    p = ProblemSpec("sqrt", 2, F)
    with pytest.raises(StencilFailure) as info:
        finite_difference_jacobian(p, [1.0, 0.0])
    assert info.value.coordinate == 1


def test_jacobian_falls_back_to_fd():
    p = ProblemSpec("lin", 2, lambda u: np.array([2 * u[0] + u[1], -u[1]]))
    assert not p.has_analytic_jacobian
    np.testing.assert_allclose(p.jacobian([1.0, 1.0]), [[2, 1], [0, -1]], atol=1e-8)


def test_problem_dimension_mismatch():
    p = ProblemSpec("bad", 2, lambda u: np.array([1.0]))
    with pytest.raises(ValueError):
        p.F([0.0, 0.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_fd_matches_analytic_on_random_smooth_maps(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(3, 3))
    c = rng.normal(size=3)

    def F(u):
        return A @ u + c * np.sin(u) + 0.1 * u**3

    def J(u):
        return A + np.diag(c * np.cos(u) + 0.3 * u**2)

    p = ProblemSpec("rand", 3, F, J)
    u = rng.uniform(-2, 2, size=3)
    assert relative_deviation(finite_difference_jacobian(p, u), J(u)) <= 1e-4


def test_operator_norm_and_inverse_identity():
    rng = np.random.default_rng(1)
    M = rng.normal(size=(50, 50)) + 10 * np.eye(50)
    assert operator_norm(M) == pytest.approx(np.linalg.svd(M, compute_uv=False)[0])
    assert relative_deviation(np.linalg.inv(M) @ M, np.eye(50)) <= 1e-10


def test_ball_contains():
    b = Ball([0.0, 0.0], 1.0)
    assert b.contains([0.6, 0.8])
    assert not b.contains([0.6, 0.81])
    with pytest.raises(ValueError):
        Ball([0.0], 0.0)


def test_check_margin_arithmetic():
    c = Check("x", 0.8, 1.0)
    assert c.margin == 1.0 - 0.8
    assert c.satisfied
    bad = Check("y", 1.6, 1.0)
    assert not bad.satisfied and bad.margin < 0
    assert Certificate([c]).passed and not Certificate([c, bad]).passed
    for lhs in np.linspace(-2, 2, 41):
        chk = Check("z", float(lhs), 0.3)
        assert chk.satisfied == (chk.margin >= 0)


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory([0.0, 0.0], [[1.0], [1.0]], [1.0, 1.0], ExitReason.MAX_TIME_REACHED)
    with pytest.raises(ValueError):
        Trajectory([0.0, 1.0], [[1.0]], [1.0, 1.0], ExitReason.MAX_TIME_REACHED)
    t = Trajectory([0.0], [[2.0]], [1.0], ExitReason.RESIDUAL_CONVERGED)
    assert len(t) == 1 and t.final_time == 0.0 and t.final_residual == 1.0


@pytest.mark.parametrize("desc", [
    {"kind": "constant", "value": 0.7},
    {"kind": "power", "scale": 2.0, "power": -0.5},
    {"kind": "power", "scale": 1.0, "power": -1.0},
    {"kind": "exponential", "scale": 3.0, "rate": 0.25},
])
def test_closed_forms_agree_with_quadrature(desc):
    f, F = scalar_function(desc)
    for t in [0.5, 3.0, 17.0, 100.0]:
        q = quadrature.integrate_finite(f, 0.0, t)
        assert abs(F(t) - q) <= 1e-8 * max(abs(q), 1e-30)


def test_constant_rates_tail_closed_form_matches_quadrature():
    r = RateFunctions.constant(0.5, 2.0)
    generic = RateFunctions(g1=r.g1, g2=r.g2)
    for t in [0.0, 1.0, 10.0, 40.0]:
        assert generic.tail_G(t) == pytest.approx(r.tail_G(t), rel=1e-8)


def test_rates_from_spec_and_divergent_tail():
    r = rates_from_spec({"g1": {"kind": "power", "power": -1.0},
                         "g2": {"kind": "constant", "value": 1.0}})
    with pytest.raises(DivergentTailIntegral):
        r.tail_G(0.0)
    with pytest.raises(ValueError):
        scalar_function({"kind": "sinusoid"})
