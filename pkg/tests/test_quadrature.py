import math

import pytest

from dsm import quadrature
from dsm.errors import DivergentTailIntegral

EULER_GAMMA = 0.5772156649015329


def exp_integral_e1(x, terms=60):
    """Series E1(x) = -gamma - ln x - sum_k (-x)^k / (k k!)."""
    total = 0.0
    term = 1.0
    for k in range(1, terms):
        term *= -x / k
        total += term / k
    return -EULER_GAMMA - math.log(x) - total


def test_finite_interval():
    assert quadrature.integrate_finite(lambda x: x * x, 0.0, 1.0) == pytest.approx(1 / 3, rel=1e-13)
    assert quadrature.integrate_finite(math.cos, 1.0, 1.0) == 0.0
    assert quadrature.integrate_finite(lambda x: 1.0, 2.0, 0.0) == pytest.approx(-2.0)


def test_exponential_tail():
    assert quadrature.integrate_tail(lambda x: math.exp(-x), 1.0) == pytest.approx(math.exp(-1),
                                                                                    rel=1e-10)


def test_algebraic_tail():
    assert quadrature.integrate_tail(lambda x: (1 + x) ** -2) == pytest.approx(1.0, rel=1e-8)


def test_exponential_integral_against_series():
    value = quadrature.integrate_tail(lambda s: math.exp(-s) / (1 + s))
    oracle = math.e * exp_integral_e1(1.0)
    assert oracle == pytest.approx(0.596347, abs=1e-6)
    assert value == pytest.approx(oracle, rel=1e-10)


@pytest.mark.parametrize("f", [lambda x: 1.0 / (1.0 + x), lambda x: 1.0, lambda x: (1 + x) ** -0.5])
def test_divergent_tails(f):
    with pytest.raises(DivergentTailIntegral):
        quadrature.integrate_tail(f)


def test_identically_zero_tail():
    assert quadrature.integrate_tail(lambda x: 0.0, 5.0) == 0.0
