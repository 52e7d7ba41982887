"""Scalar quadrature helpers with an explicit rule for deciding divergence.

Finite intervals go to QUADPACK's adaptive Gauss-Kronrod (``scipy.integrate.quad``).
Semi-infinite tails ``int_t^inf f`` use the map ``x = t + s/(1 - s)`` with the
``s``-interval split dyadically at ``1 - 2**-k``; in ``x`` these are the windows
``[t + 2**k - 1, t + 2**(k+1) - 1]``, each integrated on its own.

Divergence rule: the tail is declared divergent when a partial sum exceeds
``DIVERGENCE_THRESHOLD``, or when after ``MAX_WINDOWS`` windows the window
contributions have stopped shrinking (consecutive ratio >= ``STALL_RATIO``).
Otherwise a geometrically shrinking remainder is extrapolated.
"""

import math

from scipy import integrate

from .errors import DivergentTailIntegral

DIVERGENCE_THRESHOLD = 1e12
MAX_WINDOWS = 64
STALL_RATIO = 0.999


def integrate_finite(f, a, b, epsrel=1e-12, epsabs=1e-15):
    """Integral of ``f`` over ``[a, b]`` (``a <= b``)."""
    if b == a:
        return 0.0
    if b < a:
        return -integrate_finite(f, b, a, epsrel, epsabs)
    value, _abserr, *_ = integrate.quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=500,
                                        full_output=1)
    return float(value)


def integrate_tail(f, t=0.0, epsrel=1e-12):
    """Integral of a nonnegative-ish ``f`` over ``[t, inf)``.

    Raises DivergentTailIntegral under the module's operational rule.
    """
    total = 0.0
    prev = None
    small_run = 0
    for k in range(MAX_WINDOWS):
        lo = t + (2.0**k - 1.0)
        hi = t + (2.0 ** (k + 1) - 1.0)
        w = integrate_finite(f, lo, hi, epsrel=epsrel)
        total += w
        if not math.isfinite(total) or abs(total) > DIVERGENCE_THRESHOLD:
            raise DivergentTailIntegral(
                f"partial integral over [{t}, {hi:.3g}] exceeds {DIVERGENCE_THRESHOLD:g}"
            )
        if abs(w) <= epsrel * abs(total) or (w == 0.0 and total == 0.0 and k >= 8):
            small_run += 1
            if small_run >= 2:
                return total
        else:
            small_run = 0
        ratio = None if prev in (None, 0.0) else abs(w) / abs(prev)
        prev = w
    if ratio is None or ratio >= STALL_RATIO:
        raise DivergentTailIntegral(
            f"tail contributions over [{t}, inf) are not decaying (window ratio {ratio})"
        )
    # geometric remainder of the windows not visited
    return total + prev * ratio / (1.0 - ratio)
