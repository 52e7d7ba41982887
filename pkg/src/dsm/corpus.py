"""Built-in problems with oracle roots, recommended balls and flows."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import mpmath
import numpy as np

from .core import Ball, ProblemSpec, RateFunctions
from .fields import FieldKind, PhiField, scaled_newton_field
from .linreg import AlphaSchedule, SpectralOperator
from .monotone import MonotoneProblem

ALL_CLASSICAL = tuple(k for k in FieldKind if k is not FieldKind.CUSTOM)


@dataclass(frozen=True)
class SpectralSetup:
    op: SpectralOperator
    f: np.ndarray
    u0: np.ndarray


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    problem: Union[ProblemSpec, MonotoneProblem, SpectralSetup]
    recommended_ball: Ball
    recommended_fields: tuple
    oracle_root: np.ndarray
    notes: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def category(self) -> str:
        if isinstance(self.problem, ProblemSpec):
            return "nonlinear"
        if isinstance(self.problem, MonotoneProblem):
            return "monotone"
        return "spectral"

    def oracle_residual(self) -> float:
        p = self.problem
        y = self.oracle_root
        if isinstance(p, ProblemSpec):
            return p.residual(y)
        if isinstance(p, MonotoneProblem):
            return float(np.linalg.norm(p.A(y) - p.f))
        return float(np.linalg.norm(p.op.apply(y) - p.f))

    def custom_field(self) -> Optional[PhiField]:
        """Field for entries that exercise a non-classical flow (exponent ``a != 2``)."""
        a = self.extras.get("a")
        if a is None:
            return None
        return scaled_newton_field(self.problem, a, g1=lambda t: self.extras.get("g1", 1.0),
                                   contact_width=self.extras.get("contact_width", 1e-4))

    def exponent_rates(self, m1: float, g0: Optional[float] = None) -> RateFunctions:
        """Rates for the scaled-Newton entries, with g1 constant.

        ``|Phi| = g1 |F|^(a-2) |F'^-1 F| <= m1 g1 |F|^(a-1)``. For a < 2 this is
        the ``b = a - 1`` form with ``g2 = m1 g1``. For a > 2 the extra factor
        ``|F|^(a-2)`` is bounded by the algebraic envelope ``h(t)``, giving
        ``b = 1`` and ``g2(t) = m1 g1 h(t)^(a-2)``; this needs ``g0``.
        """
        a = float(self.extras["a"])
        g1 = float(self.extras.get("g1", 1.0))
        if a <= 2.0:
            return RateFunctions(g1=lambda t: g1, g2=lambda t: m1 * g1, a=a, b=a - 1.0,
                                 integral_g1=lambda t: g1 * t)
        if g0 is None:
            raise ValueError("g0 is required for a > 2")

        def g2(t):
            h = (g0 ** (2.0 - a) + (a - 2.0) * g1 * t) ** (1.0 / (2.0 - a))
            return m1 * g1 * h ** (a - 2.0)

        return RateFunctions(g1=lambda t: g1, g2=g2, a=a, b=1.0, integral_g1=lambda t: g1 * t)


def damped_newton_mp(F, J, u0, tol=1e-30, dps=50, max_iter=200):
    """Damped Newton iteration in ``dps``-digit arithmetic; returns a float array.

    ``F`` and ``J`` take and return mpmath matrices.
    """
    with mpmath.workdps(dps):
        u = mpmath.matrix([mpmath.mpf(x) for x in u0])
        fu = F(u)
        for _ in range(max_iter):
            if mpmath.norm(fu) < tol:
                break
            step = mpmath.lu_solve(J(u), fu)
            lam = mpmath.mpf(1)
            while True:
                trial = u - lam * step
                ft = F(trial)
                if mpmath.norm(ft) < (1 - lam / 4) * mpmath.norm(fu) or lam < mpmath.mpf(2) ** -40:
                    break
                lam /= 2
            u, fu = trial, ft
        return np.array([float(x) for x in u])


def _twobytwo_F(u):
    return np.array([u[0] ** 2 + u[1] - 3.0, u[0] - u[1]])


def _twobytwo_J(u):
    return np.array([[2.0 * u[0], 1.0], [1.0, -1.0]])


def _twobytwo_root():
    def F(u):
        return mpmath.matrix([u[0] ** 2 + u[1] - 3, u[0] - u[1]])

    def J(u):
        return mpmath.matrix([[2 * u[0], 1], [1, -1]])

    return damped_newton_mp(F, J, [1.0, 1.0])


def _scalar(name, F, J, root, **kw):
    return ProblemSpec(name, 1, lambda u: np.array([F(u[0])]), lambda u: np.array([[J(u[0])]]),
                       oracle_root=np.array([root]), **kw)


def _build():
    twobytwo_root = _twobytwo_root()
    twobytwo = ProblemSpec("twobytwo", 2, _twobytwo_F, _twobytwo_J, oracle_root=twobytwo_root)
    affine = _scalar("affine-1d", lambda x: x - 1.0, lambda x: 1.0, 1.0)
    scaled = _scalar("scaled-affine", lambda x: 2.0 * x - 2.0, lambda x: 2.0, 1.0)
    cubic = _scalar("cubic-monotone", lambda x: x + x**3 - 2.0, lambda x: 1.0 + 3.0 * x**2, 1.0)
    quad = _scalar("modified-newton-fail", lambda x: x * x - 4.0, lambda x: 2.0 * x, 2.0)

    entries = [
        CorpusEntry("affine-1d", affine, Ball([0.0], 3.0), ALL_CLASSICAL, np.array([1.0]),
                    "F(u) = u - 1; Newton flow u(t) = 1 - exp(-t) from u0 = 0"),
        CorpusEntry("scaled-affine", scaled, Ball([2.0], 3.0), ALL_CLASSICAL, np.array([1.0]),
                    "F(u) = 2u - 2; simple-iteration flow u(t) = 1 + exp(-2t) from u0 = 2"),
        CorpusEntry("cubic-monotone", cubic, Ball([0.0], 3.0),
                    (FieldKind.NEWTON, FieldKind.SIMPLE_ITERATION, FieldKind.DESCENT),
                    np.array([1.0]), "F(u) = u + u^3 - 2, F' = 1 + 3u^2 >= 1"),
        CorpusEntry("twobytwo", twobytwo, Ball([1.35, 1.25], 0.5),
                    tuple(k for k in ALL_CLASSICAL if k is not FieldKind.SIMPLE_ITERATION),
                    twobytwo_root,
                    "F(u) = (u1^2 + u2 - 3, u1 - u2); root u1 = u2 = (sqrt(13) - 1)/2"),
        CorpusEntry("modified-newton-fail", quad, Ball([3.0], 1.5),
                    (FieldKind.MODIFIED_NEWTON,), np.array([2.0]),
                    "negative control: 4 m0^2 M2 |F(u0)| > 1 for F(u) = u^2 - 4 at u0 = 3",
                    extras={"expect_certificate": False}),
        CorpusEntry("scaled-newton-a1", twobytwo, Ball([1.5, 1.2], 1.0), (FieldKind.CUSTOM,),
                    twobytwo_root,
                    "Newton direction scaled by g1/|F|: (F' Phi, F) = -|F|, finite-time extinction",
                    extras={"a": 1.0, "g1": 1.0, "contact_width": 1e-4}),
        CorpusEntry("scaled-newton-a3", affine, Ball([0.0], 3.0), (FieldKind.CUSTOM,),
                    np.array([1.0]),
                    "Newton direction scaled by g1 |F|: (F' Phi, F) = -|F|^3, |F(u(t))| = 1/(1+t)",
                    extras={"a": 3.0, "g1": 1.0}),
        CorpusEntry("psd-linear",
                    SpectralSetup(SpectralOperator([1.0, 0.0]), np.array([1.0, 0.0]),
                                  np.array([0.0, 3.0])),
                    Ball([0.0, 3.0], 10.0), (), np.array([1.0, 0.0]),
                    "A = diag(1, 0), f = (1, 0): limit y - Py + P u0 = (1, 3) without regularisation",
                    extras={"schedule": AlphaSchedule.zero()}),
        CorpusEntry("monotone-cubic",
                    MonotoneProblem(lambda u: u + u**3, np.array([2.0]), 1,
                                    lambda u: np.array([[1.0 + 3.0 * u[0] ** 2]]),
                                    oracle_root=np.array([1.0]), name="monotone-cubic"),
                    Ball([0.0], 3.0), (), np.array([1.0]),
                    "A(u) = u + u^3, f = 2, alpha(t) = (1 + t)^(-1/2), u0 = 0",
                    extras={"schedule": AlphaSchedule.power(-0.5), "u0": np.array([0.0])}),
        CorpusEntry("monotone-psd",
                    MonotoneProblem(lambda u: np.array([u[0], 0.0]), np.array([1.0, 0.0]), 2,
                                    lambda u: np.diag([1.0, 0.0]),
                                    oracle_root=np.array([1.0, 0.0]), name="monotone-psd"),
                    Ball([0.5, 2.0], 3.0), (), np.array([1.0, 0.0]),
                    "A = diag(1, 0): roots (1, s); minimal-norm root (1, 0)",
                    extras={"schedule": AlphaSchedule.power(-0.5), "u0": np.array([0.5, 2.0])}),
    ]
    return {e.name: e for e in entries}


_CORPUS = None


def corpus() -> list:
    """All entries, sorted by name."""
    global _CORPUS
    if _CORPUS is None:
        _CORPUS = _build()
    return [_CORPUS[k] for k in sorted(_CORPUS)]


def get(name: str) -> CorpusEntry:
    corpus()
    try:
        return _CORPUS[name]
    except KeyError:
        raise KeyError(f"unknown corpus entry {name!r}") from None
