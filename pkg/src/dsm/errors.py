"""Exception hierarchy for the solver."""


class DSMError(Exception):
    """Base class for every error raised by this package."""


class StencilFailure(DSMError):
    def __init__(self, coordinate, point):
        self.coordinate = coordinate
        self.point = point
        super().__init__(
            f"non-finite F value on finite-difference stencil along coordinate {coordinate}"
        )


class SingularJacobian(DSMError):
    def __init__(self, u, condition):
        self.u = u
        self.condition = condition
        super().__init__(f"Jacobian is numerically singular (condition estimate {condition:.3e})")


class SingularNormalEquations(DSMError):
    def __init__(self, u, condition):
        self.u = u
        self.condition = condition
        super().__init__(f"normal matrix J^T J is singular (condition estimate {condition:.3e})")


class DegenerateDescentDirection(DSMError):
    pass


class StepFailure(DSMError):
    """Integrator could not advance. ``trajectory`` holds what was computed so far."""

    def __init__(self, message, t, trajectory=None):
        self.t = t
        self.trajectory = trajectory
        super().__init__(f"{message} at t={t:.6g}")


class DivergentTailIntegral(DSMError):
    pass


class IncompleteCertificate(DSMError):
    pass


class HorizonNotReached(DSMError):
    pass


class InconsistentRightHandSide(DSMError):
    def __init__(self, index, value):
        self.index = index
        self.value = value
        super().__init__(
            f"right-hand side has component {value!r} on null-space index {index}; "
            "f is not in the range of A"
        )
