"""Exception hierarchy shared by every module."""


class FeasopsError(Exception):
    """Base class for all errors raised by feasops."""


class DimensionMismatch(FeasopsError, ValueError):
    pass


class MultiValuedProjection(FeasopsError, ValueError):
    """Projection onto a sphere requested at its center.

    ``stage`` names where in a composed operator the failure happened
    (e.g. ``"inner"`` or ``"outer"`` for a Douglas-Rachford step).
    """

    def __init__(self, message, stage=None):
        super().__init__(message if stage is None else f"{message} (stage: {stage})")
        self.stage = stage


class EmptyIntersection(FeasopsError, ValueError):
    pass


class EmptyRegion(FeasopsError, ValueError):
    pass


class BoundUndefined(FeasopsError, ValueError):
    """A closed-form bound was requested outside its parameter range."""


class PreconditionError(FeasopsError, ValueError):
    """A theorem hypothesis does not hold; ``violations`` lists them."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class InfeasibleExtension(FeasopsError, RuntimeError):
    """The minimax solver could not satisfy every ball constraint."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class BoundViolation(FeasopsError):
    """An inequality that should hold was observed to fail."""


class SampleConsistencyError(BoundViolation):
    """Two anchors violate the Lipschitz condition of a sample."""

    def __init__(self, message, pair=None, ratio=None):
        super().__init__(message)
        self.pair = pair
        self.ratio = ratio
