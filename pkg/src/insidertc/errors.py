"""Exception hierarchy shared by the solvers."""


class ParameterError(ValueError):
    """Invalid model or numerical parameter; ``field`` names the culprit."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class NumericalError(RuntimeError):
    """A solver stage failed; ``stage`` identifies which one."""

    stage = "numerics"

    def __init__(self, message, **details):
        self.details = details
        super().__init__(f"[{self.stage}] {message}")


class BracketError(NumericalError):
    stage = "single-auction-bracket"


class MonotonicityError(NumericalError):
    stage = "monotonicity"


class SingularityError(NumericalError):
    stage = "fbode-singularity"


class IntegrationError(NumericalError):
    stage = "x1-integration"


class ShootingError(NumericalError):
    stage = "shooting"
