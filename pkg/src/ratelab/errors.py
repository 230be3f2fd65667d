"""Exception hierarchy shared by all ratelab modules."""


class RateLabError(Exception):
    """Base class for every error raised by ratelab."""


# flux
class DomainError(RateLabError, ValueError):
    pass


class UnsupportedModel(RateLabError, ValueError):
    pass


class ExtensionError(RateLabError, ValueError):
    pass


# bound
class InvalidParams(RateLabError, ValueError):
    pass


class NonParabolic(RateLabError, ValueError):
    pass


class ThresholdViolated(RateLabError, ValueError):
    pass


class NoFeasiblePoint(RateLabError, RuntimeError):
    pass


# solver
class NewtonDiverged(RateLabError, RuntimeError):
    pass


class NonParabolicState(RateLabError, RuntimeError):
    pass


class WrongForm(RateLabError, ValueError):
    pass


# verify
class MismatchedScenario(RateLabError, ValueError):
    pass


class DegenerateData(RateLabError, ValueError):
    pass


# scenario files
class ParseError(RateLabError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(RateLabError, ValueError):
    pass
