"""Exception hierarchy shared by all ruinlab modules."""


class RuinlabError(Exception):
    """Base class for every error raised by ruinlab."""


class DomainError(RuinlabError, ValueError):
    """A test function was evaluated outside its domain."""


class QuadratureFailure(RuinlabError, ArithmeticError):
    """The jump-integral quadrature did not reach the requested tolerance."""


class RegimeError(RuinlabError, ValueError):
    """Model parameters are outside the regime an operation is defined for."""


class InvalidConfig(RuinlabError, ValueError):
    """A simulation or experiment configuration is malformed."""


class OrderError(RuinlabError, ValueError):
    """Coupled initial capitals were given in the wrong order."""


class LevelError(RuinlabError, ValueError):
    """A passage level is not strictly below the initial capital."""


class IntervalError(RuinlabError, ValueError):
    """An exit interval is malformed or does not contain the start point."""
