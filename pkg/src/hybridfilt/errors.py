"""Exception hierarchy.

Validation problems (bad input, bad configuration) derive from
:class:`ValidationError`; numerical breakdowns derive from
:class:`NumericalError`. The CLI maps the two families to exit codes 1 and 2.
"""


class ValidationError(ValueError):
    pass


class ConfigurationError(ValidationError):
    pass


class ParameterOutOfBoxError(ValidationError):
    pass


class NumericalError(ArithmeticError):
    pass


class ModelEvaluationError(NumericalError):
    """A rate, drift or multiplier evaluated to a non-finite value."""

    def __init__(self, message, i=None, j=None, y=None):
        super().__init__(message)
        self.i = i
        self.j = j
        self.y = y


class SingularLikelihoodError(NumericalError):
    """The two measures are not equivalent on the observed path."""


class SingularStatisticsError(NumericalError):
    """Sufficient statistics do not determine a finite maximizer."""


class StepTooLargeError(NumericalError):
    """Time step too coarse for the discrete transition matrix to be stochastic."""
