"""
Error hierarchy - every failure the tool reports maps to an exit code
"""


class NetgraphError(Exception):
    """Base class for all reported failures"""
    exit_code = 1


class ValidationError(NetgraphError):
    """Invalid input: graph, coefficients, scenario or parameters"""
    exit_code = 2


class NumericalError(NetgraphError):
    """A computation failed or produced an inconsistent result"""
    exit_code = 3


# Graph structure

class NotSimpleError(ValidationError):
    pass


class DisconnectedError(ValidationError):
    pass


class BadWeightRowError(ValidationError):
    pass


class WeightSupportMismatchError(ValidationError):
    pass


class MissingWeightsError(ValidationError):
    pass


class CycleEnumerationOverflowError(ValidationError):
    pass


class HasSinkOrSourceError(ValidationError):
    pass


class NotStronglyConnectedError(ValidationError):
    pass


# Coefficients, boundaries, grids

class ShapeMismatchError(ValidationError):
    pass


class NonPositiveCoefficientError(ValidationError):
    pass


class IncommensurableLengthsError(ValidationError):
    pass


class NonGridTimeError(ValidationError):
    pass


class NegativeBoundaryEntryError(ValidationError):
    pass


# Models

class SupportMismatchError(ValidationError):
    pass


class NotColumnStochasticError(ValidationError):
    pass


class NegativeEntryError(ValidationError):
    pass


# Spectral preconditions

class NotNonnegativeError(ValidationError):
    pass


class NotIrreducibleError(ValidationError):
    pass


class LdqFailsError(ValidationError):
    pass


# Numerical failures

class EigensolverFailureError(NumericalError):
    pass


EigenFailureError = EigensolverFailureError


class SingularBoundaryRowsError(NumericalError):
    pass


class LinearSolveFailureError(NumericalError):
    pass


class KernelDimensionNotOneError(NumericalError):
    pass


class SemisimplicityFailureError(NumericalError):
    pass


class PeriodMismatchError(NumericalError):
    """The two period algorithms disagree"""


# Scenario files and artifacts

class ScenarioParseError(ValidationError):
    """Malformed JSON, with the position of the first problem"""

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class SchemaError(ValidationError):
    pass


class ReportIoError(ValidationError):
    pass
