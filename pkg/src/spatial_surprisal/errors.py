"""Exception hierarchy.

Every error carries the CLI exit code it maps to: 1 for I/O and format
problems, 2 for degenerate inputs, 3 for infeasible configurations.
"""


class SpatialSurprisalError(Exception):
    exit_code = 2


class InputError(SpatialSurprisalError):
    exit_code = 1


class DomainError(SpatialSurprisalError):
    exit_code = 2


class InfeasibleError(SpatialSurprisalError):
    exit_code = 3


class InvalidDimension(InfeasibleError, ValueError):
    pass


class InvalidGraph(DomainError, ValueError):
    pass


class PerturbationInfeasible(InfeasibleError, ValueError):
    pass


class EmptySample(DomainError, ValueError):
    pass


class InvalidValue(DomainError, ValueError):
    pass


class SchemeSizeMismatch(DomainError, ValueError):
    pass


class ZeroVariance(DomainError, ArithmeticError):
    pass


class InvalidIndex(DomainError, IndexError):
    pass


class DegenerateScheme(DomainError, ValueError):
    pass


class CorrectionInfeasible(InfeasibleError, ValueError):
    pass


class TooManyArrangements(InfeasibleError, ValueError):
    pass


class DegenerateDistribution(DomainError, ValueError):
    pass


class RawSamplesRequired(DomainError, ValueError):
    pass


class FormatError(InputError, ValueError):
    pass


class InvalidTiling(InfeasibleError, ValueError):
    pass
