"""Exception hierarchy.

Every exception carries the process exit code the CLI maps it to:
1 usage/configuration, 2 data, 3 estimation.
"""


class TriPoissonError(Exception):
    exit_code = 3


class ConfigurationError(TriPoissonError, ValueError):
    exit_code = 1


class DomainError(TriPoissonError, ValueError):
    exit_code = 2


class DataError(TriPoissonError, ValueError):
    exit_code = 2


class MissingDataError(DataError):
    pass


class GeometryError(DomainError):
    pass


class DesignError(DomainError):
    pass


class EstimationError(TriPoissonError, RuntimeError):
    exit_code = 3


class InitializationError(EstimationError):
    pass


class CapTooSmallError(EstimationError):
    pass
