"""Exception hierarchy shared by all modules.

Each class maps onto one CLI exit code (see ``longirisk.cli``): config and
usage problems exit 1, data problems exit 2, numeric failures exit 3.
"""


class LongiRiskError(Exception):
    exit_code = 2


class ConfigError(LongiRiskError, ValueError):
    exit_code = 1


class DimensionError(LongiRiskError, ValueError):
    exit_code = 3


class ContractError(LongiRiskError, RuntimeError):
    exit_code = 3


class InvalidMaskError(LongiRiskError, ValueError):
    exit_code = 3


class NumericError(LongiRiskError, FloatingPointError):
    exit_code = 3


class SplitError(LongiRiskError, ValueError):
    pass


class ManifestParseError(LongiRiskError, ValueError):
    pass


class ValidationError(LongiRiskError, ValueError):
    pass


class FormatError(LongiRiskError, ValueError):
    pass


class WeightingError(LongiRiskError, ValueError):
    pass


class UndefinedMetricError(LongiRiskError, ValueError):
    pass


class EvaluationError(LongiRiskError, RuntimeError):
    pass


class UnsupportedModeError(LongiRiskError, ValueError):
    pass


class CheckpointError(LongiRiskError, ValueError):
    pass
