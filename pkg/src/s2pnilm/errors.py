"""Exception hierarchy. ``exit_code`` is what the CLI returns for each family."""


class S2PError(Exception):
    exit_code = 1


class ConfigError(S2PError):
    """Bad configuration, layout or plan."""

    exit_code = 2


class LayoutError(ConfigError):
    pass


class SpecError(ConfigError):
    """Malformed layer stack or shape algebra failure."""


class SelectorError(ConfigError):
    pass


class PlanError(ConfigError):
    """Transfer plan incompatible with the source checkpoint or data."""


class DataError(S2PError):
    exit_code = 3


class EmptyInputError(DataError):
    pass


class UnsupportedUpsampleError(DataError):
    pass


class NoOverlapError(DataError):
    pass


class UndefinedMetricError(DataError):
    """Metric denominator is zero."""


class DegenerateShareError(DataError):
    pass


class ShapeError(S2PError, ValueError):
    pass


class CheckpointError(S2PError):
    exit_code = 4
