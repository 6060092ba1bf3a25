"""Exception types shared across the package."""


class WeatherGenError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(WeatherGenError):
    """Array or kernel dimensions do not line up; message names the axis."""


class GraphError(WeatherGenError):
    """Misuse of the recorded computation (backward before/after forward)."""


class NonFiniteError(WeatherGenError):
    """A value that must be finite is NaN or infinite."""


class DataError(WeatherGenError):
    """Malformed or inconsistent weather data."""


class GapError(DataError):
    """A missing calendar day between two dated records."""


class ConstraintError(DataError):
    """A physical constraint (maxt >= mint, radn/rain >= 0) is violated."""


class DegenerateDataError(DataError):
    """Zero variance where standardization needs spread."""


class DomainError(WeatherGenError):
    """Argument outside the mathematical domain of a density or transform."""


class PlanningError(WeatherGenError):
    """Architecture arithmetic cannot satisfy the requested constraints."""


class CheckpointError(WeatherGenError):
    """Base class for checkpoint file problems."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint was written by an incompatible format version."""


class CheckpointTruncatedError(CheckpointError):
    """Checkpoint file ends before the expected payload."""


class CheckpointChecksumError(CheckpointError):
    """Checkpoint payload does not match its trailing checksum."""


class GenerationError(WeatherGenError):
    """Invalid generation request (horizon/conditioning mismatch)."""


class EvaluationError(WeatherGenError):
    """Evaluation inputs do not match (date ranges, metric keys)."""


class ConfigError(WeatherGenError):
    """Run configuration file is missing keys or holds bad values."""
