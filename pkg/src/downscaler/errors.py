"""Exception types. Each maps to a CLI exit code."""


class DownscalerError(Exception):
    exit_code = 1


class ConfigError(DownscalerError, ValueError):
    exit_code = 2


class ShapeError(DownscalerError, ValueError):
    """Raised with the name of the offending dimension."""

    exit_code = 3

    def __init__(self, what, expected, got):
        self.what, self.expected, self.got = what, expected, got
        super().__init__(f"{what}: expected {expected}, got {got}")


class FormatError(DownscalerError, ValueError):
    exit_code = 3


class NumericError(DownscalerError, FloatingPointError):
    exit_code = 4
