"""Exception hierarchy. Each class maps to one CLI exit code."""


class CondCorrError(Exception):
    exit_code = 2


class InputError(CondCorrError, ValueError):
    """Bad data, bad arguments or a malformed config file."""

    exit_code = 1


class ConfigError(InputError):
    pass


class NumericalError(CondCorrError, ArithmeticError):
    """Estimation or filtering broke down (non-finite values, non-PD matrices)."""

    exit_code = 2


class FetchError(CondCorrError, OSError):
    """Remote retrieval failed. Distinct from parse failures so callers can retry."""

    exit_code = 3

    def __init__(self, message, retriable=True):
        super().__init__(message)
        self.retriable = retriable


class PipelineError(CondCorrError):
    """A pipeline stage failed; carries the stage and (when known) the series."""

    def __init__(self, stage, message, series=None, cause=None):
        where = stage if series is None else f"{stage}[{series}]"
        super().__init__(f"{where}: {message}")
        self.stage = stage
        self.series = series
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 2)
