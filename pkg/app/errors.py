"""
Exception types shared by the simulator modules
"""
from typing import Optional


class DrisError(Exception):
    """Base class for every error raised by the simulator"""


class ConfigParseError(DrisError, ValueError):
    """Malformed scenario text"""

    def __init__(self, message: str, line_no: Optional[int] = None, line: Optional[str] = None):
        self.message = message
        self.line_no = line_no
        self.line = line
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)

    def __reduce__(self):
        return type(self), (self.message, self.line_no, self.line)


class ConfigValidationError(DrisError, ValueError):
    """A scenario value violates an invariant; `field` is the dotted key"""

    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")

    def __reduce__(self):
        return type(self), (self.field, self.message)


class ChannelError(DrisError, ValueError):
    pass


class EstimationError(DrisError, ValueError):
    pass


class SweepError(DrisError, ValueError):
    pass


class OutputError(DrisError, OSError):
    """Writing a result file failed"""

    def __init__(self, path: str, cause: Exception):
        self.path = str(path)
        self.cause = cause
        super().__init__(f"cannot write {self.path}: {cause}")

    def __reduce__(self):
        return type(self), (self.path, self.cause)


class TrialError(DrisError, RuntimeError):
    """Failure inside one Monte Carlo trial, with its (seed, trial_index)"""

    def __init__(self, seed: int, trial_index: int, cause: Exception):
        self.seed = seed
        self.trial_index = trial_index
        self.cause = cause
        super().__init__(f"trial {trial_index} (seed {seed}) failed: {cause}")

    def __reduce__(self):
        return type(self), (self.seed, self.trial_index, self.cause)
