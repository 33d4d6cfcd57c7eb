# app/errors.py


class SemiFlexError(Exception):
    """Base error. `exit_code` is what the command line returns for it."""

    exit_code = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ModelDomainError(SemiFlexError, ValueError):
    """An input is outside the domain of a model formula."""

    exit_code = 2


class ConfigValidationError(SemiFlexError):
    exit_code = 2


class InfeasibleModelError(SemiFlexError):
    """No fleet size can complete the cycle, or no vehicle type is feasible."""

    exit_code = 3


class DataFormatError(SemiFlexError):
    """Unreadable or malformed input/output file."""

    exit_code = 4
