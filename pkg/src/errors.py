from typing import Optional


class QKernError(ValueError):
    """
    Base class of every error raised by the workbench. The optional stage tag names the pipeline step that failed.
    """

    def __init__(self, message: str, stage: Optional[str] = None):
        super().__init__(message)
        self.stage = stage

    def __str__(self):
        message = super().__str__()
        if self.stage:
            return f"{self.stage}: {message}"
        return message


class InputError(QKernError):
    """
    Invalid arguments: dimension mismatches, out-of-range parameters, violated preconditions.
    """


class FormatError(InputError):
    pass


class LengthError(InputError):
    pass


class ConsistencyError(InputError):
    pass


class DegenerateError(InputError):
    pass


class DataError(InputError):
    pass


class CapacityError(QKernError):
    """
    A memory guard was hit (qubit count or operator size beyond what the simulator stores densely).
    """
