"""
Failures the package reports, each tied to a process exit status
"""


class MVSMambaError(Exception):
    """Base exception for every failure the package reports"""

    exit_code = 1

    def __init__(self, message: str, details: dict = None):
        self.message = message
        self.details = details or {}
        super().__init__(self.message)


class ArgumentError(MVSMambaError):
    """Invalid argument to an operation (shape, range or precondition)"""
    exit_code = 2


class InvariantViolationError(MVSMambaError):
    """A structural invariant was broken (e.g. scan parity collision)"""
    exit_code = 3


class OracleError(MVSMambaError):
    """Verification oracle could not be evaluated"""
    exit_code = 4


class ConfigurationError(MVSMambaError):
    """Unknown run-config key, unparsable value or bad process setting"""
    exit_code = 5


class FileFormatError(MVSMambaError):
    """Malformed PFM/PPM/camera/checkpoint file"""
    exit_code = 6
