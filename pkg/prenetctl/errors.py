"""
Exception hierarchy for prenetctl

Every error carries the process exit code the CLI reports for it:
1 usage, 2 I/O, 3 format/corruption, 4 numerical failure.
"""

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_FORMAT = 3
EXIT_NUMERICAL = 4


class PrenetError(Exception):
    """Base exception for prenetctl errors"""
    exit_code = EXIT_USAGE


class UsageFailure(PrenetError):
    """Raised when a command is invoked with an invalid flag combination"""
    exit_code = EXIT_USAGE


class ConfigError(PrenetError, ValueError):
    """Raised when a network, training, loss or rain configuration is invalid"""
    exit_code = EXIT_USAGE


class ContractError(PrenetError):
    """Raised when a caller violates an operation's precondition"""
    exit_code = EXIT_USAGE


class ShapeError(PrenetError, ValueError):
    """Raised when tensor shapes are incompatible"""
    exit_code = EXIT_FORMAT


class UnsupportedKernelError(ShapeError):
    """Raised when a convolution kernel is not 3x3"""


class PrenetIOError(PrenetError, OSError):
    """Raised when a file cannot be read or written"""
    exit_code = EXIT_IO


class ImageIOError(PrenetIOError):
    """Raised when an image cannot be read, decoded or written"""


class UnsupportedImageFormat(PrenetError):
    """Raised when an image decodes but is not 8-bit RGB"""
    exit_code = EXIT_FORMAT


class DatasetValidationError(PrenetError):
    """Raised when a paired dataset fails validation in strict mode"""
    exit_code = EXIT_IO

    def __init__(self, message: str, problems=None):
        super().__init__(message)
        self.problems = list(problems or [])


class CheckpointFormatError(PrenetError):
    """Raised when a checkpoint has a bad magic, version or header"""
    exit_code = EXIT_FORMAT


class CheckpointCorruptionError(CheckpointFormatError):
    """Raised when a checkpoint blob is truncated or disagrees with its config"""


class NumericalError(PrenetError, ArithmeticError):
    """Raised when a loss or gradient becomes non-finite"""
    exit_code = EXIT_NUMERICAL

    def __init__(self, message: str, last_good_checkpoint=None):
        super().__init__(message)
        self.last_good_checkpoint = last_good_checkpoint
