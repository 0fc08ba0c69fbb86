"""Error families shared across the pipeline.

The CLI maps each family to a distinct exit code, so raising the right
subclass matters more than the message text.
"""


class Author2VecError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(Author2VecError):
    """Invalid or missing configuration (exit code 2)."""


class DataError(Author2VecError):
    """Malformed or inconsistent input data (exit code 3)."""


class NumericError(Author2VecError):
    """Numeric failure such as divergence or non-finite values (exit code 4)."""


class StoreFormatError(DataError):
    """Binary file has a bad magic tag or unreadable structure."""


class TruncatedFileError(DataError):
    """Binary file ends before the payload promised by its header."""


class UnknownAuthorError(DataError):
    """An author id was requested that the file index does not contain."""


class TrainingDiverged(NumericError):
    """Training loss became non-finite; carries the last good epoch."""

    def __init__(self, message, last_good_epoch=None, checkpoint_path=None):
        super().__init__(message)
        self.last_good_epoch = last_good_epoch
        self.checkpoint_path = checkpoint_path
