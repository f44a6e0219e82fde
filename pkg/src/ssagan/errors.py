"""Exception types shared across the package."""


class SSAGError(Exception):
    """Base class for every error raised by ssagan."""


class DimensionError(SSAGError, ValueError):
    pass


class ContractError(SSAGError, ValueError):
    """A caller broke an operation's precondition."""


class ConfigurationError(SSAGError, ValueError):
    pass


class NumericalError(SSAGError, ArithmeticError):
    """NaN/Inf showed up in a forward or backward pass."""


class FormatError(SSAGError):
    """A file on disk does not follow its declared format.

    ``path`` and ``offset`` (byte offset, or line number for text files)
    locate the problem.
    """

    def __init__(self, message, path=None, offset=None):
        self.path = path
        self.offset = offset
        where = ""
        if path is not None:
            where = f"{path}"
            if offset is not None:
                where += f" @ {offset}"
            where += ": "
        super().__init__(where + message)


class TruncatedFileError(FormatError):
    pass


class ValidationError(FormatError):
    """Well-formed file whose content violates a value constraint."""


class IncompatibleCheckpointError(SSAGError):
    pass


class UsageError(SSAGError):
    """Bad command-line invocation (unknown flag, missing required value)."""
