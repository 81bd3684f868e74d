"""Exception hierarchy.

Every error carries the CLI exit code it maps to so the command line front-end
can translate failures without a lookup table.
"""


class SalientFlowError(Exception):
    exit_code = 3


class ConfigError(SalientFlowError, ValueError):
    exit_code = 1


class InputError(SalientFlowError):
    exit_code = 2


class InputUnreadable(InputError, OSError):
    pass


class FormatError(InputError, ValueError):
    """Malformed frame or flow file. ``path`` and ``offset`` locate the fault."""

    def __init__(self, message, path=None, offset=None):
        self.path = path
        self.offset = offset
        where = ""
        if path is not None:
            where = f" [{path}"
            if offset is not None:
                where += f" @ byte {offset}"
            where += "]"
        super().__init__(message + where)


class BadMagic(FormatError):
    pass


class TruncatedFile(FormatError):
    pass


class DimensionMismatch(FormatError):
    pass


class ShapeMismatch(SalientFlowError, ValueError):
    exit_code = 2


class WindowFull(SalientFlowError, RuntimeError):
    pass


class WindowIncomplete(SalientFlowError, RuntimeError):
    pass


class GridTooSmall(SalientFlowError, ValueError):
    exit_code = 1


class DegenerateField(SalientFlowError, ValueError):
    """Threshold selection on a field with (numerically) no spread."""


class SpecOutOfBounds(ConfigError):
    pass


class NumericError(SalientFlowError, ArithmeticError):
    """A non-finite value escaped a numeric stage."""

    exit_code = 3
