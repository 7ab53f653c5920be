"""
Error types for the Endo Key-frame Tool.
Every error carries the process exit code the CLI reports for it.
"""


class ToolError(Exception):
    """Base class for all tool errors."""

    exit_code = 1


class InvalidInputError(ToolError, ValueError):
    """Input data is malformed, missing, or has the wrong shape."""

    exit_code = 1


class InvalidParameterError(ToolError, ValueError):
    """A tunable is outside its allowed range."""

    exit_code = 1


class DegenerateInputError(ToolError):
    """Input is well-formed but carries no usable signal (zero mass, singular fit)."""

    exit_code = 2


class FormatError(ToolError):
    """A file could not be decoded or has an unsupported layout."""

    exit_code = 3


class EmptyResultError(ToolError):
    """An operation produced nothing to work with; callers decide whether it is fatal."""

    exit_code = 2
