"""Exception hierarchy.

Input problems (bad files, unknown recordings, degenerate data) derive from
:class:`InputError`; the CLI maps them to exit code 2. Broken internal
invariants raise :class:`InvariantError` (exit code 3).
"""


class VtcError(Exception):
    """Base class for all errors raised by this package."""


class InputError(VtcError, ValueError):
    """Invalid or inconsistent input data."""


class ParseError(InputError):
    """Malformed line in an input file."""

    def __init__(self, message, line=None, source=None):
        self.reason = message
        self.line = line
        self.source = source
        where = []
        if source is not None:
            where.append(str(source))
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} at {', '.join(where)}"
        super().__init__(message)


class UnknownRecordingError(InputError):
    """Recording ids that are absent from the evaluation map."""

    def __init__(self, ids):
        self.ids = sorted(ids)
        super().__init__("unknown recording id(s): " + ", ".join(self.ids))


class NoReferenceSpeechError(InputError):
    """Rates were requested over a reference with zero duration."""

    def __init__(self, message="no reference speech"):
        super().__init__(message)


class InvariantError(VtcError):
    """An internal consistency check failed."""
