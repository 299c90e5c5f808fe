"""Shared exception types."""


class ProtocolError(Exception):
    """A collective was entered with incompatible arguments, or a wire
    message violated an operation's contract."""


class ClusterAborted(Exception):
    """Another node thread failed while this node was blocked in a
    collective; the whole run is torn down."""


class ReferentialIntegrityError(Exception):
    """A foreign key does not resolve to a parent row."""


class DecodeError(Exception):
    """A byte stream could not be decoded (truncated or corrupt)."""


class ParseError(Exception):
    """A .tbl input line could not be parsed."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no
