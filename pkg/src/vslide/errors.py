"""Exception hierarchy shared by the whole toolkit."""


class VslideError(Exception):
    """Base class for all toolkit errors."""


class DomainError(VslideError, ValueError):
    """An argument is outside its valid domain."""


class FormatError(VslideError):
    """A byte stream or file does not conform to its format."""


class UnfinalizedFileError(FormatError):
    """The container file has no footer: the writer never finalized it."""


class CorruptionError(FormatError):
    """A checksum mismatch or undecodable chunk."""

    def __init__(self, message, chunk=None):
        super().__init__(message)
        self.chunk = chunk


class UnsupportedOperationError(VslideError):
    """The operation is not defined for this layout or configuration."""


class ProtocolError(VslideError):
    """Wire protocol violation (bad frame, bad payload, oversized message)."""


class RemoteError(VslideError):
    """The server answered with an ERROR frame."""

    def __init__(self, code, message=""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code
