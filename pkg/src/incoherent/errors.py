"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class IncoherentError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ValidationError(IncoherentError, ValueError):
    """Malformed input: wrong shapes, unnormalized states, bad config keys."""

    exit_code = 1


class IntegrityError(IncoherentError):
    """A persisted file failed its checksum, version or kind check."""

    exit_code = 3


class ResourceError(IncoherentError):
    """A configured size cap (qubits, support, enumeration) was exceeded."""

    exit_code = 4


class NumericError(IncoherentError, ArithmeticError):
    exit_code = 1
