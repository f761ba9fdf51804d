"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class TravMapError(Exception):
    """Base class for all errors raised by travmap."""

    exit_code = 1


class ParseError(TravMapError, ValueError):
    """A file could not be decoded. ``offset`` is the byte offset of the fault."""

    exit_code = 3

    def __init__(self, message, offset=None, path=None):
        self.offset = offset
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ContractError(TravMapError, ValueError):
    """Inputs violate a documented precondition (shape, range, mismatch)."""

    exit_code = 4


class DataError(ContractError):
    """Input data carries invalid values, e.g. non-finite coordinates."""
