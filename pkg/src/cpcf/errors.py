"""Exception types shared across the package."""


class ContractError(ValueError):
    """A caller violated an operation's precondition (shapes, ranges, emptiness)."""


class ParseError(ValueError):
    """Malformed binary dataset payload.

    ``offset`` is the byte position at which decoding failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class TruncatedError(ParseError):
    pass


class BadMagicError(ParseError):
    pass


class DimensionError(ParseError):
    pass


class NumericalAbort(RuntimeError):
    """Training produced a non-finite loss. ``log`` holds the records written so far."""

    def __init__(self, message: str, log=None):
        super().__init__(message)
        self.log = log


class CsvFormatError(ValueError):
    """Malformed run-log CSV. ``line`` is 1-based."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line
