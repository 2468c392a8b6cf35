"""Exception hierarchy shared by all privbc modules."""


class PBCError(Exception):
    """Base class for every error raised by this package."""


class EmptyKeyError(PBCError, ValueError):
    def __init__(self, raw: str = ""):
        self.raw = raw
        super().__init__(f"reference title normalizes to an empty key: {raw!r}")


class MalformedRecordError(PBCError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ArityError(PBCError, ValueError):
    pass


class TooFewReferencesError(PBCError, ValueError):
    pass


class EmptySetError(PBCError, ValueError):
    pass


class NotABinomialError(PBCError, ValueError):
    """No integer m satisfies C(m, k) == j; usually a sign of hash collisions."""

    def __init__(self, j: int, k: int):
        self.j = j
        self.k = k
        super().__init__(f"{j} is not a binomial number C(m, {k}) for any integer m")


class ConfigMismatchError(PBCError, ValueError):
    pass


class CorruptIndexError(PBCError):
    pass


class EmptyIndexError(PBCError, ValueError):
    pass


class InvalidParameterError(PBCError, ValueError):
    pass
