from __future__ import annotations


class LeakauditError(Exception):
    """Base class for all toolkit failures surfaced to the CLI."""

    module = "leakaudit"

    def __str__(self) -> str:
        return f"[{self.module}] {super().__str__()}"


class ManifestParseError(LeakauditError):
    module = "manifest"

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class IntegrityError(LeakauditError):
    module = "integrity"


class DecodeError(LeakauditError):
    module = "audio"

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)


class EmptyAudioError(LeakauditError):
    module = "audio"


class TooShortError(LeakauditError):
    module = "fingerprint"


class EmptyIndexError(LeakauditError):
    module = "fingerprint"


class IndexFormatError(LeakauditError):
    module = "fingerprint"


class IndexVersionError(IndexFormatError):
    pass


class IndexCorruptError(IndexFormatError):
    pass


class ParamsMismatchError(LeakauditError):
    module = "fingerprint"


class InfeasibleSplitError(LeakauditError):
    module = "splitter"
