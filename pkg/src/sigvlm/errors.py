"""Exception hierarchy shared across the package."""


class SigVlmError(Exception):
    """Base class for all package errors."""


# signal model
class EmptyRecord(SigVlmError):
    pass


class KindMismatch(SigVlmError):
    pass


# ingestion
class MalformedLine(SigVlmError):
    def __init__(self, line_no, message=""):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}" if message else f"line {line_no}")


class CountMismatch(SigVlmError):
    pass


class EmptyFile(SigVlmError):
    pass


class InvalidParams(SigVlmError):
    pass


# rendering
class ConfigInvalid(SigVlmError):
    pass


class EncodeFailure(SigVlmError):
    pass


class SizeMismatch(SigVlmError):
    pass


# vlm client
class TransportError(SigVlmError):
    pass


class CassetteMiss(SigVlmError):
    def __init__(self, digest):
        self.digest = digest
        super().__init__(f"no cassette entry for prompt digest {digest}")


class ResponseMalformed(SigVlmError):
    def __init__(self, message, fragment=""):
        self.fragment = fragment
        super().__init__(f"{message}: {fragment[:200]!r}" if fragment else message)


class SafetyRefusal(SigVlmError):
    pass


class LogprobsUnavailable(SigVlmError):
    pass


class TokenNotFound(SigVlmError):
    pass


# scoring
class UnknownToken(SigVlmError):
    pass


class RangeError(SigVlmError, ValueError):
    pass


# dtw
class TooShort(SigVlmError):
    pass


class EmptySeries(SigVlmError):
    pass


# evaluation
class DegenerateSet(SigVlmError):
    pass
