"""Exception hierarchy shared by every stage of the toolkit."""


class DyncogError(Exception):
    """Base class for all toolkit errors."""


class DataError(DyncogError):
    """Input data is malformed, missing or degenerate (CLI exit code 2)."""


class SchemaViolation(DataError):
    pass


class MissingAsset(DataError):
    pass


class DegenerateVideo(DataError):
    pass


class UnsupportedEncoding(DataError):
    pass


class CorruptAsset(DataError):
    pass


class NoValidDepth(DataError):
    """Every pixel of an instance mask lies on invalid depth."""


class NonPositiveDepth(DataError, ValueError):
    pass


class AlphaOutOfRange(DyncogError, ValueError):
    pass


class AtCameraCenter(DataError):
    pass


class CoincidentWarning(UserWarning):
    """Two objects share a position, so the closing speed is undefined."""


class TooFewFrames(DataError):
    pass


class LayoutMismatch(DataError):
    pass


class EmptyTrainingSet(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class UnknownQaId(DataError):
    pass


class NoOverlappingFrames(DataError):
    pass


class TemplateError(DyncogError):
    pass


class UnresolvedPlaceholder(TemplateError):
    pass


class KindMismatch(UnresolvedPlaceholder):
    """Template kind does not belong to the requested task level."""


class TransportError(DyncogError):
    """The model endpoint could not be reached or returned an error (exit code 3)."""


class Timeout(TransportError):
    pass


class MalformedGeneration(DyncogError):
    """Model replies could not be validated after all retries.

    ``raw_replies`` keeps every reply verbatim for auditing and ``reasons``
    holds one machine-readable reason per rejected reply.
    """

    def __init__(self, message, raw_replies=(), reasons=()):
        super().__init__(message)
        self.raw_replies = list(raw_replies)
        self.reasons = list(reasons)
