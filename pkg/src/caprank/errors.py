"""Exception and warning types shared across the package."""


class CaprankError(Exception):
    """Base class for all caprank errors."""


class EmptyInputError(CaprankError):
    """No embeddings / captions were supplied."""


class DimensionMismatchError(CaprankError):
    """Vectors that must share a dimension do not."""


class NonFiniteEntryError(CaprankError):
    """An embedding contains NaN or infinite entries."""


class DuplicateIdError(CaprankError):
    """Caption or scene identifiers are not unique within their scope."""


class NumericalFailureError(CaprankError):
    """An iterative numerical routine failed to converge."""


class InvalidOverrideError(CaprankError):
    """An explicit rank override is outside the valid range."""


class InvalidConfigError(CaprankError):
    """A configuration object violates its invariants."""


class EmptyCaptionError(CaprankError):
    """A caption is empty after trimming whitespace."""


class NoSentencesError(CaprankError):
    """A label set contains zero sentences."""


class MissingLabelsError(CaprankError):
    """Sentence-level labels required for evaluation are absent."""


class LengthMismatchError(CaprankError):
    """Two paired score vectors differ in length."""


class TooFewError(CaprankError):
    """Fewer data points than the operation requires."""


class EmptyCorpusError(CaprankError):
    """An aggregate was requested over zero scenes."""


class ParseError(CaprankError):
    """A record file could not be parsed.

    Carries the 1-based line number when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingEmbeddingsError(CaprankError):
    """A scene lacks embeddings and no provider is configured."""


class ProviderUnavailableError(CaprankError):
    """The embedding provider could not be reached or refused the request."""


class MalformedResponseError(CaprankError):
    """The embedding provider returned an unparseable or ill-shaped body."""


class DimensionDriftError(CaprankError):
    """The embedding provider returned vectors of inconsistent dimensions."""


class DegenerateResidualWarning(UserWarning):
    """The residual matrix is numerically zero; scores are uninformative."""


class NotConvergedWarning(UserWarning):
    """An iterative solver hit its iteration cap before reaching tolerance."""


class ZeroRowWarning(UserWarning):
    """Row normalization skipped one or more all-zero rows."""
