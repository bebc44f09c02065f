"""Exception types shared across the pipeline stages."""


class SubjectCutError(Exception):
    """Base class for all pipeline errors."""


class DumpFormatError(SubjectCutError):
    """Malformed or inconsistent attention-dump data."""


class DumpTruncatedError(DumpFormatError):
    """Dump stream ended mid-record; carries the (t, l) it died in."""

    def __init__(self, t, l, message=None):
        self.t = t
        self.l = l
        super().__init__(message or f"dump truncated inside record (t={t}, l={l})")


class RecordOrderError(DumpFormatError):
    """Records missing, duplicated, or out of (t-major, l-minor) order."""


class ShapeMismatchError(SubjectCutError):
    """Array shape disagrees with the declared header or peer input."""


class InvalidValuesError(SubjectCutError):
    """Non-finite, negative, or out-of-range values where forbidden."""


class UnmatchedKeywordError(SubjectCutError):
    """Keyword matched no token; lists the valid candidates."""

    def __init__(self, keyword, candidates):
        self.keyword = keyword
        self.candidates = list(candidates)
        shown = ", ".join(repr(c) for c in self.candidates[:20])
        super().__init__(
            f"keyword {keyword!r} matches no token; valid tokens: [{shown}]"
        )


class DegenerateRegionError(SubjectCutError):
    """Foreground or background candidate set too small to model."""


class BackendError(SubjectCutError):
    """Chat backend unreachable or persistently failing."""


class MalformedResponseError(SubjectCutError):
    """Backend reply did not parse into the structured verdict/payload schema."""


class KeywordMissingError(SubjectCutError):
    """Expanded prompt lost a required keyword even after retry."""


class EmptyForegroundError(SubjectCutError):
    """Agent session ended with no foreground nouns left."""
