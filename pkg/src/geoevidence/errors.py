"""Exception hierarchy shared across the package.

Every error family gets one class so the CLI can map failures to distinct
exit codes and the HTTP service can map them to status codes. ``code`` is
the stable machine-readable identifier used in both places.
"""


class GeoEvidenceError(Exception):
    """Base class for all errors raised by this package."""

    code = "error"


class InputError(GeoEvidenceError):
    """Caller supplied an invalid value (bad tau, empty query, bad range)."""

    code = "input"


class ConfigError(GeoEvidenceError):
    """A configured column, key, or option does not exist or is malformed."""

    code = "config"


class ParseError(GeoEvidenceError):
    """A file could not be parsed; carries best-effort location info."""

    code = "parse"

    def __init__(self, message: str, *, line: int | None = None, offset: int | None = None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if offset is not None:
            loc.append(f"offset {offset}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.line = line
        self.offset = offset


class IngestError(GeoEvidenceError):
    """Data could not be ingested (missing join id, zero valid rows, ...)."""

    code = "ingest"


class GeometryError(GeoEvidenceError):
    """Invalid geometry: open or self-intersecting rings, bad focus area."""

    code = "geometry"


class StateError(GeoEvidenceError):
    """Operation applied in the wrong state (CRS mismatch, double-projection)."""

    code = "state"


class ShapeError(InputError):
    """Vector dimensionality mismatch."""

    code = "shape"


class UndefinedSimilarityError(InputError):
    """Cosine similarity requested against an empty-flagged embedding."""

    code = "undefined_similarity"


class ProviderError(GeoEvidenceError):
    """An embedding or LLM provider failed or returned a malformed response.

    ``completed`` counts results already obtained before the failure, so
    callers can report partial progress.
    """

    code = "provider"

    def __init__(self, message: str, *, completed: int = 0):
        super().__init__(message)
        self.completed = completed


class CacheError(GeoEvidenceError):
    """Embedding cache entry was corrupt; the entry has been invalidated."""

    code = "cache"


class CompletionParseError(GeoEvidenceError):
    """LLM completion did not match the expected heading/value format.

    The raw completion is attached for inspection.
    """

    code = "completion_parse"

    def __init__(self, message: str, *, completion: str = ""):
        super().__init__(message)
        self.completion = completion


class NotFoundError(GeoEvidenceError):
    """A referenced artifact (layer, dataset, project, model) does not exist."""

    code = "not_found"
