"""Exception hierarchy shared across the service.

Every error the service can surface to a caller derives from SpiralError so
the HTTP layer can map them to status codes in one place.
"""


class SpiralError(Exception):
    """Base class for all service errors."""

    http_status = 400


class NotFoundError(SpiralError):
    http_status = 404


class UnknownProject(NotFoundError):
    pass


class UnknownDocument(NotFoundError):
    pass


class UnknownPage(NotFoundError):
    pass


class UnknownBlock(NotFoundError):
    pass


class UnknownTask(NotFoundError):
    pass


class UnknownAnnotation(NotFoundError):
    pass


class SchemaNotFound(NotFoundError):
    pass


class ValidationFailed(SpiralError):
    """An entity failed invariant validation on write."""

    def __init__(self, violations):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


class InvalidBox(SpiralError):
    pass


class UnknownLabel(SpiralError):
    pass


class SchemaInvalid(SpiralError):
    pass


class NodeInUse(SpiralError):
    """A schema node cannot be removed while layout blocks reference it."""

    http_status = 409


class VersionConflict(SpiralError):
    """Optimistic-concurrency write carried a stale version; refetch and retry."""

    http_status = 409

    def __init__(self, entity_id, expected, actual):
        super().__init__(
            f"version conflict on {entity_id}: submitted {expected}, current {actual}"
        )
        self.entity_id = entity_id
        self.expected = expected
        self.actual = actual


class IllegalTransition(SpiralError):
    """Out-of-order lifecycle event for the document's current status."""

    http_status = 409


class ActorMismatch(SpiralError):
    """A non-human actor attempted a human-gated lifecycle step."""

    http_status = 403


class FieldValidationFailed(SpiralError):
    """Submitted form values violate the form schema; names every bad field."""

    def __init__(self, fields):
        self.fields = list(fields)
        super().__init__("invalid fields: " + ", ".join(self.fields))


class OutOfRange(SpiralError):
    pass


class UnsupportedFormat(SpiralError):
    pass


class EmptyFile(SpiralError):
    pass


class CorruptArchive(SpiralError):
    pass


class ZipBomb(SpiralError):
    """Archive exceeds the configured decompressed-size or member cap."""

    http_status = 413


class ConversionFailed(SpiralError):
    http_status = 502


class AdapterMissing(SpiralError):
    pass


class RasterizationFailed(SpiralError):
    http_status = 502


class UndecodableImage(SpiralError):
    pass


class Unauthorized(SpiralError):
    http_status = 401


class Duplicate(SpiralError):
    http_status = 409


class NotClaimant(SpiralError):
    http_status = 409


class PayloadShapeMismatch(SpiralError):
    pass


class NoGroundTruth(SpiralError):
    pass


class EmptyReference(SpiralError):
    pass


class NonpositiveBaseline(SpiralError):
    pass


class ConfigInvalid(SpiralError):
    pass
