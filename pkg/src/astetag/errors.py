"""Exception hierarchy. Everything a user can trigger derives from AsteError."""


class AsteError(Exception):
    """Base class for domain errors (the CLI maps these to exit code 1)."""


class ShapeMismatch(AsteError, ValueError):
    pass


class OutOfBounds(AsteError, ValueError):
    pass


class CollisionError(AsteError, ValueError):
    def __init__(self, cell, existing, wanted):
        self.cell = cell
        self.existing = existing
        self.wanted = wanted
        super().__init__(
            f"cell {cell} already holds {existing}, cannot write {wanted}")


class FormatError(AsteError, ValueError):
    def __init__(self, message, line_no=None, offset=None):
        self.line_no = line_no
        self.offset = offset
        where = []
        if line_no is not None:
            where.append(f"line {line_no}")
        if offset is not None:
            where.append(f"byte {offset}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class NonContiguousSpan(FormatError):
    pass


class BadSentiment(FormatError):
    pass


class EmptyCorpus(AsteError, ValueError):
    pass


class NotScalar(AsteError, ValueError):
    pass


class NonPositiveMargin(AsteError, ValueError):
    pass


class TooLong(AsteError, ValueError):
    pass


class LengthMismatch(AsteError, ValueError):
    pass


class NonFiniteLoss(AsteError, FloatingPointError):
    pass


class CheckpointError(AsteError):
    pass


class BadMagic(CheckpointError):
    pass


class VersionMismatch(CheckpointError):
    pass


class TruncatedPayload(CheckpointError):
    pass


class DegenerateData(AsteError, ValueError):
    pass


class InsufficientData(AsteError, ValueError):
    pass


class NoShotsAvailable(AsteError, ValueError):
    pass


class HttpError(AsteError):
    def __init__(self, message, status=None):
        self.status = status
        super().__init__(message)


class RateLimited(HttpError):
    pass


class ReplayMiss(AsteError, KeyError):
    """Replay mode found no journaled response for a prompt."""
