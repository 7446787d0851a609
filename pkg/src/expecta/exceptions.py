"""Error types shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2,
missing or stale pipeline artifacts exit 3, numerical failures exit 4.
"""


class ExpectaError(Exception):
    """Base class for all errors raised by this package."""


class SpecificationError(ExpectaError):
    """A spec, config, or call precondition is violated."""


class FormatError(ExpectaError):
    """A persisted container is malformed (bad section, size, or version)."""


class MappingError(ExpectaError):
    """An external record references a class name with no mapping."""


class RenderDomainError(ExpectaError):
    """An annotation cannot be drawn on the requested canvas."""


class NoForegroundError(ExpectaError):
    """Auto-labeling was asked to label an all-zero image."""


class UndefinedOverlapError(ExpectaError):
    """Overlap of two empty supports is undefined."""


class MissingArtifactError(ExpectaError):
    """A pipeline stage needs an artifact that was never produced."""


class StaleArtifactError(ExpectaError):
    """An upstream artifact was produced under a different config."""


class TrainingFailureError(ExpectaError):
    """Training diverged; carries the epoch and batch where it happened."""

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
