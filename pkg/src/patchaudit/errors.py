"""Exception types shared across the toolkit."""


class PatchAuditError(Exception):
    """Base class for all toolkit errors."""


class CorpusError(PatchAuditError):
    """Unreadable corpus root, malformed manifest, or bad directory layout."""


class ImageDecodeError(PatchAuditError):
    """An image file could not be decoded; carries the offending path."""

    def __init__(self, path, reason):
        super().__init__(f"cannot decode {path}: {reason}")
        self.path = str(path)
        self.reason = reason


class FeatureError(PatchAuditError):
    """Malformed feature file or feature-schema mismatch."""


class TrainingError(PatchAuditError):
    """A classifier could not be trained on the given data."""
