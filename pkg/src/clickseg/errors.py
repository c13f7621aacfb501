"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an operation receives an argument outside its contract."""


class NotFoundError(LookupError):
    """Raised when a referenced id (instance, object, model) does not exist."""


class InvalidConfigError(ValueError):
    """Raised when a configuration object is internally inconsistent."""


class ConflictError(RuntimeError):
    """Raised when an operation is valid in general but not in the current
    state (e.g. annotating before an image is uploaded)."""


class CheckpointError(Exception):
    """Base class for checkpoint load failures."""


class CheckpointVersionError(CheckpointError):
    """Bad magic bytes or unsupported format version."""


class CheckpointTruncatedError(CheckpointError):
    """File ends before the manifest says it should."""


class CheckpointManifestError(CheckpointError):
    """Tensor manifest disagrees with the payload or the config."""
