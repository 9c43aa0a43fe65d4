"""Exception types shared across the package."""


class DatasetError(ValueError):
    """Raised when a dataset, manifest, or feature blob fails validation."""


class InfeasibleError(RuntimeError):
    """Raised when a requested operation cannot be satisfied by the data.

    Examples: an adaptive clustering request that needs more annotation-free
    clusters than there are annotation-free points, or a false-positive-rate
    target that no confidence threshold can meet.
    """
