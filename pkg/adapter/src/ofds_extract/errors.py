class AdapterError(ValueError):
    """Raised when a dump or job cannot be converted to valid wire files."""
