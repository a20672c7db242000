class AdapterError(Exception):
    """Base for adapter failures."""


class ModelLoadError(AdapterError):
    """A model backend could not be constructed or loaded."""


class CategoryMismatchError(AdapterError):
    """Training labels name classes missing from the class table."""
