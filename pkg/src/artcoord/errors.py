"""Shared exception types."""


class FormatError(ValueError):
    """A binary or text input does not match its declared layout."""


class TrainingDiverged(RuntimeError):
    """A non-finite loss or gradient appeared during training."""
