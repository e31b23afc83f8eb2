"""
Exception hierarchy shared by every nonsens module.
"""


class NonsensError(Exception):
    """Base class for all library errors."""


class ParameterError(NonsensError, ValueError):
    """Invalid dimensions, levels or violated preconditions."""


class DimensionError(NonsensError, ValueError):
    """Array shapes that do not line up."""


class DegenerateDataError(NonsensError, ValueError):
    """Zero-variance or otherwise degenerate input."""


class SamplingError(NonsensError):
    """A sampler ran out of its retry budget."""


class TrainingError(NonsensError):
    """Network training diverged."""


class UnmixingError(NonsensError):
    """Score-matching ICA could not produce a valid unmixing."""


class EstimatorError(NonsensError):
    """A statistical estimator failed."""


class DatasetError(NonsensError):
    """Malformed or missing dataset / ground-truth file."""
