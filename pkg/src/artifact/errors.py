"""Exception types shared across the package."""


class NumericInputError(ValueError):
    """A field contains NaN or infinite values."""


class ParameterError(ValueError):
    """An argument lies outside its admissible range."""


class ConstructionError(RuntimeError):
    """An object could not be built (defective eigenproblem, failed cover, ...)."""


class ResolutionError(RuntimeError):
    """A discretisation is too coarse for the requested accuracy."""


class DomainError(ValueError):
    """A function or map leaves the region it is required to stay in."""


class FrameIndexError(KeyError):
    """A (j, e, k) index is outside the index universe of a frame."""


class CoverError(RuntimeError):
    """A cover or partition of unity is defective."""


class UnsupportedCoverError(ValueError):
    """A cover cannot be turned into a box/band decomposition of identity."""
