"""Exception hierarchy shared by the analysis pipeline and the CLI."""


class PcsvdError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(PcsvdError, ValueError):
    """Incompatible matrix shapes or grids."""


class ParseError(PcsvdError, ValueError):
    """Malformed matrix or metadata file.

    ``path`` names the offending location inside the JSON document.
    """

    def __init__(self, message, path="$"):
        super().__init__(f"{path}: {message}")
        self.path = path


class TailNotDecayedError(PcsvdError):
    """Recovered coefficients have non-negligible mass near the band edge.

    Signals that the grid is too coarse for the sampled function, or that
    the function is not analytic on the unit circle.
    """

    def __init__(self, message, tail_mass):
        super().__init__(message)
        self.tail_mass = tail_mass


class FactorizationError(PcsvdError):
    """Pointwise SVD failed at a grid point."""

    def __init__(self, message, index):
        super().__init__(message)
        self.index = index


class AmbiguousAssociationError(PcsvdError):
    """Branch association between neighbouring grid points is not decisive."""

    def __init__(self, message, omega):
        super().__init__(message)
        self.omega = omega


class NonGenericStartError(AmbiguousAssociationError):
    """The first grid point sits on a crossing or a rank drop."""


class DegeneracyError(PcsvdError):
    """Near-degeneracy that grid refinement could not resolve."""

    def __init__(self, message, omega=None):
        super().__init__(message)
        self.omega = omega


class MultiplexError(PcsvdError):
    """A tracked branch or factor violates the expected multiplex relation."""


class InfeasibleStructureError(PcsvdError, ValueError):
    """Requested orbit structure does not fit the requested shape."""
