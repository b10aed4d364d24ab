"""Exception types raised by spinguide."""


class SpinguideError(Exception):
    """Base class for all library errors."""


class PoleSingularity(SpinguideError, ValueError):
    """Euler-angle chart evaluated too close to sin(alpha) = 0."""


class NodeSingularity(SpinguideError, ValueError):
    """Density below the node threshold where a phase kernel is needed."""


class InvalidOrder(SpinguideError, ValueError):
    """Quadrature node counts too small."""


class CurlMismatch(SpinguideError, ValueError):
    """Magnetic field inconsistent with the curl of the vector potential."""


class PacketTooWide(SpinguideError, ValueError):
    """Initial packet is not resolved by, or does not fit in, the grid."""


class UnstableStep(SpinguideError, RuntimeError):
    """A propagation step changed the norm by more than the allowed drift."""


class SamplingFailure(SpinguideError, RuntimeError):
    """Rejection sampling exhausted its attempt budget."""


class ResampleOutOfBand(SpinguideError, ValueError):
    """A frame transformation cannot be represented on the periodic grid."""


class SchemaError(SpinguideError, ValueError):
    """Scenario file failed validation.

    Parameters
    ----------
    path : str
        Dotted location of the offending field, e.g. ``params.m``.
    message : str
        Human readable reason.
    """

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
