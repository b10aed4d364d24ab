"""Wave and guidance dynamics of a spin-1/2 rigid rotator.

The package propagates the Pauli spinor on periodic grids, integrates
translational and Euler-angle trajectories, evaluates the quantum
potential and the inhomogeneous source term, and ships numerical
certificates for the underlying identities.
"""

from .errors import (CurlMismatch, InvalidOrder, NodeSingularity, PacketTooWide, PoleSingularity,
                     ResampleOutOfBand, SamplingFailure, SchemaError, SpinguideError, UnstableStep)
from .fields import ExternalFields, GridSpec, SpinorField, StateSeries, eval_external_fields
from .su2 import EulerTriple, RotatorParams

__version__ = "0.1.0"

__all__ = [
    "CurlMismatch", "EulerTriple", "ExternalFields", "GridSpec", "InvalidOrder",
    "NodeSingularity", "PacketTooWide", "PoleSingularity", "ResampleOutOfBand", "RotatorParams",
    "SamplingFailure", "SchemaError", "SpinguideError", "SpinorField", "StateSeries",
    "UnstableStep", "eval_external_fields", "__version__",
]
