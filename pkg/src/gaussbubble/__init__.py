"""Gaussian multi-bubble candidates: simplicial partitions, Gaussian interface
measures, second-variation spectra of curve networks and desk-scale optimizers.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CancellationWarning,
    GaussBubbleError,
    InconsistentPartition,
    InvalidArgument,
    InvalidMesh,
    NumericFailure,
    PreconditionViolation,
    StructuralViolation,
    TopologyEvent,
    Unsupported,
)
from .geometry import SimplicialPartition, barycenter_rank, interfaces_of  # noqa: E402
from .measure import MeasureResult, barycenter, gaussian_volume, interface_measure  # noqa: E402
from .simplicial import cost, gradient_check, hessian_check, solve_shift  # noqa: E402
from .stability import fundamental_tone  # noqa: E402
from .frontflow import optimize_1d, optimize_2d  # noqa: E402

__all__ = [
    "__version__",
    "CancellationWarning",
    "GaussBubbleError",
    "InconsistentPartition",
    "InvalidArgument",
    "InvalidMesh",
    "NumericFailure",
    "PreconditionViolation",
    "StructuralViolation",
    "TopologyEvent",
    "Unsupported",
    "SimplicialPartition",
    "barycenter_rank",
    "interfaces_of",
    "MeasureResult",
    "barycenter",
    "gaussian_volume",
    "interface_measure",
    "cost",
    "gradient_check",
    "hessian_check",
    "solve_shift",
    "fundamental_tone",
    "optimize_1d",
    "optimize_2d",
]
