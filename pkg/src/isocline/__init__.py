"""Locate equilibria of vector fields on surfaces by tracing generalized isoclines."""

from .errors import (
    AmbiguousKernelError,
    AtEquilibriumError,
    CapabilityError,
    ConditioningError,
    ConnectivityError,
    DegenerateCloudError,
    DegenerateKernelError,
    DomainError,
    InstabilityError,
    IsoclineError,
    PreconditionError,
    SamplerStuckError,
    SingularMetricError,
)
from .geometry import (
    christoffel_from_metric,
    christoffel_from_parameterization,
    covariant_matrix,
    line_field_direction,
    pullback_metric,
)
from .learn import LearnedAtlas, LearnedChart, build_learned_chart, diffusion_maps, gpr_fit
from .manifolds import SYSTEM_NAMES, get_system
from .sampling import PointCloud, biased_sde_sample, exp_map_sample, metropolis_sample
from .tracer import AnalyticAtlas, PotentialField, TracerConfig, Trajectory, trace

__version__ = "0.1.0"

__all__ = [
    "AmbiguousKernelError",
    "AnalyticAtlas",
    "AtEquilibriumError",
    "biased_sde_sample",
    "build_learned_chart",
    "CapabilityError",
    "christoffel_from_metric",
    "christoffel_from_parameterization",
    "ConditioningError",
    "ConnectivityError",
    "covariant_matrix",
    "DegenerateCloudError",
    "DegenerateKernelError",
    "diffusion_maps",
    "DomainError",
    "exp_map_sample",
    "get_system",
    "gpr_fit",
    "InstabilityError",
    "IsoclineError",
    "LearnedAtlas",
    "LearnedChart",
    "line_field_direction",
    "metropolis_sample",
    "PointCloud",
    "PotentialField",
    "PreconditionError",
    "pullback_metric",
    "SamplerStuckError",
    "SingularMetricError",
    "SYSTEM_NAMES",
    "trace",
    "TracerConfig",
    "Trajectory",
]
