"""Asymptotic variances and covariances of flows in stable open queueing networks."""

from ._backend import BACKEND
from .diffusion import (
    CovarianceTables, StructuralMatrices, build_structural, correlation, covariance_tables,
    scv, sigma_D, sigma_E,
)
from .moments import (
    VisitMoments, cross_moment, route_discrepancy, sigma_arrival_mom, sigma_flow_mom,
    visit_mean, visit_moments,
)
from .network import (
    FlowId, NetworkSpec, ServerGroup, ValidatedNetwork, load_spec, stability_report,
    throughput, validate,
)

__all__ = [
    "BACKEND", "CovarianceTables", "FlowId", "NetworkSpec", "ServerGroup", "StructuralMatrices",
    "ValidatedNetwork", "VisitMoments", "build_structural", "correlation", "covariance_tables",
    "cross_moment", "load_spec", "route_discrepancy", "scv", "sigma_D", "sigma_E",
    "sigma_arrival_mom", "sigma_flow_mom", "stability_report", "throughput", "validate",
    "visit_mean", "visit_moments",
]
