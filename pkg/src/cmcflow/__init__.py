"""Constant-mean-curvature graphs over convex planar domains, continued in H."""

from .convexity import classify, find_critical_points, nodal_set, rotation_flow
from .domain import ConvexDomain, NonConvex, make_domain
from .elliptic import RecoveredJet, ScalarField, laplacian, solve_dirichlet
from .flow import (FlowState, FlowTrace, StopCriteria, continue_flow, estimate_hmax,
                   solve_along, solve_cmc)
from .mesh import Mesh, triangulate
from .sensitivity import difference_quotient_check, solve_udot
from .stability import first_eigenvalue, stability_report

__all__ = [
    "ConvexDomain", "NonConvex", "make_domain", "Mesh", "triangulate", "ScalarField",
    "RecoveredJet", "laplacian", "solve_dirichlet", "FlowState", "FlowTrace", "StopCriteria",
    "solve_cmc", "solve_along", "continue_flow", "estimate_hmax", "solve_udot",
    "difference_quotient_check", "classify", "find_critical_points", "nodal_set",
    "rotation_flow", "first_eigenvalue", "stability_report",
]
