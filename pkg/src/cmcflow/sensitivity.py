"""Flow derivatives du/dH, d2u/dH2 and difference-quotient checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elliptic import (ScalarField, SparseOperator, assemble_linearized, flux_load,
                       flux_terms, solve_dirichlet)


@dataclass(frozen=True)
class SensitivityBundle:
    udot: ScalarField
    uddot: ScalarField
    Wdot: float


def solve_udot(u: ScalarField, H: float = 0.0, op: SparseOperator | None = None,
               method: str = "cg") -> ScalarField:
    """Velocity of the flow: ``div(A1(Du) D udot) = 2``, zero on the boundary.

    ``H`` only documents which state ``u`` belongs to; the problem depends on
    ``u`` alone. At ``u == 0`` this is the torsion problem.
    """
    del H
    if op is None:
        op = assemble_linearized(u)
    return solve_dirichlet(op, 2.0, 0.0, method=method)


def uddot_load(u: ScalarField, udot: ScalarField) -> np.ndarray:
    """Weak right side ``int (A2(Du)[Dudot, Dudot]) . D phi_i``."""
    _, _, A2 = flux_terms(u.grad_at_quad())
    Dv = udot.grad_at_quad()
    vec = np.einsum("cqijk,cqj,cqk->cqi", A2, Dv, Dv)
    return flux_load(u.mesh, vec)


def solve_uddot(u: ScalarField, udot: ScalarField, op: SparseOperator | None = None,
                method: str = "cg") -> ScalarField:
    """Second flow derivative, from differentiating the velocity equation in H."""
    if op is None:
        op = assemble_linearized(u)
    return solve_dirichlet(op, uddot_load(u, udot), 0.0, method=method)


def sensitivities(u: ScalarField, method: str = "cg") -> SensitivityBundle:
    op = assemble_linearized(u)
    udot = solve_udot(u, op=op, method=method)
    uddot = solve_uddot(u, udot, op=op, method=method)
    return SensitivityBundle(udot, uddot, udot.integral())


@dataclass(frozen=True)
class DQTable:
    H: float
    deltas: tuple[float, ...]
    errors: tuple[float, ...]
    slope: float
    symmetric: bool

    def rows(self):
        return [(d, e) for d, e in zip(self.deltas, self.errors)]


def loglog_slope(deltas, errors) -> float:
    return float(np.polyfit(np.log(deltas), np.log(errors), 1)[0])


def difference_quotient_check(mesh, H: float, deltas=(0.08, 0.04, 0.02),
                              symmetric: bool = False) -> DQTable:
    """Max-norm error of the H-difference quotient of u against udot.

    One-sided quotients decay like ``delta``; ``symmetric=True`` uses the
    central quotient, which decays like ``delta**2``.
    """
    from .flow import solve_along, solve_cmc

    base = solve_along(mesh, H)
    errors = []
    for d in deltas:
        up = solve_cmc(mesh, H + d, base.u + d * base.udot)
        if symmetric:
            um = solve_cmc(mesh, H - d, base.u - d * base.udot)
            q = (up.u.coef - um.u.coef) / (2 * d)
        else:
            q = (up.u.coef - base.u.coef) / d
        errors.append(float(np.abs(q - base.udot.coef).max()))
    return DQTable(H, tuple(deltas), tuple(errors), loglog_slope(deltas, errors), symmetric)
