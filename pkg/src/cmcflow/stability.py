"""Second variation, first Dirichlet eigenvalue and the curvature-energy integral."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import splu

from .elliptic import (RecoveredJet, ScalarField, SolverStall, assemble_linearized,
                       evaluate_nodal, geometry, mass_matrix)


@dataclass(frozen=True)
class D2JSample:
    phi_id: str
    d2J: float
    bound: float
    margin: float


@dataclass(frozen=True)
class StabilityReport:
    lambda1: float
    eigfn: ScalarField = field(repr=False)
    d2J_samples: list = field(repr=False)
    ruchert_integral: float = float("nan")
    ruchert_flag: bool = True

    def to_dict(self) -> dict:
        margins = [s.margin for s in self.d2J_samples]
        return {
            "lambda1": self.lambda1,
            "n_variations": len(self.d2J_samples),
            "min_d2J": min((s.d2J for s in self.d2J_samples), default=None),
            "min_margin": min(margins, default=None),
            "ruchert_integral": self.ruchert_integral,
            "ruchert_flag": self.ruchert_flag,
        }


def _zero_boundary(phi: ScalarField) -> None:
    scale = max(np.abs(phi.coef).max(), 1.0)
    if np.any(np.abs(phi.coef[phi.mesh.fixed]) > 1e-12 * scale):
        raise ValueError("variation must vanish on the boundary")


def second_variation(u: ScalarField, phi: ScalarField, op=None) -> float:
    """``int A1(Du) D phi . D phi``: the second variation of area along ``phi``."""
    _zero_boundary(phi)
    op = op or assemble_linearized(u)
    return op.quadratic_form(phi)


def volume_bound(phi: ScalarField, Wdot: float) -> float:
    """Lower bound ``-2 (int phi)^2 / int udot`` for the second variation of J."""
    return -2.0 * phi.integral() ** 2 / Wdot


def random_variations(mesh, n: int, seed: int, udot: ScalarField | None = None
                      ) -> list[tuple[str, ScalarField]]:
    """Seeded bump variations plus, given ``udot``, the flow direction and a
    volume-preserving companion."""
    rng = np.random.default_rng(seed)
    dom = mesh.domain
    R = dom.centroid_clearance
    lo, hi = dom._polyline.min(0), dom._polyline.max(0)
    out = []
    if udot is not None:
        flowdir = ScalarField(mesh, -udot.coef / np.abs(udot.coef).max())
        out.append(("flow", flowdir))
        x = mesh.nodes[:, 0] - dom.centroid[0]
        psi = ScalarField(mesh, x * flowdir.coef)
        out.append(("zero_mean", psi - (psi.integral() / flowdir.integral()) * flowdir))
    k = 0
    while len(out) < n:
        c = rng.uniform(lo, hi)
        rho = rng.uniform(2 * mesh.h, max(R / 2, 2 * mesh.h))
        sign = rng.choice([-1.0, 1.0])
        if not dom.contains(c[None])[0]:
            continue
        r2 = ((mesh.nodes - c) ** 2).sum(1) / rho ** 2
        coef = sign * np.clip(1 - r2, 0, None) ** 2
        coef[mesh.fixed] = 0.0
        if not np.any(coef):
            continue
        out.append((f"bump{k}", ScalarField(mesh, coef)))
        k += 1
    return out[:n]


def overstability_check(state, phis) -> list[D2JSample]:
    """Second variation of ``J = A + 2H V`` against the volume bound for each variation."""
    op = assemble_linearized(state.u)
    Wdot = state.udot.integral()
    out = []
    for pid, phi in phis:
        d2 = second_variation(state.u, phi, op)
        b = volume_bound(phi, Wdot)
        out.append(D2JSample(pid, d2, b, d2 - b))
    return out


def first_eigenvalue(u: ScalarField, tol: float = 1e-8, max_iter: int = 500):
    """Smallest eigenvalue of ``int A1(Du) D phi . D psi`` against ``int phi psi``.

    Inverse iteration with a sparse LU of the stiffness; returns
    ``(lambda1, eigenfield)`` with the eigenfield normalized positive.
    """
    mesh = u.mesh
    op = assemble_linearized(u)
    f = mesh.free
    K = op.Kff.tocsc()
    M = mass_matrix(mesh)[f][:, f].tocsr()
    lu = splu(K)
    x = np.ones(len(f))
    lam = 0.0
    for _ in range(max_iter):
        y = lu.solve(M @ x)
        x = y / np.sqrt(y @ (M @ y))
        Kx = K @ x
        Mx = M @ x
        lam = float(x @ Kx)
        res = np.linalg.norm(Kx - lam * Mx) / np.linalg.norm(Kx)
        if res <= tol:
            break
    else:
        raise SolverStall(f"inverse iteration residual {res:.2e} above {tol}")
    if x.sum() < 0:
        x = -x
    coef = np.zeros(mesh.n_nodes)
    coef[f] = x
    return lam, ScalarField(mesh, coef)


def domain_monotonicity_check(u: ScalarField, shrink: float, center=None):
    """``(lambda1(Omega), lambda1(Omega'))`` with Omega' the dilation of Omega by
    ``shrink`` about ``center`` (default: the critical point of u, or the centroid)."""
    if not 0 < shrink < 1:
        raise ValueError("shrink must lie in (0, 1)")
    mesh = u.mesh
    if center is None:
        center = mesh.domain.centroid
        if np.abs(u.coef).max() > 0:
            from .convexity import find_critical_points

            cps = find_critical_points(u)
            if cps:
                center = cps[0].location
    small = mesh.scaled(shrink, center)
    u_small = ScalarField(small, evaluate_nodal(mesh, u.coef, small.nodes))
    return first_eigenvalue(u)[0], first_eigenvalue(u_small)[0]


def curvature_energy(u: ScalarField, H: float, jet: RecoveredJet | None = None):
    """``int over graph(u) of |B|^2 / 2`` with ``|B|^2 = 4H^2 - 2K``.

    Returns ``(integral, integral < 2 pi)``.
    """
    jet = jet or RecoveredJet.of(u)
    g = geometry(u.mesh)
    Du = u.grad_at_quad()
    W2 = 1.0 + (Du ** 2).sum(-1)
    hs = jet.hess_at_quad()
    Ggraph = hs[..., 0, 0] * hs[..., 1, 1] - hs[..., 0, 1] ** 2
    K = Ggraph / W2 ** 2
    B2 = 4 * H * H - 2 * K
    val = float((g.wdet * 0.5 * B2 * np.sqrt(W2)).sum())
    return val, val < 2 * np.pi


def vertical_normal_min(u: ScalarField) -> float:
    """Minimum of ``N_3 = 1 / sqrt(1 + |Du|^2)``, positive for every graph."""
    Du = u.grad_at_quad()
    return float((1.0 / np.sqrt(1.0 + (Du ** 2).sum(-1))).min())


def stability_report(state, n_variations: int = 100, seed: int = 0) -> StabilityReport:
    lam, eig = first_eigenvalue(state.u)
    phis = random_variations(state.mesh, n_variations, seed, state.udot)
    samples = overstability_check(state, phis)
    ruc, flag = curvature_energy(state.u, state.H)
    return StabilityReport(lam, eig, samples, ruc, flag)
