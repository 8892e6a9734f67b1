"""Newton solves of the constant-mean-curvature problem and continuation in H."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .elliptic import (ScalarField, SolverStall, assemble_linearized, flux_terms,
                       full_residual, geometry, solve_free)
from .mesh import Mesh
from .sensitivity import solve_udot

log = logging.getLogger(__name__)

NEWTON_MAX_ITER = 60
LINE_SEARCH_HALVINGS = 30


class NewtonDiverged(RuntimeError):
    """Newton's method failed: the line search stalled or the iteration cap was hit."""


class IsoperimetricViolation(ValueError):
    """|H| is at or above |dOmega| / (2 |Omega|), so no solution can exist."""


@dataclass(frozen=True, eq=False)
class FlowState:
    H: float
    u: ScalarField
    udot: ScalarField
    newton_iters: int
    sup_grad: float
    residual: float

    @property
    def mesh(self) -> Mesh:
        return self.u.mesh


def newton_tolerance(H: float) -> float:
    return 1e-10 * (1.0 + abs(H))


def sup_grad(u: ScalarField) -> float:
    return float(np.sqrt((u.grad_at_quad() ** 2).sum(-1)).max())


def check_admissible(mesh: Mesh, H: float) -> None:
    bound = mesh.domain.isoperimetric_bound
    if abs(H) >= bound:
        raise IsoperimetricViolation(
            f"|H| = {abs(H):.6g} >= |dOmega|/(2|Omega|) = {bound:.6g}")


def solve_cmc(mesh: Mesh, H: float, guess: ScalarField | None = None,
              method: str = "cg", max_iter: int = NEWTON_MAX_ITER) -> FlowState:
    """Damped Newton for ``div(Du / sqrt(1 + |Du|^2)) = 2H``, ``u = 0`` on the boundary."""
    check_admissible(mesh, H)
    H = float(H)
    tol = newton_tolerance(H)
    c = np.zeros(mesh.n_nodes) if guess is None else guess.coef.copy()
    c[mesh.fixed] = 0.0
    u = ScalarField(mesh, c)
    free = mesh.free

    r = full_residual(u, H)[free]
    it = 0
    while np.abs(r).max() > tol:
        if it >= max_iter:
            raise NewtonDiverged(f"H={H}: no convergence in {max_iter} iterations "
                                 f"(residual {np.abs(r).max():.3e})")
        op = assemble_linearized(u)
        try:
            delta = solve_free(op, -r, method=method)
        except SolverStall as exc:
            raise NewtonDiverged(f"H={H}: linear solve failed: {exc}") from exc
        phi0 = r @ r
        step = 1.0
        for _ in range(LINE_SEARCH_HALVINGS + 1):
            trial = u.coef.copy()
            trial[free] += step * delta
            ut = ScalarField(mesh, trial)
            rt = full_residual(ut, H)[free]
            if np.all(np.isfinite(rt)) and (rt @ rt < (1 - 1e-4 * step) * phi0
                                            or np.abs(rt).max() <= tol):
                break
            step *= 0.5
        else:
            raise NewtonDiverged(f"H={H}: line search failed at iteration {it} "
                                 f"(residual {np.sqrt(phi0):.3e})")
        u, r = ut, rt
        it += 1
    udot = solve_udot(u, H, method=method)
    return FlowState(H, u, udot, it, sup_grad(u), float(np.abs(r).max()))


def solve_along(mesh: Mesh, H: float, max_step: float = 0.1, method: str = "cg") -> FlowState:
    """Reach ``H`` from the flat state by tangent-predicted steps of at most ``max_step``."""
    state = solve_cmc(mesh, 0.0, method=method)
    n = int(np.ceil(abs(H) / max_step))
    for Hk in np.linspace(0.0, H, n + 1)[1:]:
        state = solve_cmc(mesh, Hk, state.u + (Hk - state.H) * state.udot, method=method)
    return state


def functionals(u: ScalarField) -> tuple[float, float]:
    """Volume ``int u`` and graph area ``int sqrt(1 + |Du|^2)``."""
    g = geometry(u.mesh)
    Du = u.grad_at_quad()
    area = float((g.wdet * np.sqrt(1.0 + (Du ** 2).sum(-1))).sum())
    return u.integral(), area


# ------------------------------------------------------------ continuation
@dataclass(frozen=True)
class StopCriteria:
    H_target: float | None = None
    grad_cap: float = 1e3
    dH_min: float = 1e-3


@dataclass
class TraceRow:
    H: float
    W: float
    area: float
    sup_grad: float
    lambda1: float = float("nan")
    minG: float = float("nan")
    maxL: float = float("nan")
    x0: tuple[float, float] = (float("nan"), float("nan"))
    detHess_x0: float = float("nan")
    status: str = "ok"


@dataclass
class FlowTrace:
    mesh: Mesh
    rows: list[TraceRow] = field(default_factory=list)
    states: list[FlowState] = field(default_factory=list)
    hmax_bracket: tuple[float, float] | None = None
    termination: str = ""

    @property
    def H(self) -> np.ndarray:
        return np.array([r.H for r in self.rows])

    @property
    def W(self) -> np.ndarray:
        return np.array([r.W for r in self.rows])

    def monotonicity_violations(self) -> int:
        """Count adjacent row pairs where W fails to move opposite to H."""
        dH = np.diff(self.H)
        dW = np.diff(self.W)
        return int(np.sum(~(dH * dW < 0)))


def _row(state: FlowState, status: str = "ok") -> TraceRow:
    W, area = functionals(state.u)
    return TraceRow(H=state.H, W=W, area=area, sup_grad=state.sup_grad, status=status)


def continue_flow(mesh: Mesh, direction: int = -1, dH: float = 0.05,
                  stop: StopCriteria = StopCriteria(), method: str = "cg",
                  diagnostics: bool = False, threads: int = 1) -> FlowTrace:
    """Continue the solution family from H = 0 in the sign of ``direction``.

    Each step is seeded with the tangent predictor ``u + dH * udot``; a
    failed step is retried at half the step size.
    """
    if dH <= 0:
        raise ValueError("dH must be positive")
    sign = 1.0 if direction > 0 else -1.0
    trace = FlowTrace(mesh)
    state = solve_cmc(mesh, 0.0, method=method)
    trace.states.append(state)
    trace.rows.append(_row(state))
    step = dH
    bound = mesh.domain.isoperimetric_bound
    while True:
        if stop.H_target is not None and abs(state.H) >= abs(stop.H_target) - 1e-12:
            trace.termination = "H_target"
            break
        H_next = state.H + sign * step
        if stop.H_target is not None and abs(H_next) > abs(stop.H_target):
            H_next = stop.H_target
        try:
            if abs(H_next) >= bound:
                raise IsoperimetricViolation(f"|H|={abs(H_next)} at bound {bound}")
            new = solve_cmc(mesh, H_next, state.u + (H_next - state.H) * state.udot,
                            method=method)
        except (NewtonDiverged, IsoperimetricViolation) as exc:
            log.info("step to H=%.6g failed (%s); halving", H_next, exc)
            step *= 0.5
            if step < stop.dH_min:
                trace.termination = "dH_min"
                break
            continue
        if new.sup_grad > stop.grad_cap:
            trace.states.append(new)
            trace.rows.append(_row(new, status="grad_cap"))
            trace.termination = "grad_cap"
            break
        state = new
        trace.states.append(state)
        trace.rows.append(_row(state))
    if diagnostics:
        attach_diagnostics(trace, threads=threads)
    return trace


def attach_diagnostics(trace: FlowTrace, threads: int = 1) -> None:
    """Fill eigenvalue, convexity and critical-point columns of each row."""
    from concurrent.futures import ThreadPoolExecutor

    from .convexity import classify, find_critical_points
    from .stability import first_eigenvalue

    def work(k):
        st = trace.states[k]
        row = trace.rows[k]
        row.lambda1 = first_eigenvalue(st.u)[0]
        if np.abs(st.u.coef).max() == 0.0:
            return
        rep = classify(st.u)
        row.minG, row.maxL = rep.minG, rep.maxL_signed
        cps = find_critical_points(st.u)
        if cps:
            row.x0 = (float(cps[0].location[0]), float(cps[0].location[1]))
            row.detHess_x0 = float(np.linalg.det(cps[0].hessian))

    idx = range(len(trace.states))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, idx))
    else:
        for k in idx:
            work(k)


def estimate_hmax(mesh: Mesh, tol: float = 0.01, grad_cap: float = 1e3,
                  dH: float = 0.05, method: str = "cg") -> tuple[float, float]:
    """Bracket ``(H_lo, H_hi)`` of the largest solvable |H| on this mesh.

    ``H_lo`` is solved with ``sup|Du| < grad_cap``; ``H_hi`` fails or exceeds
    the cap (or sits at the isoperimetric bound). Both are magnitudes.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    bound = mesh.domain.isoperimetric_bound

    def attempt(H, base):
        try:
            st = solve_cmc(mesh, -H, base.u + (-H - base.H) * base.udot, method=method)
        except (NewtonDiverged, IsoperimetricViolation):
            return None
        return st if st.sup_grad < grad_cap else None

    lo_state = solve_cmc(mesh, 0.0, method=method)
    lo, hi = 0.0, bound
    while True:
        H = lo + dH
        if H >= hi:
            break
        st = attempt(H, lo_state)
        if st is None:
            hi = H
            break
        lo, lo_state = H, st
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        st = attempt(mid, lo_state)
        if st is None:
            hi = mid
        else:
            lo, lo_state = mid, st
    return lo, hi
