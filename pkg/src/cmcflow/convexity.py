"""Second-order convexity diagnostics, critical points, nodal sets and the rotation flow."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import LineString

from .elliptic import RecoveredJet, ScalarField, evaluate_nodal
from .mesh import Mesh

CURVATURE_GRAD_MIN = 1e-6


class NonPositiveField(ValueError):
    """The field handed to the square-root transform is not positive at a sample."""


class MultipleComponents(RuntimeError):
    """A nodal set split into more than one component."""


class EnteredCriticalBall(RuntimeError):
    """The rotation flow came too close to a critical point."""


# ------------------------------------------------------------------ sampling
def sample_points(mesh: Mesh, depth: int = 2) -> np.ndarray:
    """Interior vertices at graph distance >= ``depth`` from the boundary, plus
    barycenters of the cells spanned by them."""
    deep = mesh.vertex_depth >= depth
    cells = mesh.cells[deep[mesh.cells].all(1)]
    return np.concatenate([mesh.vertices[deep], mesh.vertices[cells].mean(1)])


def _G(hess):
    return hess[..., 0, 0] * hess[..., 1, 1] - hess[..., 0, 1] ** 2


def _L(grad, hess):
    vx, vy = grad[..., 0], grad[..., 1]
    return (vy ** 2 * hess[..., 0, 0] - 2 * vx * vy * hess[..., 0, 1]
            + vx ** 2 * hess[..., 1, 1])


@dataclass(frozen=True)
class ConvexityFields:
    points: np.ndarray
    values: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    G: np.ndarray
    L: np.ndarray
    level_curvature: np.ndarray   # -L / |Dv|^3, nan where |Dv| is tiny


def convexity_fields(v: ScalarField, samples=None, jet: RecoveredJet | None = None
                     ) -> ConvexityFields:
    """``G = det D^2 v`` and ``L = v_y^2 v_xx - 2 v_x v_y v_xy + v_x^2 v_yy`` at samples."""
    if samples is None:
        samples = sample_points(v.mesh)
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    jet = jet or RecoveredJet.of(v)
    grad, hess = jet(samples)
    vals = evaluate_nodal(v.mesh, v.coef, samples)
    G, L = _G(hess), _L(grad, hess)
    gn = np.linalg.norm(grad, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        curv = np.where(gn > CURVATURE_GRAD_MIN, -L / gn ** 3, np.nan)
    return ConvexityFields(samples, vals, grad, hess, G, L, curv)


def power_transform_G(phi: ScalarField, samples=None, jet: RecoveredJet | None = None
                      ) -> np.ndarray:
    """Hessian determinant of ``sqrt(phi)`` from derivatives of ``phi``:
    ``(2 phi G_phi - L_phi) / (8 phi^2)``."""
    f = convexity_fields(phi, samples, jet)
    if np.any(f.values <= 0):
        i = int(np.argmin(f.values))
        raise NonPositiveField(f"phi = {f.values[i]:.3e} <= 0 at {f.points[i]}")
    return (2 * f.values * f.G - f.L) / (8 * f.values ** 2)


# ------------------------------------------------------------ classification
@dataclass(frozen=True)
class ConvexityReport:
    minG: float
    maxL_signed: float
    classification: str          # strictly_convex | strictly_concave | indefinite
    uniform_constant: float      # minG when the classification is strict, else 0
    power_half: bool
    min_power_G: float
    orientation: int             # sign of the interior values
    sample_points: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "minG": self.minG, "maxL_signed": self.maxL_signed,
            "classification": self.classification,
            "uniform_constant": self.uniform_constant,
            "power_half": self.power_half, "min_power_G": self.min_power_G,
            "orientation": self.orientation, "n_samples": int(len(self.sample_points)),
        }


def orientation(v: ScalarField) -> int:
    free = v.coef[v.mesh.free]
    s = np.sign(free[np.argmax(np.abs(free))]) if len(free) else 0.0
    return int(s)


def classify(v: ScalarField, samples=None) -> ConvexityReport:
    """Second-order convexity of a field with zero boundary values.

    A positive Hessian determinant at every sample together with an interior
    minimum below the boundary value means strictly convex; with an interior
    maximum above it, strictly concave.
    """
    mesh = v.mesh
    if samples is None:
        samples = sample_points(mesh)
    jet = RecoveredJet.of(v)
    f = convexity_fields(v, samples, jet)
    s = orientation(v)
    minG = float(f.G.min())
    # L is odd in v: L_{s v} = s L_v, so this is L of the positive version of v
    maxL = float((s * f.L).max()) if s else 0.0
    bvals = v.coef[mesh.fixed]
    interior = v.coef[mesh.free]
    cls = "indefinite"
    if minG > 0:
        if interior.min() < bvals.min():
            cls = "strictly_convex"
        elif interior.max() > bvals.max():
            cls = "strictly_concave"
    power_half, min_pg = False, float("nan")
    if s:
        pos = s * f.values > 0
        if pos.any():
            sv = ScalarField(mesh, s * v.coef)
            jet_s = RecoveredJet(sv, s * jet.grad, s * jet.hess)
            pg = power_transform_G(sv, samples[pos], jet_s)
            # sqrt of a positive field with zero boundary values: concave iff G > 0
            min_pg = float(pg.min())
            power_half = bool(pos.all() and min_pg > 0)
    return ConvexityReport(minG, maxL, cls, minG if cls != "indefinite" else 0.0,
                           power_half, min_pg, s, np.asarray(samples))


# ---------------------------------------------------------- critical points
@dataclass(frozen=True)
class CriticalPoint:
    location: np.ndarray
    hessian: np.ndarray
    grad_norm: float
    nondegenerate: bool


def _scales(u: ScalarField, jet: RecoveredJet):
    from .flow import sup_grad

    sg = sup_grad(u)
    diam = u.mesh.domain.diameter
    return sg, (sg / diam) ** 2


def find_critical_points(u: ScalarField, jet: RecoveredJet | None = None,
                         merge_tol: float = 1e-6) -> list[CriticalPoint]:
    """Zeros of the recovered gradient, seeded at vertex minima of ``|Du|^2``."""
    mesh = u.mesh
    if np.abs(u.coef).max() == 0.0:
        return []
    jet = jet or RecoveredJet.of(u)
    sg, det_scale = _scales(u, jet)
    ztol = 1e-4 * sg
    g2 = (jet.grad[: mesh.n_vertices] ** 2).sum(1)
    seeds = []
    for i in np.flatnonzero(~mesh.boundary):
        nb = mesh.vertex_neighbors[i]
        if np.all(g2[i] <= g2[nb]):
            seeds.append(mesh.vertices[i])
    found: list[CriticalPoint] = []
    for x in seeds:
        x = x.copy()
        ok = False
        for _ in range(40):
            try:
                g, Hs = jet(x)
            except ValueError:
                break
            if np.linalg.norm(g) <= 1e-13 * max(sg, 1.0):
                ok = True
                break
            try:
                dx = np.linalg.solve(Hs, g)
            except np.linalg.LinAlgError:
                break
            x = x - dx
            if np.linalg.norm(dx) < 1e-15:
                ok = True
                break
        if not ok:
            try:
                g, Hs = jet(x)
            except ValueError:
                continue
            ok = np.linalg.norm(g) <= ztol
        if not ok or not mesh.domain.contains(x[None])[0]:
            continue
        g, Hs = jet(x)
        if np.linalg.norm(g) > ztol:
            continue
        if any(np.linalg.norm(x - c.location) <= merge_tol for c in found):
            continue
        det = float(np.linalg.det(Hs))
        found.append(CriticalPoint(x, Hs, float(np.linalg.norm(g)),
                                   abs(det) > 1e-3 * det_scale))
    return found


# ---------------------------------------------------------------- nodal sets
_SUBTRI = np.array([[0, 3, 5], [3, 1, 4], [5, 4, 2], [3, 4, 5]])


@dataclass(frozen=True)
class NodalSet:
    theta: float
    polyline: np.ndarray
    min_grad_of_derivative: float
    endpoints_expected: np.ndarray           # boundary points with n . e_theta = 0
    endpoint_error: float                    # max distance polyline end -> expected point
    boundary_identity: list = field(default_factory=list)   # (u_ee, -kappa du/dn) per endpoint
    simple: bool = True

    @property
    def M_empty(self) -> bool:
        return self.min_grad_of_derivative > 0


def _contour_segments(mesh: Mesh, f: np.ndarray):
    """Zero-level segments of nodal values ``f`` over the 4-way split of each cell."""
    tris = mesh.cell_nodes[:, _SUBTRI].reshape(-1, 3)
    pos = f[tris] >= 0
    mixed = pos.any(1) & ~pos.all(1)
    tris = tris[mixed]
    segs = []
    for t in tris:
        ends = []
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            if (f[a] >= 0) != (f[b] >= 0):
                lam = f[a] / (f[a] - f[b])
                key = (min(a, b), max(a, b))
                ends.append((key, (1 - lam) * mesh.nodes[a] + lam * mesh.nodes[b]))
        if len(ends) == 2:
            segs.append(ends)
    return segs


def _chain(segs):
    """Group segments into polylines keyed by shared crossing edges."""
    adj: dict = {}
    pos: dict = {}
    for (ka, pa), (kb, pb) in segs:
        adj.setdefault(ka, []).append(kb)
        adj.setdefault(kb, []).append(ka)
        pos[ka], pos[kb] = pa, pb
    seen = set()
    chains = []
    # start from open ends first so open arcs come out whole
    starts = [k for k, v in adj.items() if len(v) == 1] + list(adj)
    for s in starts:
        if s in seen:
            continue
        chain = [s]
        seen.add(s)
        cur = s
        while True:
            nxt = [k for k in adj[cur] if k not in seen]
            if not nxt:
                break
            cur = nxt[0]
            seen.add(cur)
            chain.append(cur)
        chains.append(np.array([pos[k] for k in chain]))
    return chains


def nodal_set(u: ScalarField, theta: float, jet: RecoveredJet | None = None) -> NodalSet:
    """Zero set of the directional derivative ``Du . e_theta`` as a polyline."""
    mesh = u.mesh
    jet = jet or RecoveredJet.of(u)
    e = np.array([np.cos(theta), np.sin(theta)])
    f = jet.grad @ e
    chains = _chain(_contour_segments(mesh, f))
    if len(chains) != 1:
        raise MultipleComponents(f"theta={theta:.4f}: {len(chains)} components")
    poly = chains[0]
    # orient from the end with the smaller angle to e_theta's normal for determinism
    def cross(p):
        return e[0] * p[1] - e[1] * p[0]

    if cross(poly[0]) > cross(poly[-1]):
        poly = poly[::-1]
    dom = mesh.domain
    tp = dom.tangent_points(e)
    pts = dom.point(tp)
    ends = poly[[0, -1]]
    d = np.linalg.norm(ends[:, None] - pts[None], axis=-1)
    end_err = float(max(d.min(1).max(), d.min(0).max()))
    _, hs = jet(poly)
    dgrad = np.linalg.norm(hs @ e, axis=-1)
    ident = []
    n = dom.inward_normal(tp)
    kappa = dom.curvature(tp)
    # exact boundary points can sit just outside the quadratic boundary cells
    gb, hb = jet(pts, slack=0.05)
    for k in range(len(tp)):
        uee = float(e @ hb[k] @ e)
        ident.append((uee, float(-kappa[k] * (gb[k] @ n[k]))))
    simple = bool(LineString(poly).is_simple) if len(poly) > 1 else True
    return NodalSet(theta, poly, float(dgrad.min()), pts, end_err, ident, simple)


# ------------------------------------------------------------ rotation flow
def smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3 - 2 * s)


def theta_bar(grad) -> np.ndarray:
    """Angle of ``e = (u_y, -u_x) / |Du|``."""
    grad = np.asarray(grad)
    return np.arctan2(-grad[..., 0], grad[..., 1])


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


@dataclass(frozen=True)
class RotationResult:
    trajectory: np.ndarray
    drift: float
    consistency: float    # max |D theta_bar . F - 1| along the trajectory


def rotation_field(u: ScalarField, jet: RecoveredJet, x, band: float | None = None,
                   ztol: float | None = None):
    """Blended field ``F = V / (D theta_bar . V)`` and ``D theta_bar`` at ``x``."""
    mesh = u.mesh
    w = 5 * mesh.h if band is None else band
    # RK4 chords near the curved boundary may leave the cells by O(h^2)
    g, Hs = jet(x, slack=0.25)
    gn = np.linalg.norm(g)
    if ztol is not None and gn <= ztol:
        raise EnteredCriticalBall(f"|Du| = {gn:.3e} at {x}")
    ebar = np.array([g[1], -g[0]]) / gn
    dth = -(Hs @ ebar) / gn
    dist = mesh.domain.distance_to_boundary(np.asarray(x)[None])[0]
    s = 1.0 - smoothstep(dist / w)        # 1 at the boundary, 0 in the interior
    V = (1 - s) * dth + s * ebar
    return V / (dth @ V), dth


def rotation_flow(u: ScalarField, x, tau: float, steps: int = 1000,
                  jet: RecoveredJet | None = None) -> RotationResult:
    """Integrate ``xi' = F(xi)`` for time ``tau`` with classical RK4 steps."""
    from .flow import sup_grad

    jet = jet or RecoveredJet.of(u)
    x = np.asarray(x, dtype=float).copy()
    ztol = 1e-4 * sup_grad(u)
    traj = [x.copy()]
    th0 = theta_bar(jet(x)[0])
    worst = 0.0
    if tau == 0:
        return RotationResult(np.array(traj), 0.0, 0.0)
    dt = tau / steps

    def F(p):
        return rotation_field(u, jet, p, ztol=ztol)

    for _ in range(steps):
        k1, d1 = F(x)
        worst = max(worst, abs(d1 @ k1 - 1))
        k2, _ = F(x + 0.5 * dt * k1)
        k3, _ = F(x + 0.5 * dt * k2)
        k4, _ = F(x + dt * k3)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        traj.append(x.copy())
    th1 = theta_bar(jet(x, slack=0.25)[0])
    return RotationResult(np.array(traj), float(abs(_wrap(th1 - th0 - tau))), worst)
