"""Quadratic finite elements for the minimal-surface flux and its linearizations.

Cells are isoparametric six-node triangles with node order
``v0 v1 v2 m01 m12 m20``. All integrals use the six-point degree-4 rule.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg, splu

from .mesh import Mesh


class SolverStall(RuntimeError):
    """Raised when the conjugate-gradient solve exceeds its iteration cap."""


class DegeneratePatch(RuntimeError):
    """Raised when a recovery patch has too few nodes for a quadratic fit."""


class OutsideMesh(ValueError):
    """Raised when a point lies outside every cell."""


# --------------------------------------------------------------------- flux
@dataclass(frozen=True)
class FluxJet:
    A: np.ndarray    # (2,)
    A1: np.ndarray   # (2, 2)
    A2: np.ndarray   # (2, 2, 2)


def flux_terms(p):
    """Vectorized flux ``A = p / W`` and its first two ``p``-derivatives.

    ``p`` has shape ``(..., 2)``; returns arrays of shape ``(..., 2)``,
    ``(..., 2, 2)`` and ``(..., 2, 2, 2)``.
    """
    p = np.asarray(p, dtype=float)
    W = np.sqrt(1.0 + (p * p).sum(-1))[..., None]
    I = np.eye(2)
    A = p / W
    W1 = W[..., None]
    pp = p[..., :, None] * p[..., None, :]
    A1 = I / W1 - pp / W1 ** 3
    W2 = W1[..., None]
    ppp = pp[..., :, :, None] * p[..., None, None, :]
    Ip = I[:, :, None] * p[..., None, None, :]          # d_ij p_k
    Ik = np.einsum("ik,...j->...ijk", I, p)             # d_ik p_j
    Jk = np.einsum("jk,...i->...ijk", I, p)             # d_jk p_i
    A2 = -(Ip + Ik + Jk) / W2 ** 3 + 3 * ppp / W2 ** 5
    return A, A1, A2


def flux_jet(p) -> FluxJet:
    A, A1, A2 = flux_terms(np.asarray(p, dtype=float))
    return FluxJet(A, A1, A2)


# ---------------------------------------------------------- reference element
_QA, _QB = 0.445948490915965, 0.091576213509771
_WA, _WB = 0.223381589678011, 0.109951743655322
QUAD_BARY = np.array([
    [1 - 2 * _QA, _QA, _QA], [_QA, 1 - 2 * _QA, _QA], [_QA, _QA, 1 - 2 * _QA],
    [1 - 2 * _QB, _QB, _QB], [_QB, 1 - 2 * _QB, _QB], [_QB, _QB, 1 - 2 * _QB],
])
QUAD_W = 0.5 * np.array([_WA] * 3 + [_WB] * 3)   # reference area 1/2


def shape(xi, eta):
    """P2 shape functions and reference gradients at ``(xi, eta)``."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    l0, l1, l2 = 1 - xi - eta, xi, eta
    N = np.stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                  4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0], -1)
    # d/dxi and d/deta with dl0 = (-1, -1), dl1 = (1, 0), dl2 = (0, 1)
    dxi = np.stack([-(4 * l0 - 1), 4 * l1 - 1, 0 * xi,
                    4 * (l0 - l1), 4 * l2, -4 * l2], -1)
    deta = np.stack([-(4 * l0 - 1), 0 * xi, 4 * l2 - 1,
                     -4 * l1, 4 * l1, 4 * (l0 - l2)], -1)
    return N, np.stack([dxi, deta], -1)


_QN, _QDN = shape(QUAD_BARY[:, 1], QUAD_BARY[:, 2])   # (nq, 6), (nq, 6, 2)


@dataclass(frozen=True, eq=False)
class Geometry:
    """Per-cell isoparametric data at quadrature points."""

    points: np.ndarray    # (nc, nq, 2)
    wdet: np.ndarray      # (nc, nq) quadrature weight times |J|
    grads: np.ndarray     # (nc, nq, 6, 2) physical basis gradients


_GEOMETRY: "weakref.WeakKeyDictionary[Mesh, Geometry]" = weakref.WeakKeyDictionary()


def geometry(mesh: Mesh) -> Geometry:
    geo = _GEOMETRY.get(mesh)
    if geo is None:
        X = mesh.nodes[mesh.cell_nodes]                       # (nc, 6, 2)
        pts = np.einsum("qk,ckd->cqd", _QN, X)
        J = np.einsum("ckd,qke->cqde", X, _QDN)               # dx_d / dxi_e
        det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        if np.any(det <= 0):
            raise ValueError("isoparametric map is not orientation preserving")
        inv = np.empty_like(J)
        inv[..., 0, 0] = J[..., 1, 1] / det
        inv[..., 1, 1] = J[..., 0, 0] / det
        inv[..., 0, 1] = -J[..., 0, 1] / det
        inv[..., 1, 0] = -J[..., 1, 0] / det
        # grad_x N = J^{-T} grad_xi N
        grads = np.einsum("qke,cqed->cqkd", _QDN, inv)
        geo = Geometry(points=pts, wdet=det * QUAD_W, grads=grads)
        _GEOMETRY[mesh] = geo
    return geo


# -------------------------------------------------------------------- fields
@dataclass(frozen=True, eq=False)
class ScalarField:
    mesh: Mesh
    coef: np.ndarray

    def __post_init__(self):
        coef = np.asarray(self.coef, dtype=float)
        if coef.shape != (self.mesh.n_nodes,):
            raise ValueError(f"expected {self.mesh.n_nodes} coefficients, got {coef.shape}")
        object.__setattr__(self, "coef", coef)

    @classmethod
    def zeros(cls, mesh: Mesh) -> "ScalarField":
        return cls(mesh, np.zeros(mesh.n_nodes))

    @classmethod
    def interpolate(cls, mesh: Mesh, fn) -> "ScalarField":
        """Nodal interpolant of ``fn(x, y)``."""
        x, y = mesh.nodes.T
        return cls(mesh, np.broadcast_to(fn(x, y), x.shape).astype(float))

    def __neg__(self):
        return ScalarField(self.mesh, -self.coef)

    def __add__(self, other):
        return ScalarField(self.mesh, self.coef + _coef(other))

    def __sub__(self, other):
        return ScalarField(self.mesh, self.coef - _coef(other))

    def __mul__(self, s):
        return ScalarField(self.mesh, self.coef * s)

    __rmul__ = __mul__

    def values_at_quad(self):
        return np.einsum("qk,ck->cq", _QN, self.coef[self.mesh.cell_nodes])

    def grad_at_quad(self):
        g = geometry(self.mesh)
        return np.einsum("cqkd,ck->cqd", g.grads, self.coef[self.mesh.cell_nodes])

    def integral(self) -> float:
        return float((geometry(self.mesh).wdet * self.values_at_quad()).sum())

    def __call__(self, x):
        """Point evaluation at ``x`` (shape (2,) or (m, 2))."""
        return evaluate_nodal(self.mesh, self.coef, x)


def _coef(other):
    return other.coef if isinstance(other, ScalarField) else other


# ------------------------------------------------------------ point location
def locate(mesh: Mesh, x, tol: float = 1e-9, slack: float = 1e-6):
    """Return ``(cells, xi, eta)`` for points ``x``.

    Points whose best barycentric coordinate is below ``-slack`` raise
    OutsideMesh; smaller excursions are extrapolated from the nearest cell.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    k = min(12, len(mesh.cells))
    _, cand = mesh.centroid_tree.query(x, k=k)
    cells = np.full(len(x), -1)
    ref = np.zeros((len(x), 2))
    best = np.full(len(x), -np.inf)
    for j in range(k):
        c = cand[:, j]
        xi, eta = _inverse_map(mesh, c, x)
        lam = np.stack([1 - xi - eta, xi, eta], 1).min(1)
        better = lam > best
        cells[better] = c[better]
        ref[better] = np.stack([xi, eta], 1)[better]
        best[better] = lam[better]
        if np.all(best >= -tol):
            break
    if np.any(best < -slack):
        bad = x[np.argmin(best)]
        raise OutsideMesh(f"point {bad} is outside the mesh")
    return cells, ref[:, 0], ref[:, 1]


def _inverse_map(mesh, cells, x):
    X = mesh.nodes[mesh.cell_nodes[cells]]          # (m, 6, 2)
    v = X[:, :3]
    # affine guess from the straight triangle
    d1 = v[:, 1] - v[:, 0]
    d2 = v[:, 2] - v[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    r = x - v[:, 0]
    xi = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
    eta = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
    curved = mesh.node_boundary[mesh.cell_nodes[cells, 3:]].any(1)
    if np.any(curved):
        for _ in range(6):
            N, dN = shape(xi, eta)
            F = np.einsum("mk,mkd->md", N, X) - x
            J = np.einsum("mkd,mke->mde", X, dN)
            dj = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            dxi = (J[:, 1, 1] * F[:, 0] - J[:, 0, 1] * F[:, 1]) / dj
            deta = (-J[:, 1, 0] * F[:, 0] + J[:, 0, 0] * F[:, 1]) / dj
            xi = np.where(curved, xi - dxi, xi)
            eta = np.where(curved, eta - deta, eta)
    return xi, eta


def evaluate_nodal(mesh: Mesh, values, x, slack: float = 1e-6):
    """Interpolate nodal ``values`` (shape (n,) + tail) at points ``x``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    cells, xi, eta = locate(mesh, x, slack=slack)
    N, _ = shape(xi, eta)
    vals = np.asarray(values)[mesh.cell_nodes[cells]]       # (m, 6, ...)
    out = np.einsum("mk,mk...->m...", N, vals)
    return out[0] if single else out


def evaluate_gradient(field: ScalarField, x):
    """Finite-element gradient of ``field`` at points ``x``."""
    mesh = field.mesh
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    cells, xi, eta = locate(mesh, x)
    _, dN = shape(xi, eta)
    X = mesh.nodes[mesh.cell_nodes[cells]]
    J = np.einsum("mkd,mke->mde", X, dN)
    grads = np.einsum("mke,med->mkd", dN, np.linalg.inv(J))
    out = np.einsum("mkd,mk->md", grads, field.coef[mesh.cell_nodes[cells]])
    return out[0] if single else out


# ----------------------------------------------------------------- assembly
def _scatter_vector(mesh: Mesh, local):
    return np.bincount(mesh.cell_nodes.ravel(), weights=local.ravel(),
                       minlength=mesh.n_nodes)


def _scatter_matrix(mesh: Mesh, local):
    cn = mesh.cell_nodes
    rows = np.repeat(cn, 6, axis=1).ravel()
    cols = np.tile(cn, (1, 6)).ravel()
    n = mesh.n_nodes
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def load_vector(mesh: Mesh, f) -> np.ndarray:
    """Weak load ``b_i = int f phi_i`` for a constant or a ScalarField ``f``."""
    g = geometry(mesh)
    fq = f.values_at_quad() if isinstance(f, ScalarField) else np.broadcast_to(
        np.asarray(f, dtype=float), g.wdet.shape)
    local = np.einsum("cq,qk->ck", g.wdet * fq, _QN)
    return _scatter_vector(mesh, local)


def flux_load(mesh: Mesh, vec_at_quad) -> np.ndarray:
    """Weak load ``b_i = int V . D phi_i`` for a vector field given at quadrature points."""
    g = geometry(mesh)
    local = np.einsum("cq,cqd,cqkd->ck", g.wdet, vec_at_quad, g.grads)
    return _scatter_vector(mesh, local)


def full_residual(u: ScalarField, H: float) -> np.ndarray:
    Du = u.grad_at_quad()
    A, _, _ = flux_terms(Du)
    return flux_load(u.mesh, A) + load_vector(u.mesh, 2.0 * H)


def assemble_residual(u: ScalarField, H: float) -> np.ndarray:
    """Weak residual ``r_i = int A(Du).D phi_i + 2H phi_i`` on the free nodes."""
    return full_residual(u, H)[u.mesh.free]


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Divergence-form operator restricted to free nodes, with a Dirichlet lift."""

    mesh: Mesh
    K: sp.csr_matrix        # full (n, n) stiffness
    Kff: sp.csr_matrix
    Kfb: sp.csr_matrix

    def quadratic_form(self, phi) -> float:
        c = _coef(phi)
        return float(c @ (self.K @ c))

    def rayleigh(self, x) -> float:
        return float(x @ (self.Kff @ x) / (x @ x))


def assemble_matrix(mesh: Mesh, coeff_at_quad) -> sp.csr_matrix:
    """Full stiffness ``M_ij = int a D phi_j . D phi_i`` with a given 2x2 coefficient."""
    g = geometry(mesh)
    local = np.einsum("cq,cqkd,cqde,cqle->ckl", g.wdet, g.grads, coeff_at_quad, g.grads)
    # symmetrize away roundoff in the local products
    local = 0.5 * (local + local.transpose(0, 2, 1))
    return _scatter_matrix(mesh, local)


def _operator(mesh: Mesh, K) -> SparseOperator:
    K = sp.csr_matrix(0.5 * (K + K.T))
    f, b = mesh.free, mesh.fixed
    return SparseOperator(mesh, K, K[f][:, f].tocsr(), K[f][:, b].tocsr())


def assemble_linearized(u: ScalarField) -> SparseOperator:
    """Stiffness of ``v -> div(A1(Du) Dv)``, symmetric positive definite."""
    _, A1, _ = flux_terms(u.grad_at_quad())
    return _operator(u.mesh, assemble_matrix(u.mesh, A1))


def laplacian(mesh: Mesh) -> SparseOperator:
    g = geometry(mesh)
    I = np.broadcast_to(np.eye(2), g.wdet.shape + (2, 2))
    return _operator(mesh, assemble_matrix(mesh, I))


def mass_matrix(mesh: Mesh) -> sp.csr_matrix:
    g = geometry(mesh)
    local = np.einsum("cq,qk,ql->ckl", g.wdet, _QN, _QN)
    return _scatter_matrix(mesh, local)


# -------------------------------------------------------------------- solves
SOLVER_RTOL = 1e-12


def solve_free(op: SparseOperator, rhs: np.ndarray, method: str = "cg",
               x0: np.ndarray | None = None) -> np.ndarray:
    """Solve ``Kff x = rhs`` by Jacobi-preconditioned CG (or sparse LU)."""
    A = op.Kff
    nrm = np.linalg.norm(rhs)
    if nrm == 0.0:
        return np.zeros_like(rhs)
    if method == "direct":
        x = splu(A.tocsc()).solve(rhs)
    elif method == "cg":
        dinv = 1.0 / A.diagonal()
        prec = LinearOperator(A.shape, matvec=lambda v: dinv * v)
        cap = 50 * A.shape[0]
        x, info = cg(A, rhs, x0=x0, rtol=SOLVER_RTOL, atol=0.0, M=prec, maxiter=cap)
        if info != 0:
            raise SolverStall(f"CG did not reach rtol {SOLVER_RTOL} in {cap} iterations")
    else:
        raise ValueError(f"unknown method {method!r}")
    res = np.linalg.norm(A @ x - rhs) / nrm
    if res > 1e-10:
        raise SolverStall(f"linear residual {res:.2e} above 1e-10")
    return x


def solve_dirichlet(op: SparseOperator, rhs, bc=0.0, method: str = "cg") -> ScalarField:
    """Solve ``div(a Dv) = f`` weakly with ``v = bc`` on the boundary.

    ``rhs`` is either the source ``f`` (a constant or a ScalarField) or an
    already assembled weak vector ``b`` over all nodes with ``b_i = int f phi_i``.
    """
    mesh = op.mesh
    if isinstance(rhs, np.ndarray) and rhs.shape == (mesh.n_nodes,):
        b = rhs
    else:
        b = load_vector(mesh, rhs)
    v = np.zeros(mesh.n_nodes)
    if isinstance(bc, ScalarField):
        v[mesh.fixed] = bc.coef[mesh.fixed]
    else:
        v[mesh.fixed] = np.broadcast_to(np.asarray(bc, dtype=float), mesh.fixed.shape)
    # weak form: -int a Dv.Dphi = int f phi  ->  K v = -b
    r = -b[mesh.free] - op.Kfb @ v[mesh.fixed]
    v[mesh.free] = solve_free(op, r, method=method)
    return ScalarField(mesh, v)


# ----------------------------------------------------------------- recovery
@dataclass(frozen=True, eq=False)
class _Patches:
    idx: np.ndarray      # (n, m) padded node indices
    pinv: np.ndarray     # (n, 6, m) least-squares solution operators
    scale: float


_PATCHES: "weakref.WeakKeyDictionary[Mesh, _Patches]" = weakref.WeakKeyDictionary()


def _patch_nodes(mesh: Mesh, i: int, depth: int = 2) -> np.ndarray:
    seen = {int(i)}
    frontier = [int(i)]
    nb = mesh.node_neighbors
    for _ in range(depth):
        nxt = []
        for j in frontier:
            for k in nb[j]:
                k = int(k)
                if k not in seen:
                    seen.add(k)
                    nxt.append(k)
        frontier = nxt
    return np.fromiter(seen, dtype=int)


def _fit_operator(pts, center, scale):
    d = (pts - center) / scale
    V = np.stack([np.ones(len(d)), d[:, 0], d[:, 1],
                  0.5 * d[:, 0] ** 2, d[:, 0] * d[:, 1], 0.5 * d[:, 1] ** 2], 1)
    s = np.linalg.svd(V, compute_uv=False)
    if len(d) < 6 or s[-1] < 1e-8 * s[0]:
        raise DegeneratePatch(f"patch of {len(d)} nodes cannot support a quadratic fit")
    return np.linalg.pinv(V)


def _patches(mesh: Mesh) -> _Patches:
    pat = _PATCHES.get(mesh)
    if pat is None:
        scale = mesh.h
        lists = [_patch_nodes(mesh, i) for i in range(mesh.n_nodes)]
        m = max(len(l) for l in lists)
        idx = np.zeros((mesh.n_nodes, m), dtype=int)
        pinv = np.zeros((mesh.n_nodes, 6, m))
        for i, l in enumerate(lists):
            idx[i, :len(l)] = l
            pinv[i, :, :len(l)] = _fit_operator(mesh.nodes[l], mesh.nodes[i], scale)
        pat = _Patches(idx, pinv, scale)
        _PATCHES[mesh] = pat
    return pat


def _coeffs_to_jet(c, scale):
    grad = c[..., 1:3] / scale
    hess = np.stack([np.stack([c[..., 3], c[..., 4]], -1),
                     np.stack([c[..., 4], c[..., 5]], -1)], -2) / scale ** 2
    return grad, hess


def recover_nodal(u: ScalarField):
    """Recovered gradient (n, 2) and Hessian (n, 2, 2) at every node."""
    pat = _patches(u.mesh)
    c = np.einsum("nkm,nm->nk", pat.pinv, u.coef[pat.idx])
    return _coeffs_to_jet(c, pat.scale)


def recover_derivatives(u: ScalarField, x):
    """Gradient and Hessian at ``x`` from a least-squares quadratic fit.

    The patch is every node within graph distance 2 of the node nearest
    ``x``; the fit is centred at ``x`` itself.
    """
    mesh = u.mesh
    x = np.asarray(x, dtype=float)
    _, i = mesh.node_tree.query(x)
    nodes = _patch_nodes(mesh, int(i))
    P = _fit_operator(mesh.nodes[nodes], x, mesh.h)
    c = P @ u.coef[nodes]
    return _coeffs_to_jet(c, mesh.h)


@dataclass(frozen=True, eq=False)
class RecoveredJet:
    """Recovered nodal gradient/Hessian, interpolated with the P2 basis."""

    field: ScalarField
    grad: np.ndarray
    hess: np.ndarray

    @classmethod
    def of(cls, u: ScalarField) -> "RecoveredJet":
        g, H = recover_nodal(u)
        return cls(u, g, H)

    def __call__(self, x, slack: float = 1e-6):
        x = np.asarray(x, dtype=float)
        g = evaluate_nodal(self.field.mesh, self.grad, x, slack)
        H = evaluate_nodal(self.field.mesh, self.hess, x, slack)
        return g, H

    def hess_at_quad(self):
        return np.einsum("qk,ck...->cq...", _QN, self.hess[self.field.mesh.cell_nodes])

    def grad_at_quad(self):
        return np.einsum("qk,ck...->cq...", _QN, self.grad[self.field.mesh.cell_nodes])
