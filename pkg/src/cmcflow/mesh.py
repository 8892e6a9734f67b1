"""Quadratic triangular meshes of convex domains.

Boundary vertices are placed at equal arclength on the exact curve; the
interior is seeded with a hexagonal lattice, Delaunay-triangulated and
relaxed by Laplacian smoothing. Mid-edge nodes are added last, with the
boundary ones evaluated on the curve so that boundary cells are
isoparametric.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .domain import ConvexDomain

MIN_ANGLE_DEG = 20.0


class MeshFailure(RuntimeError):
    """Raised when the quality thresholds cannot be met."""


@dataclass(frozen=True, eq=False)
class Mesh:
    domain: ConvexDomain
    h: float
    vertices: np.ndarray        # (nv, 2)
    cells: np.ndarray           # (nc, 3) vertex indices, counter-clockwise
    boundary_t: np.ndarray      # (nv,) curve parameter, nan for interior vertices
    edges: np.ndarray = field(repr=False)        # (ne, 2)
    cell_edges: np.ndarray = field(repr=False)   # (nc, 3): edge opposite nothing, edge k joins (k, k+1)
    nodes: np.ndarray = field(repr=False)        # (nv + ne, 2)
    node_boundary: np.ndarray = field(repr=False)
    cell_nodes: np.ndarray = field(repr=False)   # (nc, 6): v0 v1 v2 m01 m12 m20

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def boundary(self) -> np.ndarray:
        """Boundary flags of the vertices."""
        return ~np.isnan(self.boundary_t)

    @cached_property
    def free(self) -> np.ndarray:
        return np.flatnonzero(~self.node_boundary)

    @cached_property
    def fixed(self) -> np.ndarray:
        return np.flatnonzero(self.node_boundary)

    def straight_areas(self) -> np.ndarray:
        p = self.vertices[self.cells]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def angles(self) -> np.ndarray:
        p = self.vertices[self.cells]
        out = np.empty((len(p), 3))
        for k in range(3):
            a = p[:, (k + 1) % 3] - p[:, k]
            b = p[:, (k + 2) % 3] - p[:, k]
            cosang = (a * b).sum(1) / np.linalg.norm(a, axis=1) / np.linalg.norm(b, axis=1)
            out[:, k] = np.degrees(np.arccos(np.clip(cosang, -1, 1)))
        return out

    @cached_property
    def node_neighbors(self) -> list[np.ndarray]:
        """Adjacency of quadratic nodes: two nodes are neighbours if they share a cell."""
        n = self.n_nodes
        rows = np.repeat(self.cell_nodes, 6, axis=1).ravel()
        cols = np.tile(self.cell_nodes, (1, 6)).ravel()
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
        keep = rows != cols
        rows, cols = rows[keep], cols[keep]
        pairs = np.unique(np.stack([rows, cols], 1), axis=0)
        split = np.searchsorted(pairs[:, 0], np.arange(n + 1))
        return [pairs[split[i]:split[i + 1], 1] for i in range(n)]

    @cached_property
    def vertex_neighbors(self) -> list[np.ndarray]:
        e = self.edges
        both = np.concatenate([e, e[:, ::-1]])
        both = both[np.lexsort((both[:, 1], both[:, 0]))]
        split = np.searchsorted(both[:, 0], np.arange(self.n_vertices + 1))
        return [both[split[i]:split[i + 1], 1] for i in range(self.n_vertices)]

    @cached_property
    def vertex_depth(self) -> np.ndarray:
        """Graph distance (in edges) from each vertex to the nearest boundary vertex."""
        depth = np.full(self.n_vertices, -1)
        frontier = np.flatnonzero(self.boundary)
        depth[frontier] = 0
        d = 0
        while len(frontier):
            d += 1
            nxt = np.unique(np.concatenate([self.vertex_neighbors[i] for i in frontier]))
            nxt = nxt[depth[nxt] < 0]
            depth[nxt] = d
            frontier = nxt
        return depth

    @cached_property
    def node_tree(self) -> cKDTree:
        return cKDTree(self.nodes)

    @cached_property
    def centroid_tree(self) -> cKDTree:
        return cKDTree(self.vertices[self.cells].mean(1))

    def connected_components(self) -> int:
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import connected_components

        # cells are adjacent when they share an edge
        ce = self.cell_edges.ravel()
        cid = np.repeat(np.arange(len(self.cells)), 3)
        order = np.argsort(ce, kind="stable")
        ce, cid = ce[order], cid[order]
        same = ce[1:] == ce[:-1]
        a, b = cid[:-1][same], cid[1:][same]
        g = coo_matrix((np.ones(len(a)), (a, b)), shape=(len(self.cells),) * 2)
        return connected_components(g, directed=False)[0]

    def scaled(self, factor: float, center) -> "Mesh":
        """Mesh of the dilated domain ``center + factor * (Omega - center)``."""
        center = np.asarray(center, dtype=float)
        dom = _ScaledDomain(self.domain, factor, center)
        return Mesh(
            domain=dom, h=self.h * factor,
            vertices=center + factor * (self.vertices - center),
            cells=self.cells, boundary_t=self.boundary_t, edges=self.edges,
            cell_edges=self.cell_edges,
            nodes=center + factor * (self.nodes - center),
            node_boundary=self.node_boundary, cell_nodes=self.cell_nodes,
        )

    # ------------------------------------------------------------------- I/O
    def dump(self, path) -> None:
        """Write ``v x y boundary_flag`` per node and ``c i j k`` per triangle."""
        with open(path, "w") as fh:
            fh.write(f"# domain {self.domain.descriptor} h {self.h!r}\n")
            for (x, y), b in zip(self.nodes, self.node_boundary):
                fh.write(f"v {x:.17g} {y:.17g} {int(b)}\n")
            for i, j, k in self.cells:
                fh.write(f"c {i} {j} {k}\n")


class _ScaledDomain(ConvexDomain):
    """A dilated copy of a domain (used for eigenvalue monotonicity checks)."""

    def __init__(self, base: ConvexDomain, factor: float, center):
        object.__setattr__(self, "kind", base.kind)
        object.__setattr__(self, "params", base.params)
        object.__setattr__(self, "descriptor", f"{base.descriptor}@x{factor!r}")
        object.__setattr__(self, "_base", base)
        object.__setattr__(self, "_factor", float(factor))
        object.__setattr__(self, "_center", np.asarray(center, dtype=float))

    def curve(self, t):
        g, d1, d2 = self._base.curve(t)
        f = self._factor
        return self._center + f * (g - self._center), f * d1, f * d2


def triangulate(domain: ConvexDomain, h: float, smoothing_sweeps: int = 8) -> Mesh:
    """Triangulate ``domain`` with target edge length ``h``."""
    if not (0 < h < domain.diameter / 4):
        raise ValueError(f"h={h} outside (0, diam/4 = {domain.diameter / 4:.4g})")
    nb = max(12, int(np.ceil(domain.perimeter / h)))
    tb = domain.arclength_parameters(nb)
    bpts = domain.point(tb)
    hb = domain.perimeter / nb

    # hexagonal lattice seeded at the centroid
    c = domain.centroid
    R = domain.diameter
    dy = h * np.sqrt(3) / 2
    ny = int(np.ceil(R / dy)) + 1
    nx = int(np.ceil(R / h)) + 1
    jj, ii = np.meshgrid(np.arange(-ny, ny + 1), np.arange(-nx, nx + 1), indexing="ij")
    lat = np.stack([ii * h + 0.5 * h * (jj % 2), jj * dy], -1).reshape(-1, 2) + c
    lat = lat[domain.contains(lat)]
    lat = lat[domain.distance_to_boundary(lat) > 0.7 * hb]

    pts = np.concatenate([bpts, lat])
    nbnd = len(bpts)
    for _ in range(smoothing_sweeps):
        adj = _adjacency(Delaunay(pts).simplices, len(pts))
        deg = np.asarray(adj.sum(1)).ravel()
        avg = (adj @ pts) / deg[:, None]
        pts = np.concatenate([pts[:nbnd], avg[nbnd:]])
    tri = Delaunay(pts).simplices
    cells = _orient(pts, tri)
    cells = cells[_areas(pts, cells) > 1e-14 * h * h]

    boundary_t = np.full(len(pts), np.nan)
    boundary_t[:nbnd] = tb
    mesh = _build_quadratic(domain, h, pts, cells, boundary_t)
    _check_quality(mesh)
    return mesh


def _areas(pts, cells):
    p = pts[cells]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _orient(pts, cells):
    cells = cells.copy()
    neg = _areas(pts, cells) < 0
    cells[neg] = cells[neg][:, [0, 2, 1]]
    return cells


def _adjacency(tri, n):
    from scipy.sparse import coo_matrix

    e = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    e = np.concatenate([e, e[:, ::-1]])
    adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()
    adj.data[:] = 1.0
    return adj


def _build_quadratic(domain, h, pts, cells, boundary_t) -> Mesh:
    local = np.array([[0, 1], [1, 2], [2, 0]])
    all_e = np.sort(cells[:, local].reshape(-1, 2), axis=1)
    edges, inverse = np.unique(all_e, axis=0, return_inverse=True)
    cell_edges = inverse.reshape(-1, 3)
    nv = len(pts)

    mids = 0.5 * (pts[edges[:, 0]] + pts[edges[:, 1]])
    counts = np.bincount(inverse.ravel(), minlength=len(edges))
    on_bnd = (counts == 1)
    ta = boundary_t[edges[on_bnd, 0]]
    tb = boundary_t[edges[on_bnd, 1]]
    if np.any(np.isnan(ta) | np.isnan(tb)):
        raise MeshFailure("boundary edge with an interior endpoint")
    # midpoint parameter along the shorter arc
    dt = np.mod(tb - ta + np.pi, 2 * np.pi) - np.pi
    tm = np.mod(ta + 0.5 * dt, 2 * np.pi)
    mids[on_bnd] = domain.point(tm)

    nodes = np.concatenate([pts, mids])
    node_boundary = np.concatenate([~np.isnan(boundary_t), on_bnd])
    cell_nodes = np.concatenate([cells, nv + cell_edges], axis=1)
    return Mesh(domain=domain, h=float(h), vertices=pts, cells=cells,
                boundary_t=boundary_t, edges=edges, cell_edges=cell_edges,
                nodes=nodes, node_boundary=node_boundary, cell_nodes=cell_nodes)


def _check_quality(mesh: Mesh) -> None:
    if np.any(mesh.straight_areas() <= 0):
        raise MeshFailure("inverted triangle")
    amin = mesh.angles().min()
    if amin < MIN_ANGLE_DEG:
        raise MeshFailure(f"minimum angle {amin:.2f} deg < {MIN_ANGLE_DEG}")
    if mesh.connected_components() != 1:
        raise MeshFailure("mesh is not connected")
