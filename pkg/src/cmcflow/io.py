"""Plain-text and JSON dumps of meshes, fields, traces and reports."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .convexity import _G, _L
from .domain import make_domain
from .elliptic import ScalarField, recover_nodal
from .mesh import Mesh, triangulate

TRACE_HEADER = ["H", "W", "area", "sup_grad", "lambda1", "minG", "maxL",
                "x0_x", "x0_y", "detHess_x0", "status"]


def fmt(x) -> str:
    """17 significant digits: round-trips every 64-bit float."""
    return f"{float(x):.17g}"


def write_json(path, obj) -> None:
    path = Path(path)
    try:
        with open(path, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def dump_field(u: ScalarField, path) -> None:
    """One line per vertex: ``x y u ux uy uxx uxy uyy G L``."""
    mesh = u.mesh
    g, H = recover_nodal(u)
    nv = mesh.n_vertices
    if np.abs(u.coef).max() == 0.0:
        g, H = np.zeros_like(g), np.zeros_like(H)
    G = _G(H[:nv])
    L = _L(g[:nv], H[:nv])
    with open(path, "w") as fh:
        for i in range(nv):
            row = (*mesh.vertices[i], u.coef[i], *g[i], H[i, 0, 0], H[i, 0, 1], H[i, 1, 1],
                   G[i], L[i])
            fh.write(" ".join(fmt(v) for v in row) + "\n")


def read_field_columns(path) -> np.ndarray:
    return np.loadtxt(path, ndmin=2)


def write_polyline(path, pts) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y"])
        for x, y in pts:
            w.writerow([fmt(x), fmt(y)])


def write_trace(path, trace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in trace.rows:
            w.writerow([fmt(r.H), fmt(r.W), fmt(r.area), fmt(r.sup_grad), fmt(r.lambda1),
                        fmt(r.minG), fmt(r.maxL), fmt(r.x0[0]), fmt(r.x0[1]),
                        fmt(r.detHess_x0), r.status])


def read_trace(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_stability_table(path, samples) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["phi_id", "d2J", "bound", "margin"])
        for s in samples:
            w.writerow([s.phi_id, fmt(s.d2J), fmt(s.bound), fmt(s.margin)])


def _floats(a) -> list[float]:
    return [float(v) for v in np.asarray(a)]


def export_state(state, out_dir, extra: dict | None = None) -> dict:
    """Write ``mesh.txt``, ``field.txt`` and ``state.json`` for a FlowState.

    ``state.json`` carries every nodal coefficient, so importing reproduces the
    fields bit for bit.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mesh = state.mesh
    mesh.dump(out / "mesh.txt")
    dump_field(state.u, out / "field.txt")
    meta = {
        "domain": mesh.domain.descriptor, "h": mesh.h, "H": state.H,
        "newton_iters": state.newton_iters, "sup_grad": state.sup_grad,
        "residual": state.residual, "n_nodes": mesh.n_nodes,
        "u": _floats(state.u.coef), "udot": _floats(state.udot.coef),
    }
    if extra:
        meta.update(extra)
    write_json(out / "state.json", meta)
    return meta


def import_state(in_dir, mesh: Mesh | None = None):
    """Rebuild a FlowState written by ``export_state``; the mesh is regenerated
    deterministically from the stored domain descriptor and ``h``."""
    from .flow import FlowState

    src = Path(in_dir)
    with open(src / "state.json") as fh:
        meta = json.load(fh)
    if mesh is None:
        mesh = triangulate(make_domain(meta["domain"]), meta["h"])
    if mesh.n_nodes != meta["n_nodes"]:
        raise ValueError(f"{src}: mesh has {mesh.n_nodes} nodes, state has {meta['n_nodes']}")
    u = ScalarField(mesh, np.array(meta["u"], dtype=float))
    udot = ScalarField(mesh, np.array(meta["udot"], dtype=float))
    return FlowState(meta["H"], u, udot, meta["newton_iters"], meta["sup_grad"],
                     meta["residual"])
