"""Self-contained acceptance checks, shared by ``cmcflow verify`` and the test-suite.

Every check builds its own meshes; expensive objects (meshes, traces) are
memoized on a :class:`Lab` so the full suite runs in a few minutes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from shapely.geometry import LineString, Point

from . import convexity as cvx
from .domain import make_domain
from .elliptic import RecoveredJet, ScalarField, laplacian, solve_dirichlet
from .flow import StopCriteria, continue_flow, estimate_hmax, solve_along, solve_cmc
from .mesh import triangulate
from .sensitivity import difference_quotient_check
from .stability import (curvature_energy, domain_monotonicity_check, first_eigenvalue,
                        overstability_check, random_variations)

H0 = 0.05
J01_SQ = 2.404825557695773 ** 2
CAP_A = 2.0          # sphere radius for H = -1/2


def cap(x, y, a=CAP_A, R=1.0):
    return np.sqrt(a * a - x * x - y * y) - np.sqrt(a * a - R * R)


def cap_ruchert(a=CAP_A, R=1.0):
    area = 2 * np.pi * a * (a - np.sqrt(a * a - R * R))
    return 0.5 * (2 / a ** 2) * area


@dataclass
class Result:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.number:2d}. {self.name}: {self.detail} ({self.seconds:.1f}s)"


class Lab:
    """Memoized meshes, states and traces used across checks."""

    TRACE_DOMAINS = ("disk:1", "ellipse:2,1", "superellipse:1,1,4")

    def __init__(self, h: float = H0, dH: float = 0.05, seed: int = 0, n_variations: int = 100):
        self.h = h
        self.dH = dH
        self.seed = seed
        self.n_variations = n_variations
        self._meshes = {}
        self._traces = {}
        self._states = {}

    def mesh(self, desc: str, h: float | None = None):
        key = (desc, h or self.h)
        if key not in self._meshes:
            self._meshes[key] = triangulate(make_domain(desc), key[1])
        return self._meshes[key]

    def state(self, desc: str, H: float, h: float | None = None):
        key = (desc, H, h or self.h)
        if key not in self._states:
            self._states[key] = solve_along(self.mesh(desc, h), H)
        return self._states[key]

    def trace(self, desc: str):
        if desc not in self._traces:
            self._traces[desc] = continue_flow(self.mesh(desc), -1, self.dH,
                                               StopCriteria(grad_cap=1e3, dH_min=1e-3))
        return self._traces[desc]

    @cached_property
    def disk_torsion(self):
        return solve_dirichlet(laplacian(self.mesh("disk:1")), 2.0)


# ------------------------------------------------------------------ checks
def c01_cap_oracle(lab: Lab):
    errs = []
    for h in (lab.h, lab.h / 2):
        m = lab.mesh("disk:1", h)
        st = lab.state("disk:1", -0.5, h)
        errs.append(float(np.abs(st.u.coef - cap(*m.nodes.T)).max()))
    ratio = errs[0] / errs[1]
    ok = errs[0] <= 1e-3 and ratio >= 3
    return ok, f"err(h)={errs[0]:.3e} <= 1e-3, ratio {ratio:.2f} >= 3"


def c02_symmetry(lab: Lab):
    m = lab.mesh("disk:1")
    worst = 0.0
    for H in (0.2, 0.5):
        a = solve_cmc(m, H)
        b = solve_cmc(m, -H)
        worst = max(worst, float(np.abs(a.u.coef + b.u.coef).max()))
    return worst <= 1e-8, f"max |u(H) + u(-H)| = {worst:.2e} <= 1e-8"


def c03_hmax(lab: Lab):
    tol = 0.01
    lo, hi = estimate_hmax(lab.mesh("disk:1"), tol)
    disk_ok = (hi - lo) <= 0.02 and lo <= 1.05 and hi >= 0.95
    parts = [f"disk [{lo:.4f}, {hi:.4f}]"]
    bound_ok = hi <= lab.mesh("disk:1").domain.isoperimetric_bound + tol
    for desc in ("ellipse:2,1", "superellipse:1,1,4"):
        m = lab.mesh(desc)
        l2, h2 = estimate_hmax(m, tol)
        b = m.domain.isoperimetric_bound
        bound_ok &= h2 <= b + tol
        parts.append(f"{desc} [{l2:.4f}, {h2:.4f}] bound {b:.4f}")
    return disk_ok and bound_ok, "; ".join(parts)


def c04_volume_monotone(lab: Lab):
    parts, ok = [], True
    for desc in Lab.TRACE_DOMAINS:
        tr = lab.trace(desc)
        v = tr.monotonicity_violations()
        ok &= v == 0
        parts.append(f"{desc}: {len(tr.rows)} rows, {v} violations")
    return ok, "; ".join(parts)


def c05_torsion(lab: Lab):
    h = lab.h
    t = lab.disk_torsion
    c_disk = float(t(np.zeros(2)))
    te = solve_dirichlet(laplacian(lab.mesh("ellipse:2,1")), 2.0)
    c_ell = float(te(np.zeros(2)))
    st0 = solve_cmc(lab.mesh("disk:1"), 0.0)
    wdot = st0.udot.integral()
    ok = (abs(c_disk + 0.5) <= 2 * h * h and abs(c_ell + 0.8) <= 5e-3
          and abs(wdot + np.pi / 4) <= 1e-3)
    return ok, (f"disk center {c_disk:.8f}, ellipse center {c_ell:.8f}, "
                f"int udot {wdot:.8f} (-pi/4 = {-np.pi / 4:.8f})")


def c06_difference_quotient(lab: Lab):
    m = lab.mesh("disk:1")
    parts, ok = [], True
    for H in (0.0, -0.3):
        tab = difference_quotient_check(m, H, (0.08, 0.04, 0.02))
        ok &= tab.slope >= 0.8
        parts.append(f"H={H}: slope {tab.slope:.3f} errors "
                     + ", ".join(f"{e:.2e}" for e in tab.errors))
    return ok, "; ".join(parts)


def c07_small_bubbles(lab: Lab):
    ell = lab.state("ellipse:2,1", -0.05)
    rep = cvx.classify(ell.u)
    ms = lab.mesh("superellipse:1,1,8")
    ts = solve_dirichlet(laplacian(ms), 2.0)
    Gs = cvx.convexity_fields(ts).G.min()
    te = solve_dirichlet(laplacian(lab.mesh("ellipse:2,1")), 2.0)
    Ge = cvx.convexity_fields(te).G
    ge_err = float(np.abs(Ge / 0.64 - 1).max())
    ok = rep.classification == "strictly_concave" and rep.minG > 0 and Gs < 0 and ge_err <= 0.05
    return ok, (f"ellipse H=-0.05: {rep.classification}, minG {rep.minG:.4e}; "
                f"superellipse p=8 torsion minG {Gs:.4f}; ellipse torsion G rel err {ge_err:.2e}")


def c08_half_power(lab: Lab):
    parts, ok = [], True
    for desc in ("disk:1", "ellipse:2,1"):
        m = lab.mesh(desc)
        t = solve_dirichlet(laplacian(m), 2.0)
        Gpsi = cvx.power_transform_G(-t)
        ok &= bool(Gpsi.min() > 0)
        parts.append(f"{desc}: min G_sqrt(-udot) {Gpsi.min():.4f}")
    m = lab.mesh("disk:1")
    phi = ScalarField.interpolate(m, lambda x, y: 1 - x * x - y * y)
    spot = float(cvx.power_transform_G(phi, [[0.5, 0.0]])[0])
    spot_ok = abs(spot / 1.5556 - 1) <= 0.05
    parts.append(f"spot G_psi(0.5,0) = {spot:.4f} vs stated 1.5556 +- 5%")
    return ok and spot_ok, "; ".join(parts)


def c09_overstability(lab: Lab):
    parts, ok = [], True
    for desc in ("disk:1", "ellipse:2,1"):
        tr = lab.trace(desc)
        neg = viol = 0
        n = 0
        for st in tr.states:
            phis = random_variations(st.mesh, lab.n_variations, lab.seed, st.udot)
            for s in overstability_check(st, phis):
                n += 1
                scale = max(abs(s.d2J), abs(s.bound), 1e-300)
                neg += s.d2J < -1e-8 * scale
                viol += s.margin < -1e-8 * scale
        ok &= neg == 0 and viol == 0
        parts.append(f"{desc}: {n} samples, {neg} negative, {viol} below bound")
    st0 = lab.trace("disk:1").states[0]
    flow = random_variations(st0.mesh, 1, lab.seed, st0.udot)[0][1]
    s = overstability_check(st0, [("flow", flow)])[0]
    eq = abs(s.d2J / s.bound - 1)
    ok &= eq <= 0.02
    parts.append(f"equality at phi ~ udot, H=0: |d2J/bound - 1| = {eq:.2e}")
    return ok, "; ".join(parts)


def c10_eigenvalue(lab: Lab):
    m = lab.mesh("disk:1")
    lam0 = first_eigenvalue(ScalarField.zeros(m))[0]
    rel = abs(lam0 / J01_SQ - 1)
    l_big, l_small = domain_monotonicity_check(ScalarField.zeros(m), 0.5)
    ratio = l_small / l_big
    pos = True
    n = 0
    for desc in ("disk:1", "ellipse:2,1"):
        for st in lab.trace(desc).states:
            pos &= first_eigenvalue(st.u)[0] > 0
            n += 1
    ok = rel <= 0.01 and pos and abs(ratio / 4 - 1) <= 0.02
    return ok, (f"lambda1(0) = {lam0:.6f} (rel err {rel:.1e}); lambda1 > 0 on {n} rows: {pos}; "
                f"shrink ratio {ratio:.6f}")


def c11_critical_point(lab: Lab):
    parts, ok = [], True
    for desc in Lab.TRACE_DOMAINS:
        tr = lab.trace(desc)
        bad = 0
        for st in tr.states:
            if np.abs(st.u.coef).max() == 0:
                continue
            cps = cvx.find_critical_points(st.u)
            if len(cps) != 1 or not cps[0].nondegenerate:
                bad += 1
        ok &= bad == 0
        parts.append(f"{desc}: {len(tr.states) - 1} states, {bad} without a unique nondegenerate point")
    return ok, "; ".join(parts)


def c12_nodal_sets(lab: Lab):
    parts, ok = [], True
    for desc, H in (("disk:1", -0.5), ("ellipse:2,1", -0.3)):
        st = lab.state(desc, H)
        jet = RecoveredJet.of(st.u)
        for th in (0.0, np.pi / 6, np.pi / 3):
            try:
                ns = cvx.nodal_set(st.u, th, jet)
            except cvx.MultipleComponents as exc:
                ok = False
                parts.append(f"{desc} theta={th:.3f}: {exc}")
                continue
            ident = max(abs(a / b - 1) for a, b in ns.boundary_identity)
            good = (ns.simple and ns.endpoint_error <= st.mesh.h
                    and ns.min_grad_of_derivative > 0 and ident <= 0.10)
            ok &= good
            parts.append(f"{desc} theta={th:.3f}: end err {ns.endpoint_error:.1e}, "
                         f"min|Du_e| {ns.min_grad_of_derivative:.3f}, identity err {ident:.3f}")
    return ok, "; ".join(parts)


def c13_rotation(lab: Lab):
    st = lab.state("disk:1", -0.5)
    r = cvx.rotation_flow(st.u, [0.5, 0.0], np.pi / 2, 1000)
    ok = r.drift <= 1e-3
    parts = [f"radial drift {r.drift:.2e}"]
    ell = lab.state("ellipse:2,1", -0.3)
    jet = RecoveredJet.of(ell.u)
    n0 = cvx.nodal_set(ell.u, 0.0, jet)
    target = LineString(cvx.nodal_set(ell.u, np.pi / 4, jet).polyline)
    x0 = cvx.find_critical_points(ell.u, jet)[0].location
    starts = n0.polyline[np.linspace(0, len(n0.polyline) - 1, 9).astype(int)]
    starts = [p for p in starts if np.linalg.norm(p - x0) > 3 * ell.mesh.h]
    worst = 0.0
    for p in starts:
        end = cvx.rotation_flow(ell.u, p, np.pi / 4, 200, jet).trajectory[-1]
        worst = max(worst, target.distance(Point(end)))
    ok &= worst <= 2 * ell.mesh.h
    parts.append(f"ellipse transport N_0 -> N_pi/4: max distance {worst:.2e} "
                 f"over {len(starts)} starts (2h = {2 * ell.mesh.h})")
    return ok, "; ".join(parts)


def c14_ruchert(lab: Lab):
    st = lab.state("disk:1", -0.5)
    val, flag = curvature_energy(st.u, st.H)
    ref = 0.8418
    ok = abs(val / ref - 1) <= 0.02 and flag
    return ok, f"integral {val:.5f} vs {ref} (closed form {cap_ruchert():.5f}), flag {flag}"


def c15_serrin(lab: Lab):
    worst = 0.0
    n = 0
    for desc in Lab.TRACE_DOMAINS:
        tr = lab.trace(desc)
        d = tr.mesh.domain.diameter
        for st in tr.states:
            worst = max(worst, float(np.abs(st.u.coef).max()) / d)
            n += 1
    return worst <= 1.0, f"max sup|u| / diam = {worst:.4f} over {n} states"


CHECKS = [
    (1, "cap oracle", c01_cap_oracle),
    (2, "symmetry u(-H) = -u(H)", c02_symmetry),
    (3, "H_max bracket", c03_hmax),
    (4, "volume monotone in H", c04_volume_monotone),
    (5, "torsion oracles", c05_torsion),
    (6, "difference-quotient convergence", c06_difference_quotient),
    (7, "small-bubble convexity", c07_small_bubbles),
    (8, "half-power concavity", c08_half_power),
    (9, "overstability", c09_overstability),
    (10, "first eigenvalue", c10_eigenvalue),
    (11, "unique critical point", c11_critical_point),
    (12, "nodal sets", c12_nodal_sets),
    (13, "rotation flow", c13_rotation),
    (14, "curvature-energy integral", c14_ruchert),
    (15, "Serrin bound", c15_serrin),
]


def run_check(number: int, lab: Lab) -> Result:
    for n, name, fn in CHECKS:
        if n == number:
            t = time.perf_counter()
            try:
                ok, detail = fn(lab)
            except Exception as exc:   # a crash is a failed criterion, reported as such
                ok, detail = False, f"{type(exc).__name__}: {exc}"
            return Result(n, name, bool(ok), detail, time.perf_counter() - t)
    raise KeyError(number)


def run_all(lab: Lab | None = None, only=None, echo=print) -> list[Result]:
    lab = lab or Lab()
    out = []
    for n, _, _ in CHECKS:
        if only and n not in only:
            continue
        r = run_check(n, lab)
        if echo:
            echo(r.line())
        out.append(r)
    return out
