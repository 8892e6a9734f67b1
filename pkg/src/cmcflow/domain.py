"""Strictly convex planar domains and their boundary geometry.

A domain is described by a closed parametrization ``gamma(t)``,
``t in [0, 2*pi)``, traversed counter-clockwise. Each kind supplies the
curve and its first two derivatives in closed form, so curvature, normals
and arclength follow without numerical differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

KINDS = ("disk", "ellipse", "superellipse", "fourier-support")

# boundary samples used for integrals (area, perimeter) and distance queries
N_SAMPLES = 10_000


class NonConvex(ValueError):
    """Raised when a domain descriptor yields a boundary with negative curvature."""


@dataclass(frozen=True)
class ConvexDomain:
    kind: str
    params: tuple[float, ...]
    descriptor: str = field(default="", compare=False)

    # ------------------------------------------------------------------ curve
    def curve(self, t):
        """Return ``(gamma, gamma', gamma'')`` at parameter values ``t``.

        Each output has shape ``t.shape + (2,)``.
        """
        t = np.asarray(t, dtype=float)
        c, s = np.cos(t), np.sin(t)
        if self.kind == "disk":
            (R,) = self.params
            g = R * np.stack([c, s], -1)
            return g, R * np.stack([-s, c], -1), -g
        if self.kind == "ellipse":
            a, b = self.params
            g = np.stack([a * c, b * s], -1)
            return g, np.stack([-a * s, b * c], -1), -g
        if self.kind == "superellipse":
            return _superellipse_curve(t, *self.params)
        if self.kind == "fourier-support":
            return _support_curve(t, self.params)
        raise ValueError(f"unknown domain kind {self.kind!r}")

    def point(self, t):
        return self.curve(t)[0]

    def curvature(self, t):
        _, d1, d2 = self.curve(t)
        cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        return cross / np.linalg.norm(d1, axis=-1) ** 3

    def inward_normal(self, t):
        _, d1, _ = self.curve(t)
        tang = d1 / np.linalg.norm(d1, axis=-1, keepdims=True)
        # counter-clockwise traversal: the interior lies to the left
        return np.stack([-tang[..., 1], tang[..., 0]], -1)

    # ------------------------------------------------------- global geometry
    @cached_property
    def _samples(self):
        t = np.linspace(0.0, 2 * np.pi, N_SAMPLES, endpoint=False)
        g, d1, _ = self.curve(t)
        return t, g, d1

    @cached_property
    def area(self) -> float:
        # Green's theorem; trapezoid rule is spectrally accurate for periodic curves
        _, g, d1 = self._samples
        integrand = 0.5 * (g[:, 0] * d1[:, 1] - g[:, 1] * d1[:, 0])
        return float(integrand.mean() * 2 * np.pi)

    @cached_property
    def perimeter(self) -> float:
        _, _, d1 = self._samples
        return float(np.linalg.norm(d1, axis=1).mean() * 2 * np.pi)

    @cached_property
    def diameter(self) -> float:
        _, g, _ = self._samples
        # support width in each direction; max over directions is the diameter
        angles = np.linspace(0, np.pi, 720, endpoint=False)
        dirs = np.stack([np.cos(angles), np.sin(angles)], 1)
        proj = g @ dirs.T
        return float((proj.max(0) - proj.min(0)).max())

    @cached_property
    def centroid(self) -> np.ndarray:
        _, g, d1 = self._samples
        cross = g[:, 0] * d1[:, 1] - g[:, 1] * d1[:, 0]
        # (1/6A) * integral of (x, y) * cross dt
        c = (g * cross[:, None]).mean(0) * 2 * np.pi / (3 * 2 * self.area)
        return c

    @cached_property
    def centroid_clearance(self) -> float:
        """Distance from the centroid to the boundary (a lower bound on the inradius)."""
        return float(self.distance_to_boundary(self.centroid[None])[0])

    @property
    def isoperimetric_bound(self) -> float:
        """Upper bound |dOmega| / (2 |Omega|) on the solvable |H|."""
        return self.perimeter / (2 * self.area)

    @cached_property
    def _polyline(self):
        return self._samples[1]

    @cached_property
    def _polyline_tree(self):
        from scipy.spatial import cKDTree

        return cKDTree(self._polyline)

    def distance_to_boundary(self, x) -> np.ndarray:
        """Unsigned distance from points ``x`` (shape (m, 2)) to the boundary."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        p = self._polyline
        n = len(p)
        _, k = self._polyline_tree.query(x)
        best = np.full(len(x), np.inf)
        for a, b in ((k - 1) % n, k), (k, (k + 1) % n):
            seg = p[b] - p[a]
            w = x - p[a]
            lam = np.clip((w * seg).sum(1) / (seg * seg).sum(1), 0.0, 1.0)
            d = np.linalg.norm(w - lam[:, None] * seg, axis=1)
            best = np.minimum(best, d)
        return best

    def contains(self, x) -> np.ndarray:
        """Inside test; for a convex curve the nearest boundary sample decides."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        t, p, _ = self._samples
        _, k = self._polyline_tree.query(x)
        return ((x - p[k]) * self.inward_normal(t[k])).sum(1) >= 0

    # ------------------------------------------------------------- sampling
    def arclength_parameters(self, n: int) -> np.ndarray:
        """``n`` parameter values equally spaced in arclength, starting at t=0."""
        t, _, d1 = self._samples
        speed = np.linalg.norm(d1, axis=1)
        # cumulative arclength with periodic trapezoid
        seg = 0.5 * (speed + np.roll(speed, -1)) * (2 * np.pi / len(t))
        s = np.concatenate([[0.0], np.cumsum(seg)])
        tt = np.concatenate([t, [2 * np.pi]])
        targets = np.linspace(0.0, s[-1], n, endpoint=False)
        guess = np.interp(targets, s, tt)
        # one Newton polish on s(t) = target using the exact speed
        for _ in range(2):
            s_at = np.interp(guess, tt, s)
            sp = np.linalg.norm(self.curve(guess)[1], axis=-1)
            guess = guess - (s_at - targets) / sp
        return np.mod(guess, 2 * np.pi)

    def tangent_points(self, direction) -> np.ndarray:
        """Parameters of the two boundary points where ``n . direction = 0``."""
        e = np.asarray(direction, dtype=float)

        def f(t):
            return float(self.inward_normal(np.array(t)) @ e)

        t = np.linspace(0.0, 2 * np.pi, 721)
        vals = np.array([f(ti) for ti in t])
        roots = []
        for i in range(len(t) - 1):
            if vals[i] == 0.0:
                roots.append(t[i])
            elif vals[i] * vals[i + 1] < 0:
                roots.append(brentq(f, t[i], t[i + 1], xtol=1e-14))
        return np.array(roots)


def _superellipse_curve(t, a, b, p):
    # polar form r(t) = (|cos t|^p + |sin t|^p)^(-1/p) of the unit superellipse
    c, s = np.cos(t), np.sin(t)
    ac, as_ = np.abs(c), np.abs(s)
    f = ac ** p + as_ ** p
    # d/dt |c|^p = -p |c|^(p-1) sgn(c) s ; d/dt |s|^p = p |s|^(p-1) sgn(s) c
    f1 = p * (-(ac ** (p - 1)) * np.sign(c) * s + as_ ** (p - 1) * np.sign(s) * c)
    f2 = p * ((p - 1) * ac ** (p - 2) * s * s - ac ** p
              + (p - 1) * as_ ** (p - 2) * c * c - as_ ** p)
    r = f ** (-1.0 / p)
    r1 = -(1.0 / p) * f ** (-1.0 / p - 1) * f1
    r2 = -(1.0 / p) * ((-1.0 / p - 1) * f ** (-1.0 / p - 2) * f1 ** 2
                       + f ** (-1.0 / p - 1) * f2)
    x = r * c
    y = r * s
    x1 = r1 * c - r * s
    y1 = r1 * s + r * c
    x2 = r2 * c - 2 * r1 * s - r * c
    y2 = r2 * s + 2 * r1 * c - r * s
    scale = np.array([a, b])
    return (np.stack([x, y], -1) * scale, np.stack([x1, y1], -1) * scale,
            np.stack([x2, y2], -1) * scale)


def _support_terms(t, params):
    c0 = params[0]
    h, h1, h2, h3 = c0 + 0 * t, 0 * t, 0 * t, 0 * t
    for k, i in enumerate(range(1, len(params), 2), start=1):
        ck, phik = params[i], params[i + 1]
        arg = k * t + phik
        h = h + ck * np.cos(arg)
        h1 = h1 - k * ck * np.sin(arg)
        h2 = h2 - k * k * ck * np.cos(arg)
        h3 = h3 + k ** 3 * ck * np.sin(arg)
    return h, h1, h2, h3


def _support_curve(t, params):
    # boundary point with outward normal (cos t, sin t):
    #   x = h u + h' u_perp, u = (cos t, sin t), u_perp = (-sin t, cos t)
    h, h1, h2, h3 = _support_terms(t, params)
    u = np.stack([np.cos(t), np.sin(t)], -1)
    up = np.stack([-np.sin(t), np.cos(t)], -1)
    rho = h + h2
    rho1 = h1 + h3
    g = h[..., None] * u + h1[..., None] * up
    d1 = rho[..., None] * up
    d2 = rho1[..., None] * up - rho[..., None] * u
    return g, d1, d2


def _check_convex(dom: ConvexDomain, n: int = N_SAMPLES) -> None:
    t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    kappa = dom.curvature(t)
    scale = np.abs(kappa).max()
    tiny = 1e-10 * scale
    if np.any(kappa < -tiny):
        i = int(np.argmin(kappa))
        raise NonConvex(f"curvature {kappa[i]:.3e} <= 0 at t={t[i]:.6f}")
    # superellipses (p > 2) flatten to zero curvature at the four axis points;
    # the set stays strictly convex, so only negative curvature is rejected
    _, d1, _ = dom.curve(t)
    ang = np.unwrap(np.arctan2(d1[:, 1], d1[:, 0]))
    turn = (ang[-1] - ang[0]) + _wrap(ang[0] - ang[-1])
    if abs(turn - 2 * np.pi) > 1e-6:
        raise NonConvex(f"tangent winding {turn / (2 * np.pi):.4f} != 1")
    if dom.area <= 0 or dom.perimeter <= 0:
        raise NonConvex("degenerate domain")


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def make_domain(spec) -> ConvexDomain:
    """Build a domain from a descriptor string or a ``(kind, params)`` pair.

    Descriptor syntax: ``disk:R``, ``ellipse:a,b``, ``superellipse:a,b,p``,
    ``fourier:c0;c1,phi1;c2,phi2;...``.
    """
    if isinstance(spec, ConvexDomain):
        return spec
    if isinstance(spec, str):
        kind, params = parse_descriptor(spec)
        descriptor = spec
    else:
        kind, params = spec
        params = tuple(float(x) for x in params)
        descriptor = format_descriptor(kind, params)
    if kind not in KINDS:
        raise ValueError(f"unknown domain kind {kind!r}")
    expected = {"disk": 1, "ellipse": 2, "superellipse": 3}
    if kind in expected and len(params) != expected[kind]:
        raise ValueError(f"{kind} takes {expected[kind]} parameters, got {len(params)}")
    if kind == "fourier-support" and (len(params) % 2 != 1):
        raise ValueError("fourier descriptor needs c0 followed by (ck, phik) pairs")
    if kind != "fourier-support" and any(x <= 0 for x in params):
        raise ValueError(f"{kind} parameters must be positive: {params}")
    if kind == "superellipse" and params[2] < 2:
        raise ValueError("superellipse exponent must be >= 2")
    if kind == "fourier-support":
        t = np.linspace(0, 2 * np.pi, N_SAMPLES, endpoint=False)
        h, _, h2, _ = _support_terms(t, params)
        if np.any(h + h2 <= 0):
            raise NonConvex("support function violates h + h'' > 0")
    dom = ConvexDomain(kind, params, descriptor)
    _check_convex(dom)
    return dom


def parse_descriptor(text: str) -> tuple[str, tuple[float, ...]]:
    kind, _, rest = text.strip().partition(":")
    kind = kind.strip().lower()
    if kind == "fourier":
        kind = "fourier-support"
    if kind == "fourier-support":
        groups = [g for g in rest.split(";") if g.strip()]
        if not groups:
            raise ValueError(f"bad fourier descriptor {text!r}")
        params = [float(groups[0])]
        for g in groups[1:]:
            ck, phik = (float(v) for v in g.split(","))
            params += [ck, phik]
        return kind, tuple(params)
    try:
        params = tuple(float(v) for v in rest.split(","))
    except ValueError as exc:
        raise ValueError(f"bad domain descriptor {text!r}") from exc
    return kind, params


def format_descriptor(kind: str, params) -> str:
    if kind == "fourier-support":
        parts = [repr(params[0])]
        parts += [f"{params[i]!r},{params[i + 1]!r}" for i in range(1, len(params), 2)]
        return "fourier:" + ";".join(parts)
    return f"{kind}:" + ",".join(repr(float(p)) for p in params)


def boundary_geometry(domain: ConvexDomain, t):
    """Point, inward unit normal and curvature at parameter ``t``."""
    t = np.asarray(t, dtype=float)
    return domain.point(t), domain.inward_normal(t), domain.curvature(t)
