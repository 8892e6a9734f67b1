import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import LineString, Point

from cmcflow import convexity as cvx
from cmcflow.domain import make_domain
from cmcflow.elliptic import RecoveredJet, ScalarField, laplacian, solve_dirichlet
from cmcflow.mesh import triangulate

num = st.floats(-4, 4, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(a=num, b=num, c=num, d=num, e=num)
def test_G_and_L_closed_forms(a, b, c, d, e):
    H = np.array([[a, b], [b, c]])
    g = np.array([d, e])
    assert cvx._G(H[None])[0] == pytest.approx(a * c - b * b, abs=1e-12)
    # L is the Hessian applied to the rotated gradient (-v_y, v_x)
    rot = np.array([-e, d])
    assert cvx._L(g[None], H[None])[0] == pytest.approx(rot @ H @ rot, abs=1e-10)


def test_level_curvature_of_torsion(disk):
    t = solve_dirichlet(laplacian(disk), 2.0)
    f = cvx.convexity_fields(t, [[0.5, 0.0]])
    assert f.G[0] == pytest.approx(1.0, abs=1e-4)
    assert f.L[0] == pytest.approx(0.25, abs=1e-4)
    # circles of radius 0.5 traversed with the interior (lower values) on the left
    assert f.level_curvature[0] == pytest.approx(-2.0, rel=1e-3)


def test_power_transform_spot_value(disk_fine):
    # sqrt(1 - r^2) is a hemisphere: Hessian determinant 1 / (1 - r^2)^2 = 16/9 at r = 1/2
    phi = ScalarField.interpolate(disk_fine, lambda x, y: 1 - x * x - y * y)
    g = cvx.power_transform_G(phi, [[0.5, 0.0], [0.0, 0.0]])
    np.testing.assert_allclose(g, [16 / 9, 1.0], rtol=1e-3)


def test_power_transform_rejects_nonpositive(disk):
    phi = ScalarField.interpolate(disk, lambda x, y: x)
    with pytest.raises(cvx.NonPositiveField):
        cvx.power_transform_G(phi, [[-0.3, 0.0]])


@pytest.mark.parametrize("desc, expected", [("disk:1", "strictly_convex"),
                                            ("ellipse:2,1", "strictly_convex"),
                                            ("superellipse:1,1,4", "strictly_convex"),
                                            ("superellipse:1,1,8", "indefinite")])
def test_torsion_classification(desc, expected):
    m = triangulate(make_domain(desc), 0.07)
    rep = cvx.classify(solve_dirichlet(laplacian(m), 2.0))
    assert rep.classification == expected
    assert rep.orientation == -1
    if expected != "indefinite":
        assert rep.power_half and rep.uniform_constant == rep.minG > 0


def test_ellipse_torsion_G_constant(ellipse):
    G = cvx.convexity_fields(solve_dirichlet(laplacian(ellipse), 2.0)).G
    np.testing.assert_allclose(G, 0.64, rtol=5e-3)


def test_cap_is_strictly_concave(cap_state):
    rep = cvx.classify(cap_state.u)
    assert rep.classification == "strictly_concave"
    assert rep.minG > 0.2 and rep.power_half and rep.orientation == 1
    d = rep.to_dict()
    assert d["classification"] == "strictly_concave" and d["n_samples"] > 100


def test_classification_is_sign_symmetric(cap_state_coarse):
    a = cvx.classify(cap_state_coarse.u)
    b = cvx.classify(-cap_state_coarse.u)
    assert {a.classification, b.classification} == {"strictly_concave", "strictly_convex"}
    assert a.minG == pytest.approx(b.minG) and a.maxL_signed == pytest.approx(b.maxL_signed)


def test_sample_points_stay_away_from_boundary(disk):
    pts = cvx.sample_points(disk)
    assert disk.domain.distance_to_boundary(pts).min() > disk.h


def test_single_critical_point_of_cap(cap_state):
    cps = cvx.find_critical_points(cap_state.u)
    assert len(cps) == 1
    c = cps[0]
    assert np.linalg.norm(c.location) < 1e-8 and c.nondegenerate
    np.testing.assert_allclose(c.hessian, -0.5 * np.eye(2), atol=5e-3)


def test_critical_point_of_ellipse_state(ellipse_state):
    cps = cvx.find_critical_points(ellipse_state.u)
    assert len(cps) == 1 and cps[0].nondegenerate
    assert np.linalg.norm(cps[0].location) < 1e-6   # symmetric domain


def test_no_critical_points_for_zero_field(disk):
    assert cvx.find_critical_points(ScalarField.zeros(disk)) == []


@pytest.mark.parametrize("theta", [0.0, np.pi / 6, np.pi / 3])
def test_cap_nodal_sets(cap_state, theta):
    ns = cvx.nodal_set(cap_state.u, theta)
    assert ns.simple and ns.M_empty
    assert ns.endpoint_error < 1e-6
    # the nodal line of u_e for a radial field is the diameter orthogonal to e
    e = np.array([np.cos(theta), np.sin(theta)])
    assert np.abs(ns.polyline @ e).max() < 1e-6
    for uee, rhs in ns.boundary_identity:
        assert uee == pytest.approx(rhs, rel=0.1)


def test_ellipse_nodal_set_is_one_arc(ellipse_state):
    ns = cvx.nodal_set(ellipse_state.u, np.pi / 4)
    assert ns.simple and ns.min_grad_of_derivative > 0
    assert ns.endpoint_error < ellipse_state.mesh.h


def test_boundary_identity_holds_for_torsion(ellipse):
    # u_ee = -kappa du/dn at tangency points holds for any field vanishing on the boundary
    ns = cvx.nodal_set(solve_dirichlet(laplacian(ellipse), 2.0), 0.3)
    for uee, rhs in ns.boundary_identity:
        assert uee == pytest.approx(rhs, rel=0.05)


def test_smoothstep_endpoints():
    s = cvx.smoothstep(np.array([-1.0, 0.0, 0.5, 1.0, 2.0]))
    np.testing.assert_allclose(s, [0, 0, 0.5, 1, 1])


def test_theta_bar_convention():
    # e_theta = (u_y, -u_x)/|Du| makes the level set tangent
    assert cvx.theta_bar(np.array([0.0, 1.0])) == pytest.approx(0.0)
    assert cvx.theta_bar(np.array([-1.0, 0.0])) == pytest.approx(np.pi / 2)


def test_rotation_flow_radial(cap_state):
    r = cvx.rotation_flow(cap_state.u, [0.5, 0.0], np.pi / 2, 400)
    assert r.drift <= 1e-3
    assert r.consistency < 1e-10
    # radial symmetry: the orbit stays on its circle
    rad = np.linalg.norm(r.trajectory, axis=1)
    assert np.abs(rad - 0.5).max() < 1e-3


def test_rotation_flow_zero_time(cap_state_coarse):
    r = cvx.rotation_flow(cap_state_coarse.u, [0.3, 0.1], 0.0)
    assert r.drift == 0 and len(r.trajectory) == 1


def test_rotation_transports_nodal_sets(ellipse_state):
    u = ellipse_state.u
    jet = RecoveredJet.of(u)
    n0 = cvx.nodal_set(u, 0.0, jet)
    target = LineString(cvx.nodal_set(u, np.pi / 4, jet).polyline)
    p = n0.polyline[len(n0.polyline) // 4]
    end = cvx.rotation_flow(u, p, np.pi / 4, 100, jet).trajectory[-1]
    assert target.distance(Point(end)) <= 2 * ellipse_state.mesh.h


def test_rotation_flow_refuses_critical_ball(cap_state_coarse):
    with pytest.raises(cvx.EnteredCriticalBall):
        cvx.rotation_flow(cap_state_coarse.u, [0.0, 0.0], 0.1, 5)
