import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmcflow.elliptic import ScalarField
from cmcflow.flow import solve_cmc
from cmcflow.stability import (curvature_energy, domain_monotonicity_check, first_eigenvalue,
                               overstability_check, random_variations, second_variation,
                               stability_report, vertical_normal_min, volume_bound)

J01_SQ = 2.404825557695773 ** 2


def test_first_eigenvalue_of_disk(disk_fine):
    lam, eig = first_eigenvalue(ScalarField.zeros(disk_fine))
    assert lam == pytest.approx(J01_SQ, rel=1e-4)
    assert np.all(eig.coef[disk_fine.free] > 0)


def test_eigenvalue_scaling(disk):
    big, small = domain_monotonicity_check(ScalarField.zeros(disk), 0.5)
    assert small / big == pytest.approx(4.0, rel=1e-10)
    with pytest.raises(ValueError):
        domain_monotonicity_check(ScalarField.zeros(disk), 1.5)


def test_eigenvalue_decreases_along_the_flow(disk):
    lams = [first_eigenvalue(solve_cmc(disk, H).u)[0] for H in (0.0, -0.3, -0.6)]
    assert lams[0] > lams[1] > lams[2] > 0


def test_shrinking_raises_eigenvalue(cap_state_coarse):
    big, small = domain_monotonicity_check(cap_state_coarse.u, 0.5)
    assert small > big


def test_second_variation_oracles(disk_fine):
    u0 = ScalarField.zeros(disk_fine)
    st0 = solve_cmc(disk_fine, 0.0)
    Wdot = st0.udot.integral()
    # phi = 1 - r^2 is proportional to the flow direction at H = 0: equality
    phi = ScalarField.interpolate(disk_fine, lambda x, y: 1 - x * x - y * y)
    d2 = second_variation(u0, phi)
    assert d2 == pytest.approx(2 * np.pi, rel=1e-6)
    assert volume_bound(phi, Wdot) == pytest.approx(2 * np.pi, rel=1e-6)
    # (1 - r^2)^2: int |D phi|^2 = 4 pi / 3 (strict inequality with bound 8 pi / 9)
    phi2 = ScalarField.interpolate(disk_fine, lambda x, y: (1 - x * x - y * y) ** 2)
    assert second_variation(u0, phi2) == pytest.approx(4 * np.pi / 3, rel=1e-4)
    assert volume_bound(phi2, Wdot) == pytest.approx(8 * np.pi / 9, rel=1e-4)


def test_second_variation_requires_zero_boundary(disk):
    with pytest.raises(ValueError):
        second_variation(ScalarField.zeros(disk), ScalarField(disk, np.ones(disk.n_nodes)))


def test_random_variations_are_seeded(disk):
    a = random_variations(disk, 12, seed=3)
    b = random_variations(disk, 12, seed=3)
    c = random_variations(disk, 12, seed=4)
    assert [p for p, _ in a] == [p for p, _ in b]
    assert all(np.array_equal(x.coef, y.coef) for (_, x), (_, y) in zip(a, b))
    assert not all(np.array_equal(x.coef, y.coef) for (_, x), (_, y) in zip(a, c))
    assert all(np.all(f.coef[disk.fixed] == 0) for _, f in a)


def test_structured_variations(cap_state_coarse):
    st = cap_state_coarse
    phis = dict(random_variations(st.mesh, 5, 0, st.udot))
    assert "flow" in phis and "zero_mean" in phis
    assert abs(phis["zero_mean"].integral()) < 1e-12


def test_overstability_on_cap(cap_state_coarse):
    st = cap_state_coarse
    samples = overstability_check(st, random_variations(st.mesh, 40, 1, st.udot))
    for s in samples:
        scale = max(abs(s.d2J), abs(s.bound))
        assert s.d2J >= 0 and s.margin >= -1e-8 * scale
    flow = next(s for s in samples if s.phi_id == "flow")
    assert flow.margin == pytest.approx(0.0, abs=1e-8 * flow.d2J)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), H=st.floats(-0.8, 0.8))
def test_bound_never_exceeds_second_variation(disk, seed, H):
    state = solve_cmc(disk, H)
    for s in overstability_check(state, random_variations(disk, 6, seed, state.udot)):
        assert s.margin >= -1e-8 * max(abs(s.d2J), abs(s.bound))


def test_curvature_energy_of_cap(cap_state):
    val, flag = curvature_energy(cap_state.u, cap_state.H)
    # umbilic sphere of radius 2: |B|^2 = 2 / 4, area 2 pi a (a - sqrt(3))
    exact = 0.25 * 2 * np.pi * 2 * (2 - np.sqrt(3))
    assert val == pytest.approx(exact, rel=2e-3) and flag


def test_curvature_energy_of_flat_state(disk):
    val, flag = curvature_energy(ScalarField.zeros(disk), 0.0)
    assert val == 0 and flag


def test_vertical_normal_positive(cap_state_coarse):
    assert 0 < vertical_normal_min(cap_state_coarse.u) < 1


def test_stability_report_is_reproducible(cap_state_coarse):
    a = stability_report(cap_state_coarse, 20, seed=7)
    b = stability_report(cap_state_coarse, 20, seed=7)
    assert a.to_dict() == b.to_dict()
    assert a.to_dict()["n_variations"] == 20 and a.lambda1 > 0
