import numpy as np
import pytest
from conftest import cap

from cmcflow.domain import make_domain
from cmcflow.flow import (FlowTrace, IsoperimetricViolation, NewtonDiverged, StopCriteria,
                          TraceRow, check_admissible, continue_flow, estimate_hmax,
                          functionals, newton_tolerance, solve_along, solve_cmc)
from cmcflow.mesh import triangulate


def test_flat_state_at_zero_H(disk):
    st = solve_cmc(disk, 0.0)
    assert np.all(st.u.coef == 0) and st.newton_iters == 0 and st.sup_grad == 0


def test_cap_oracle_and_convergence(disk, disk_fine, cap_state_coarse, cap_state):
    errs = [np.abs(s.u.coef - cap(*s.mesh.nodes.T)).max()
            for s in (cap_state_coarse, cap_state)]
    assert errs[1] <= 1e-3
    assert errs[0] / errs[1] >= 3
    assert cap_state.residual <= newton_tolerance(-0.5)


def test_cap_functionals(cap_state):
    # volume and area of the spherical cap of radius 2 over the unit disk
    a, c = 2.0, np.sqrt(3.0)
    vol = np.pi * ((a - c) ** 2) * (3 * a - (a - c)) / 3
    area = 2 * np.pi * a * (a - c)
    W, A = functionals(cap_state.u)
    assert W == pytest.approx(vol, rel=1e-5)
    assert A == pytest.approx(area, rel=1e-5)


@pytest.mark.parametrize("H", [0.2, 0.5])
def test_odd_symmetry(disk, H):
    a = solve_cmc(disk, H)
    b = solve_cmc(disk, -H)
    assert np.abs(a.u.coef + b.u.coef).max() <= 1e-8


def test_direct_method_agrees(disk):
    a = solve_cmc(disk, -0.4)
    b = solve_cmc(disk, -0.4, method="direct")
    assert np.abs(a.u.coef - b.u.coef).max() < 1e-9


def test_isoperimetric_violation(disk):
    with pytest.raises(IsoperimetricViolation):
        solve_cmc(disk, -1.0)
    with pytest.raises(IsoperimetricViolation):
        check_admissible(disk, 1.2)


def test_newton_cap_raises(disk):
    with pytest.raises(NewtonDiverged):
        solve_cmc(disk, -0.9, max_iter=1)


def test_continuation_trace(disk):
    tr = continue_flow(disk, -1, 0.1, StopCriteria(H_target=-0.5))
    assert tr.termination == "H_target"
    np.testing.assert_allclose(tr.H, [0, -0.1, -0.2, -0.3, -0.4, -0.5], atol=1e-12)
    assert tr.monotonicity_violations() == 0
    assert np.all(np.diff(tr.W) > 0)
    # predictor keeps Newton cheap
    assert max(s.newton_iters for s in tr.states) <= 5


def test_continuation_positive_direction(disk):
    tr = continue_flow(disk, +1, 0.25, StopCriteria(H_target=0.5))
    assert np.all(np.diff(tr.W) < 0) and tr.monotonicity_violations() == 0


def test_continuation_grad_cap(disk):
    tr = continue_flow(disk, -1, 0.2, StopCriteria(grad_cap=0.5))
    assert tr.termination == "grad_cap" and tr.rows[-1].status == "grad_cap"


def test_continuation_diagnostics(disk):
    tr = continue_flow(disk, -1, 0.25, StopCriteria(H_target=-0.5), diagnostics=True, threads=2)
    r = tr.rows[-1]
    assert r.lambda1 > 0 and r.minG > 0 and r.detHess_x0 > 0
    assert np.hypot(*r.x0) < 1e-6


def test_monotonicity_counter_flags_bad_rows(disk):
    rows = [TraceRow(0.0, 0.0, 1.0, 0.0), TraceRow(-0.1, 0.1, 1.0, 0.0),
            TraceRow(-0.2, 0.05, 1.0, 0.0)]
    assert FlowTrace(disk, rows).monotonicity_violations() == 1


def test_invalid_step(disk):
    with pytest.raises(ValueError):
        continue_flow(disk, -1, 0.0)


def test_hmax_disk_bracket(disk):
    lo, hi = estimate_hmax(disk, tol=0.02)
    assert hi - lo <= 0.02
    assert 0.9 <= lo <= hi <= 1.0 + 1e-12


def test_hmax_below_isoperimetric_bound():
    m = triangulate(make_domain("ellipse:2,1"), 0.15)
    lo, hi = estimate_hmax(m, tol=0.02)
    assert hi <= m.domain.isoperimetric_bound + 0.02
    assert lo > 0.5


def test_serrin_bound(cap_state):
    assert np.abs(cap_state.u.coef).max() <= cap_state.mesh.domain.diameter


def test_solve_along_matches_direct_solve(disk):
    a = solve_along(disk, -0.6)
    b = solve_cmc(disk, -0.6)
    assert np.abs(a.u.coef - b.u.coef).max() < 1e-9
