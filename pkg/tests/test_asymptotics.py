import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nodallab import Field
from nodallab.asymptotics import (
    PROFILE_RADIUS,
    diagnostics,
    epsilon_p,
    extrapolate,
    limit_profile,
    limit_profile_mass,
    profile_sup_error,
    rescale_profile,
    zero_level_set,
)


def fake_sol(p, sup_plus, sup_minus):
    return SimpleNamespace(p=p, sup_plus=sup_plus, sup_minus=sup_minus)


def test_epsilon_pinned_values():
    eps, _ = epsilon_p(fake_sol(10.0, 1.5, 1.5))
    assert eps == pytest.approx(0.05100, abs=5e-5)
    assert eps == pytest.approx((10.0 * 1.5**9) ** -0.5, rel=1e-13)
    eps, _ = epsilon_p(fake_sol(5.0, 1.0, 1.0))
    assert eps == pytest.approx(0.44721, abs=5e-6)


def test_epsilon_equal_sups_coincide():
    eps, eps_t = epsilon_p(fake_sol(7.0, 2.3, 2.3))
    assert eps == eps_t


def test_epsilon_ordering():
    # the positive part carries the larger amplitude, so its scale is finer
    eps, eps_t = epsilon_p(fake_sol(9.0, 2.0, 1.7))
    assert eps <= eps_t


def test_limit_profile_pinned_values():
    assert limit_profile(np.array([0.0, 0.0])) == 0.0
    r8 = limit_profile(np.array([np.sqrt(8.0), 0.0]))
    assert r8 == pytest.approx(-2.0 * math.log(2.0), rel=1e-14)
    arr = limit_profile(np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert arr[0] == arr[1]


def test_limit_profile_solves_liouville():
    # five-point stencil of -Laplacian(z) against e^z at |x| = 1
    h = 1e-3
    x = np.array([1.0, 0.0])
    offsets = np.array([[h, 0], [-h, 0], [0, h], [0, -h]])
    lap = (sum(limit_profile(x + o) for o in offsets) - 4.0 * limit_profile(x)) / h**2
    assert abs(-lap - math.exp(limit_profile(x))) <= 1e-5


def closed_form_mass(R):
    return 8.0 * math.pi * R**2 / (8.0 + R**2)


@pytest.mark.parametrize("R", [math.sqrt(8.0), 10.0, 1000.0])
def test_limit_profile_mass_closed_form(R):
    assert limit_profile_mass(R) == pytest.approx(closed_form_mass(R), rel=1e-3)


def test_limit_profile_mass_pinned_values():
    assert limit_profile_mass(math.sqrt(8.0)) == pytest.approx(4.0 * math.pi, rel=1e-10)
    assert limit_profile_mass(1000.0) == pytest.approx(8.0 * math.pi, abs=1e-2)
    R = 1e-3
    assert limit_profile_mass(R) == pytest.approx(math.pi * R**2, rel=1e-2)


def test_limit_profile_mass_rejects_nonpositive():
    with pytest.raises(ValueError):
        limit_profile_mass(0.0)


def test_extrapolate_exact_affine():
    fit = extrapolate([(4.0, 2.0 + 3.0 / 4.0), (8.0, 2.0 + 3.0 / 8.0), (16.0, 2.0 + 3.0 / 16.0)])
    assert fit.limit == pytest.approx(2.0, abs=1e-12)
    assert fit.slope == pytest.approx(3.0, abs=1e-11)
    assert fit.residual <= 1e-13
    assert not fit.flagged
    assert fit.p_used == (4.0, 8.0, 16.0)


def test_extrapolate_constant_data():
    fit = extrapolate([(3.0, 7.0), (5.0, 7.0), (9.0, 7.0)])
    assert fit.limit == pytest.approx(7.0, abs=1e-12)
    assert fit.slope == pytest.approx(0.0, abs=1e-11)
    assert not fit.flagged


@given(a=st.floats(-5, 5), b=st.floats(-50, 50))
def test_extrapolate_recovers_affine_model(a, b):
    pts = [(p, a + b / p) for p in (3.0, 5.0, 9.0, 17.0)]
    fit = extrapolate(pts)
    assert fit.limit == pytest.approx(a, abs=1e-8 + 1e-10 * abs(b))
    assert fit.slope == pytest.approx(b, abs=1e-7)


def test_extrapolate_flags_non_affine_data():
    pts = [(p, math.cos(p)) for p in (3.0, 4.0, 6.0, 8.0, 10.0)]
    assert extrapolate(pts).flagged


def test_extrapolate_rejects_short_or_duplicate_input():
    with pytest.raises(ValueError):
        extrapolate([(3.0, 1.0), (5.0, 2.0)])
    with pytest.raises(ValueError):
        extrapolate([(3.0, 1.0), (3.0, 2.0), (5.0, 3.0)])


def test_rescaled_profile_origin_exact(sol_p3_257):
    prof = rescale_profile(sol_p3_257, +1)
    at_origin = (prof.points[:, 0] == 0.0) & (prof.points[:, 1] == 0.0)
    assert at_origin.sum() == 1
    assert prof.values[at_origin][0] == 0.0
    assert prof.resolved and not prof.truncated
    assert prof.fitted_mu == 1.0


def test_rescaled_profile_antisymmetric_pair(sol_p3_257):
    plus = rescale_profile(sol_p3_257, +1)
    minus = rescale_profile(sol_p3_257, -1)
    assert minus.fitted_mu == pytest.approx(1.0, abs=1e-9)
    ep = profile_sup_error(plus)
    em = profile_sup_error(minus)
    assert ep == pytest.approx(em, abs=1e-9)
    assert 0.0 < ep < 1.0


def test_rescaled_profile_truncation(sol_p3_257):
    prof = rescale_profile(sol_p3_257, +1, R=8.0)
    assert prof.truncated
    assert prof.sample_radius < 8.0
    r = np.hypot(prof.points[:, 0], prof.points[:, 1])
    assert r.max() <= prof.sample_radius + 1e-12


def test_profile_sup_error_monotone_in_radius(sol_p3_257):
    prof = rescale_profile(sol_p3_257, +1)
    assert profile_sup_error(prof, within=1.0) <= profile_sup_error(prof, within=PROFILE_RADIUS)


def test_zero_level_set_linear_field(disk257):
    line = zero_level_set(Field(disk257, disk257.nodes[:, 0].copy()))
    assert len(line) > 0
    assert np.abs(line[:, 0]).max() <= 1e-12
    assert np.abs(line[:, 1]).max() >= 0.99


def test_zero_level_set_empty_for_signed_field(disk257):
    line = zero_level_set(Field(disk257, np.ones(disk257.num_interior)))
    assert line.shape == (0, 2)


def test_zero_level_set_solution_line_on_axis(sol_p3_257):
    line = zero_level_set(sol_p3_257.u)
    assert np.abs(line[:, 0]).max() <= 1e-8
    assert np.abs(line[:, 1]).max() >= 0.99


def test_diagnostics_record_identities(sol_p3_257):
    rec = diagnostics(sol_p3_257)
    p = rec.p
    assert rec.pGrad == pytest.approx(rec.pGradPlus + rec.pGradMinus, rel=1e-12)
    assert rec.pE == pytest.approx((0.5 - 1.0 / (p + 1.0)) * rec.pGrad, rel=1e-10)
    assert abs(rec.K_p) <= 1e-6 * p * rec.sup_plus
    eps, eps_t = epsilon_p(sol_p3_257)
    assert rec.eps_p == eps and rec.eps_tilde_p == eps_t
    # equal amplitudes of the antisymmetric state can flip the ordering by
    # one ulp through the exp/log evaluation
    assert rec.eps_p <= rec.eps_tilde_p * (1.0 + 1e-12)
    assert rec.mass_plus <= rec.mass_plus_p
    assert rec.mass_minus <= rec.mass_minus_p
    assert rec.morse_whole == 2 and rec.morse_plus == 1
    assert rec.resolved


def test_diagnostics_separations(sol_p3_257):
    rec = diagnostics(sol_p3_257)
    d_wall = 1.0 - float(np.hypot(*sol_p3_257.x_plus))
    assert rec.sep_boundary_plus == pytest.approx(d_wall / rec.eps_p, rel=1e-10)
    # the nodal line of the antisymmetric state runs along the x_1 = 0 axis
    d_line = abs(sol_p3_257.x_plus[0])
    assert rec.sep_nodal_plus == pytest.approx(d_line / rec.eps_p, rel=1e-2)
    assert rec.sep_nodal_plus > 1.0 and rec.sep_boundary_plus > 1.0


def test_diagnostics_accepts_precomputed_line(sol_p3_257):
    line = zero_level_set(sol_p3_257.u)
    rec = diagnostics(sol_p3_257, nodal_line=line)
    assert rec.sep_nodal_plus == diagnostics(sol_p3_257).sep_nodal_plus
