import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fblab.prandtl import (
    ConditionError,
    PBParams,
    PBRadialSolution,
    classify_comparison,
    existence_condition,
    interface_radii,
    jump_threshold,
    jump_threshold_min,
    large_vorticity_condition,
    ordering_check,
    profile_jump,
    radial_solution,
)

# Reference roots computed independently with scipy.optimize (brentq /
# bounded minimize_scalar to 1e-15) for mu=1, omega=2, h=1, sigma=8.
THRESHOLD_MIN_8 = 7.3207611335376095
THRESHOLD_RHO_STAR_8 = 0.37129501400612047
THRESHOLD_ROOTS_8 = (0.26759369095126356, 0.4848731729265295)
PROFILE_ROOTS_8 = (0.2652507090881292, 0.4943549144236452)

PARAMS_8 = PBParams(mu=1.0, omega=2.0, sigma=8.0, h=1.0)


class TestJumpThreshold:
    def test_closed_form_at_inverse_e(self):
        # mu^2 rho^-2 log^-2 rho = e^2 at rho = 1/e; quadratic term
        # 0.25 * 2 * e^-2
        val = jump_threshold(1 / math.e, h=1.0, mu=1.0, omega=2.0)
        assert val == pytest.approx(math.e**2 - math.exp(-2) / 2, rel=1e-14)

    def test_domain_validated(self):
        with pytest.raises(ValueError):
            jump_threshold(0.0, 1.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            jump_threshold(1.0, 1.0, 1.0, 1.0)

    def test_min_without_vorticity(self):
        # omega = 0 leaves rho^-2 log^-2 rho alone: minimum e^2 mu^2 at 1/e
        z0, rho_star = jump_threshold_min(h=1.0, mu=1.0, omega=0.0)
        assert z0 == pytest.approx(math.e**2, rel=1e-12)
        # the basin is flat to machine precision within ~1e-8 of 1/e
        assert rho_star == pytest.approx(1 / math.e, abs=1e-7)

    def test_min_scales_with_mu_squared(self):
        z0, _ = jump_threshold_min(h=1.0, mu=3.0, omega=0.0)
        assert z0 == pytest.approx(9 * math.e**2, rel=1e-12)

    def test_min_with_vorticity(self):
        z0, rho_star = jump_threshold_min(h=1.0, mu=1.0, omega=2.0)
        assert z0 == pytest.approx(THRESHOLD_MIN_8, rel=1e-10)
        assert rho_star == pytest.approx(THRESHOLD_RHO_STAR_8, abs=1e-8)


class TestInterfaceRadii:
    def test_frozen_roots(self):
        rho1, rho2 = interface_radii(PARAMS_8)
        assert rho1 == pytest.approx(THRESHOLD_ROOTS_8[0], abs=1e-10)
        assert rho2 == pytest.approx(THRESHOLD_ROOTS_8[1], abs=1e-10)

    def test_roots_hit_target(self):
        rho1, rho2 = interface_radii(PARAMS_8)
        for rho in (rho1, rho2):
            res = jump_threshold(rho, 1.0, 1.0, 2.0) - 8.0
            assert abs(res) < 1e-10

    def test_profile_variant_roots(self):
        rho1, rho2 = interface_radii(PARAMS_8, jump_fn=profile_jump)
        assert rho1 == pytest.approx(PROFILE_ROOTS_8[0], abs=1e-10)
        assert rho2 == pytest.approx(PROFILE_ROOTS_8[1], abs=1e-10)

    def test_condition_failure_raises(self):
        weak = PBParams(mu=1.0, omega=2.0, sigma=2.0, h=1.0)
        with pytest.raises(ConditionError) as err:
            interface_radii(weak)
        assert err.value.z0 == pytest.approx(THRESHOLD_MIN_8, rel=1e-8)

    def test_existence_condition_flags(self):
        holds, z0, rho_star = existence_condition(PARAMS_8)
        assert holds
        assert z0 == pytest.approx(THRESHOLD_MIN_8, rel=1e-10)
        assert rho_star == pytest.approx(THRESHOLD_RHO_STAR_8, abs=1e-8)
        assert not existence_condition(
            PBParams(mu=1.0, omega=2.0, sigma=2.0, h=1.0))[0]

    @given(
        mu=st.floats(0.5, 2.0),
        omega=st.floats(0.5, 4.0),
        h=st.floats(0.7, 1.3),
    )
    @settings(max_examples=40, deadline=None)
    def test_roots_straddle_minimizer(self, mu, omega, h):
        z0, rho_star = jump_threshold_min(h, mu, omega)
        sigma = (max(0.0, z0) + 3.0) / h**2
        params = PBParams(mu=mu, omega=omega, sigma=sigma, h=h)
        rho1, rho2 = interface_radii(params)
        assert 0.0 < rho1 < rho_star < rho2 < 1.0
        for rho in (rho1, rho2):
            assert abs(jump_threshold(rho, h, mu, omega)
                       - h**2 * sigma) < 1e-8


class TestRadialSolution:
    def test_boundary_and_interface_values(self):
        sol = radial_solution(PARAMS_8, branch=2)
        assert float(sol.u(1.0)) == pytest.approx(1.0, abs=1e-14)
        assert float(sol.u(sol.rho)) == pytest.approx(0.0, abs=1e-13)
        assert float(sol.u(sol.rho - 1e-12)) == pytest.approx(0.0, abs=1e-10)

    def test_sign_pattern(self):
        sol = radial_solution(PARAMS_8, branch=2)
        r = np.linspace(1e-3, 1.0, 400)
        u = sol.u(r)
        assert np.all(u[r < sol.rho - 1e-9] < 0)
        assert np.all(u[r > sol.rho + 1e-9] > 0)

    def test_ode_residual_both_regions(self):
        # outside: (r u')' = 0; inside: (r u')' / r = h^2 omega
        sol = radial_solution(PARAMS_8, branch=2)
        p = sol.params
        eps = 1e-6
        for r in (0.55, 0.7, 0.9):
            flux = (r + eps) * sol.du(r + eps) - (r - eps) * sol.du(r - eps)
            assert abs(flux / (2 * eps * r)) < 1e-7
        for r in (0.1, 0.2, 0.3):
            flux = (r + eps) * sol.du(r + eps) - (r - eps) * sol.du(r - eps)
            assert flux / (2 * eps * r) == pytest.approx(
                p.h**2 * p.omega, rel=1e-7)

    def test_profile_jump_matches_one_sided_slopes(self):
        sol = radial_solution(PARAMS_8, branch=2, jump_fn=profile_jump)
        eps = 1e-9
        a = float(sol.du(sol.rho + eps))
        b = float(sol.du(sol.rho - eps))
        assert a**2 - b**2 == pytest.approx(
            profile_jump(sol.rho, PARAMS_8), rel=1e-7)

    def test_profile_jump_at_root_equals_target(self):
        sol = radial_solution(PARAMS_8, branch=2, jump_fn=profile_jump)
        assert profile_jump(sol.rho, PARAMS_8) == pytest.approx(8.0, abs=1e-9)

    def test_branch_selection(self):
        s1 = radial_solution(PARAMS_8, branch=1)
        s2 = radial_solution(PARAMS_8, branch=2)
        assert s1.rho < s2.rho
        with pytest.raises(ValueError):
            PBRadialSolution(PARAMS_8, 3, 0.5)


class TestJumpExpressionDivergence:
    def test_disagree_at_inverse_e(self):
        # same parameters, same radius: the two printed expressions differ
        # by e^-2 / 2
        rho = 1 / math.e
        t = jump_threshold(rho, h=1.0, mu=1.0, omega=2.0)
        p = profile_jump(rho, PARAMS_8)
        assert t == pytest.approx(math.e**2 - math.exp(-2) / 2, rel=1e-14)
        assert p == pytest.approx(math.e**2 - math.exp(-2), rel=1e-14)
        assert t - p == pytest.approx(math.exp(-2) / 2, rel=1e-12)

    def test_agree_when_quadratic_weight_is_one(self):
        # h^2 omega = 1 makes the quadratic terms coincide for every radius
        params = PBParams(mu=1.0, omega=1.0, sigma=8.0, h=1.0)
        for rho in (0.2, 0.4, 0.6, 0.8):
            t = jump_threshold(rho, 1.0, 1.0, 1.0)
            p = profile_jump(rho, params)
            assert t == pytest.approx(p, rel=1e-14)


class TestComparison:
    def test_smaller_test_modulus_gives_strict_sub(self):
        sol = radial_solution(PARAMS_8, branch=2, jump_fn=profile_jump)
        assert classify_comparison(sol, h_test=0.9) == "strict_sub"

    def test_larger_test_modulus_gives_strict_super(self):
        sol = radial_solution(PARAMS_8, branch=2, jump_fn=profile_jump)
        assert classify_comparison(sol, h_test=1.1) == "strict_super"

    def test_equal_modulus_is_neither(self):
        sol = radial_solution(PARAMS_8, branch=2, jump_fn=profile_jump)
        assert classify_comparison(sol, h_test=1.0) == "neither"


class TestOrdering:
    def test_holds_for_nested_moduli(self):
        ok, witness = ordering_check(0.9, 1.0, mu=1.0, omega=2.0, sigma=12.0)
        assert ok
        assert witness is None

    def test_rejects_unordered_moduli(self):
        with pytest.raises(ValueError):
            ordering_check(1.0, 0.9, mu=1.0, omega=2.0, sigma=12.0)


class TestLargeVorticity:
    def test_boundary_cases(self):
        # threshold is 4 e mu
        assert large_vorticity_condition(1.0, 1.0, 4 * math.e)
        assert not large_vorticity_condition(1.0, 1.0, 10.0)
        assert large_vorticity_condition(2.0, 1.0, 3.0)

    def test_implies_existence_for_any_sigma(self):
        # the condition governs the profile-consistent jump: it holds
        # exactly when that expression dips to or below zero, because
        # rho^2 |log rho| peaks at 1/(2e) (at rho = e^-1/2), so every
        # positive sigma then admits two radii
        for omega in (4 * math.e, 12.0, 20.0):
            assert large_vorticity_condition(1.0, 1.0, omega)
            params = PBParams(mu=1.0, omega=omega, sigma=0.05, h=1.0)
            assert profile_jump(math.exp(-0.5), params) <= 1e-9
            rho1, rho2 = interface_radii(params, jump_fn=profile_jump)
            assert 0 < rho1 < rho2 < 1


class TestParamsValidation:
    @pytest.mark.parametrize("field", ["mu", "omega", "sigma", "h"])
    def test_positive_required(self, field):
        kwargs = dict(mu=1.0, omega=1.0, sigma=1.0, h=1.0)
        kwargs[field] = 0.0
        with pytest.raises(ValueError):
            PBParams(**kwargs)
