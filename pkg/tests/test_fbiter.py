import numpy as np
import pytest

from fblab.elliptic import CoefficientField
from fblab.errors import DegenerateInterfaceError, FieldError
from fblab.fbiter import (
    IterationOptions,
    IterationReport,
    PhaseProblem,
    extend_velocity,
    interface_jump,
    run,
    step,
)
from fblab.fields import (
    LevelSet,
    ScalarField,
    all_interface_points,
    interface_extract,
    make_grid,
)
from fblab.problems import (
    two_plane_field,
    two_plane_levelset,
    two_plane_problem,
)


@pytest.fixture(scope="module")
def grid65():
    return make_grid(65, 65, (-1.0, -1.0, 1.0, 1.0))


@pytest.fixture(scope="module")
def grid129():
    return make_grid(129, 129, (-1.0, -1.0, 1.0, 1.0))


class TestPhaseProblem:
    def test_rejects_nonpositive_jump_target(self, grid65):
        with pytest.raises(FieldError):
            PhaseProblem(
                A=CoefficientField.identity(grid65),
                f_plus=ScalarField.constant(grid65, 0.0),
                f_minus=ScalarField.constant(grid65, 0.0),
                Q=ScalarField.constant(grid65, 0.0),
                outer_data=ScalarField.constant(grid65, 1.0),
            )

    def test_rejects_mismatched_grid(self, grid65):
        other = make_grid(33, 33, (-1.0, -1.0, 1.0, 1.0))
        with pytest.raises(FieldError):
            PhaseProblem(
                A=CoefficientField.identity(grid65),
                f_plus=ScalarField.constant(other, 0.0),
                f_minus=ScalarField.constant(grid65, 0.0),
                Q=ScalarField.constant(grid65, 1.0),
                outer_data=ScalarField.constant(grid65, 1.0),
            )

    def test_rejects_nonfinite_data(self, grid65):
        bad = np.zeros(grid65.shape)
        bad[3, 3] = np.nan
        with pytest.raises(FieldError):
            PhaseProblem(
                A=CoefficientField.identity(grid65),
                f_plus=ScalarField(grid65, bad),
                f_minus=ScalarField.constant(grid65, 0.0),
                Q=ScalarField.constant(grid65, 1.0),
                outer_data=ScalarField.constant(grid65, 1.0),
            )

    def test_shared_rhs_copies_both_phases(self, grid65):
        f = ScalarField.constant(grid65, 2.0)
        prob = PhaseProblem.shared_rhs(
            CoefficientField.identity(grid65), f,
            ScalarField.constant(grid65, 1.0),
            ScalarField.constant(grid65, 1.0))
        assert prob.f_plus is f and prob.f_minus is f

    def test_pinned_mask_and_domain_radius(self, grid65):
        prob = two_plane_problem(grid65, 1.0)
        assert prob.pinned_mask() is None
        assert prob.domain_radius() == pytest.approx(1.0)
        prob_ball = PhaseProblem(
            A=prob.A, f_plus=prob.f_plus, f_minus=prob.f_minus,
            Q=prob.Q, outer_data=prob.outer_data, mask_radius=0.75)
        mask = prob_ball.pinned_mask()
        assert mask[0, 0] and not mask[32, 32]
        assert prob_ball.domain_radius() == pytest.approx(0.75)


class TestIterationOptions:
    def test_validation(self):
        with pytest.raises(ValueError):
            IterationOptions(tol_jump=-1.0)
        with pytest.raises(ValueError):
            IterationOptions(max_iters=0)
        with pytest.raises(ValueError):
            IterationOptions(kappa=0.0)
        with pytest.raises(ValueError):
            IterationOptions(kappa=1.5)

    def test_default_jump_tolerance_tracks_target(self, grid65):
        prob = two_plane_problem(grid65, 1.0, Q=4.0)
        assert IterationOptions().resolved_tol_jump(prob) \
            == pytest.approx(4e-3)
        assert IterationOptions(tol_jump=0.1).resolved_tol_jump(prob) \
            == pytest.approx(0.1)


class TestIterationReport:
    def test_rows_shape(self):
        rep = IterationReport(
            iterations=2,
            jump_history=np.array([1.0, 0.5]),
            displacement_history=np.array([0.1, 0.05]),
            area_plus_history=np.array([2.0, 2.1]),
            converged=True,
        )
        assert rep.rows() == [(1, 1.0, 0.1, 2.0), (2, 0.5, 0.05, 2.1)]

    def test_history_lengths_validated(self):
        with pytest.raises(ValueError):
            IterationReport(
                iterations=3,
                jump_history=np.array([1.0]),
                displacement_history=np.array([0.1]),
                area_plus_history=np.array([2.0]),
                converged=False,
            )


class TestStationarity:
    @pytest.mark.parametrize("beta", [0.0, 1.0])
    def test_two_plane_profiles_are_fixed_points(self, grid129, beta):
        prob = two_plane_problem(grid129, beta)
        phi0 = two_plane_levelset(grid129)
        u, phi, rep = run(prob, phi0, IterationOptions(
            max_iters=10, tol_jump=1e-12, tol_move=1e-12))
        h = grid129.h
        assert rep.jump_history[-1] <= 5 * h**2
        assert np.max(np.abs(phi.phi - phi0.phi)) < h / 10

    def test_offset_interface_is_also_stationary(self, grid129):
        # interface along a grid line away from the center
        c = 5 * grid129.h
        prob = two_plane_problem(grid129, 1.0, c=c)
        phi0 = two_plane_levelset(grid129, c=c)
        _, phi, rep = run(prob, phi0, IterationOptions(
            max_iters=5, tol_jump=1e-12, tol_move=1e-12))
        assert rep.jump_history[-1] <= 5 * grid129.h**2
        assert np.max(np.abs(phi.phi - phi0.phi)) < grid129.h / 10


class TestJumpMeasurement:
    def test_defect_reflects_target_mismatch(self, grid129):
        # the beta=0 profile has one-sided energies 1 and 0, so against a
        # target of 0.5 the defect is 0.5
        prob = two_plane_problem(grid129, 0.0, Q=0.5)
        phi0 = two_plane_levelset(grid129)
        _, _, defect, _ = step(prob, phi0, IterationOptions())
        assert defect == pytest.approx(0.5, abs=5 * grid129.h**2)

    def test_positive_defect_expands_positive_phase(self, grid129):
        prob = two_plane_problem(grid129, 0.0, Q=0.5)
        phi0 = two_plane_levelset(grid129)
        _, phi_next, _, displacement = step(prob, phi0, IterationOptions())
        assert displacement > 0
        assert np.all(phi_next.phi >= phi0.phi - 1e-12)
        assert np.count_nonzero(phi_next.phi > 0) \
            > np.count_nonzero(phi0.phi > 0)

    def test_interface_jump_exact_fields(self, grid129):
        # feed the exact one-phase solutions directly: u+ = sqrt(2) y,
        # u- = y sampled everywhere, jump 2 - 1 - 1 = 0
        A = CoefficientField.identity(grid129)
        phi = two_plane_levelset(grid129)
        alpha = np.sqrt(2.0)
        u_plus = ScalarField.from_function(grid129,
                                           lambda x, y: alpha * y)
        u_minus = ScalarField.from_function(grid129, lambda x, y: y)
        Q = ScalarField.constant(grid129, 1.0)
        points, J = interface_jump(u_plus, u_minus, A, phi, Q)
        assert len(points) == len(J) > 0
        assert np.max(np.abs(J)) < 1e-10

    def test_no_interface_raises(self, grid129):
        A = CoefficientField.identity(grid129)
        u = two_plane_field(grid129, 1.0)
        phi = LevelSet(grid129, np.ones(grid129.shape))
        with pytest.raises(DegenerateInterfaceError):
            interface_jump(u, u, A, phi, ScalarField.constant(grid129, 1.0))


class TestExtendVelocity:
    def test_band_carries_nearest_value(self, grid65):
        phi = two_plane_levelset(grid65)
        points = all_interface_points(interface_extract(phi))
        J = np.full(len(points), 2.0)
        ext = extend_velocity(points, J, phi)
        band = np.abs(phi.phi) <= 5 * grid65.h
        assert np.allclose(ext.values[band], 2.0)
        assert np.all(ext.values[~band] == 0.0)

    def test_varying_values_follow_abscissa(self, grid65):
        phi = two_plane_levelset(grid65)
        points = all_interface_points(interface_extract(phi))
        ext = extend_velocity(points, points[:, 0].copy(), phi)
        xx, yy = grid65.meshgrid()
        band = np.abs(phi.phi) <= 2 * grid65.h
        assert np.max(np.abs(ext.values[band] - xx[band])) <= grid65.h

    def test_empty_interface_raises(self, grid65):
        phi = two_plane_levelset(grid65)
        with pytest.raises(DegenerateInterfaceError):
            extend_velocity(np.empty((0, 2)), np.empty(0), phi)


class TestRun:
    def test_single_signed_level_set_rejected(self, grid65):
        prob = two_plane_problem(grid65, 1.0)
        phi0 = LevelSet(grid65, np.ones(grid65.shape))
        with pytest.raises(DegenerateInterfaceError):
            run(prob, phi0, IterationOptions())

    def test_report_invariants(self, pb_run):
        rep = pb_run["report"]
        assert rep.converged
        assert rep.iterations == len(rep.jump_history) \
            == len(rep.displacement_history) == len(rep.area_plus_history)
        assert np.all(rep.area_plus_history > 0)
        assert rep.jump_history[-1] < rep.jump_history[0]
        rows = rep.rows()
        assert rows[0][0] == 1 and rows[-1][0] == rep.iterations

    def test_disk_run_reaches_oracle_radius(self, pb_run):
        pts = all_interface_points(interface_extract(pb_run["phi"]))
        radii = np.hypot(pts[:, 0], pts[:, 1])
        h = pb_run["grid"].h
        assert abs(radii.mean() - pb_run["rho2"]) < 2 * h
        # the settled interface is a circle: tiny radial spread
        assert radii.max() - radii.min() < h

    def test_final_flatness_attached(self, pb_run):
        flat = pb_run["report"].flatness
        assert flat is not None
        assert np.all(np.asarray(flat.deltas) >= 0)

    def test_perturbed_plane_settles(self, perturbed_run):
        rep = perturbed_run["report"]
        assert rep.converged
        pts = all_interface_points(interface_extract(perturbed_run["phi"]))
        # the settled interface stays within the data's oscillation band
        assert np.max(np.abs(pts[:, 1])) < 0.1


class TestBrokenJumpSign:
    def test_flipped_sign_breaks_stationarity(self, grid129, monkeypatch):
        monkeypatch.setenv("FBLAB_BREAK_JUMP_SIGN", "1")
        prob = two_plane_problem(grid129, 1.0)
        phi0 = two_plane_levelset(grid129)
        _, _, defect, _ = step(prob, phi0, IterationOptions())
        # flipped measurement reads -(alpha^2 - beta^2) - Q = -2
        assert defect == pytest.approx(2.0, abs=0.05)

    def test_unset_environment_is_clean(self, grid129, monkeypatch):
        monkeypatch.delenv("FBLAB_BREAK_JUMP_SIGN", raising=False)
        prob = two_plane_problem(grid129, 1.0)
        phi0 = two_plane_levelset(grid129)
        _, _, defect, _ = step(prob, phi0, IterationOptions())
        assert defect <= 5 * grid129.h**2
