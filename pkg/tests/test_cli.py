import json
import math

import numpy as np
import pytest

from fblab.cli import main
from fblab.fields import read_field, read_levelset

TWO_PLANE_INI = """
[meta]
schema_version = 1

[grid]
nx = 65
ny = 65
box = -1.0, -1.0, 1.0, 1.0

[problem]
coefficients = identity
f_plus = constant 0
f_minus = constant 0
jump_target = constant 1
outer = two_plane 0.5 0 0

[init]
interface = flat 0 0

[iteration]
max_iters = 10
tol_jump = 1e-10
tol_move = 1e-6
"""

DISK_INI = """
[meta]
schema_version = 1

[grid]
nx = 129
ny = 129
box = -1.1, -1.1, 1.1, 1.1

[problem]
coefficients = identity
f_plus = constant 0
f_minus = constant 1
jump_target = constant 8
outer = constant 1
mask_radius = 1.0

[init]
interface = circle 0.53

[iteration]
max_iters = 60
tol_jump = 0.12
tol_move = 0.5
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestSolve:
    def test_stationary_profile_exits_zero(self, tmp_path):
        cfg = write(tmp_path, "run.ini", TWO_PLANE_INI)
        out = str(tmp_path / "out")
        assert main(["solve", "--config", cfg, "--out", out]) == 0
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["converged"] is True
        assert summary["schema_version"] == 1
        assert summary["final_jump"] < 1e-10
        for name in ("u.csv", "phi.csv", "interface.csv", "iterations.csv"):
            assert (tmp_path / "out" / name).is_file()
        u = read_field(str(tmp_path / "out" / "u.csv"))
        assert u.grid.nx == 65
        header = (tmp_path / "out" / "iterations.csv").read_text()
        assert header.startswith("iter,jump_linf,displacement,area_plus")

    def test_disk_run_recovers_oracle_radius(self, tmp_path):
        from fblab.prandtl import PBParams, interface_radii, profile_jump

        cfg = write(tmp_path, "disk.ini", DISK_INI)
        out = str(tmp_path / "out")
        assert main(["solve", "--config", cfg, "--out", out]) == 0
        phi = read_levelset(str(tmp_path / "out" / "phi.csv"))
        from fblab.fields import all_interface_points, interface_extract
        pts = all_interface_points(interface_extract(phi))
        radii = np.hypot(pts[:, 0], pts[:, 1])
        _, rho2 = interface_radii(
            PBParams(mu=1.0, omega=1.0, sigma=8.0, h=1.0),
            jump_fn=profile_jump)
        assert abs(radii.mean() - rho2) < 2 * phi.grid.h

    def test_nonconvergence_exits_two_with_artifacts(self, tmp_path):
        # wrong jump target: the profile is not stationary and two sweeps
        # cannot reach the tight tolerance
        text = TWO_PLANE_INI.replace("jump_target = constant 1",
                                     "jump_target = constant 2")
        text = text.replace("max_iters = 10", "max_iters = 2")
        cfg = write(tmp_path, "run.ini", text)
        out = str(tmp_path / "out")
        assert main(["solve", "--config", cfg, "--out", out]) == 2
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["converged"] is False
        assert (tmp_path / "out" / "u.csv").is_file()

    def test_invalid_config_exits_three(self, tmp_path):
        cfg = write(tmp_path, "run.ini",
                    TWO_PLANE_INI.replace("nx = 65", "nx = 4"))
        assert main(["solve", "--config", cfg,
                     "--out", str(tmp_path / "out")]) == 3

    def test_phase_collapse_exits_four(self, tmp_path):
        # negative phase starts with no interior nodes
        text = TWO_PLANE_INI.replace("interface = flat 0 0",
                                     "interface = circle 0.005")
        cfg = write(tmp_path, "run.ini", text)
        assert main(["solve", "--config", cfg,
                     "--out", str(tmp_path / "out")]) == 4

    def test_locked_output_refused(self, tmp_path):
        cfg = write(tmp_path, "run.ini", TWO_PLANE_INI)
        out = tmp_path / "out"
        out.mkdir()
        (out / ".fblab.lock").write_text("1")
        assert main(["solve", "--config", cfg, "--out", str(out)]) == 3

    def test_deterministic_outputs(self, tmp_path):
        cfg = write(tmp_path, "run.ini", TWO_PLANE_INI)
        for name in ("a", "b"):
            assert main(["solve", "--config", cfg,
                         "--out", str(tmp_path / name)]) == 0
        for fname in ("u.csv", "phi.csv", "interface.csv",
                      "iterations.csv"):
            assert (tmp_path / "a" / fname).read_bytes() \
                == (tmp_path / "b" / fname).read_bytes()


class TestDiagnose:
    def test_two_plane_fields(self, tmp_path):
        cfg = write(tmp_path, "run.ini", TWO_PLANE_INI + """
[diagnostics]
center = 0.0, 0.0
radii = 0.1, 0.2, 0.3, 0.4, 0.5
levels = 0
""")
        out = str(tmp_path / "solve-out")
        assert main(["solve", "--config", cfg, "--out", out]) == 0
        diag_out = str(tmp_path / "diag-out")
        assert main(["diagnose", "--u", out + "/u.csv",
                     "--phi", out + "/phi.csv", "--config", cfg,
                     "--out", diag_out]) == 0
        rows = np.loadtxt(diag_out + "/diagnostics.csv", delimiter=",",
                          skiprows=1)
        # normalized energy column is constant (1 + 2 beta^2) pi / 2
        target = 1.5 * math.pi / 2
        assert np.all(np.abs(rows[:, 3] - target) < 0.02 * target)
        summary = json.loads(
            (tmp_path / "diag-out" / "summary.json").read_text())
        assert summary["weiss_monotone"] is True
        assert summary["two_plane_fit"]["beta"] == pytest.approx(0.5,
                                                                 abs=1e-6)

    def test_mismatched_grids_exit_three(self, tmp_path):
        cfg = write(tmp_path, "run.ini", TWO_PLANE_INI + """
[diagnostics]
center = 0.0, 0.0
radii = 0.2
""")
        out = str(tmp_path / "out")
        assert main(["solve", "--config", cfg, "--out", out]) == 0
        # feed the iteration log where a field is expected
        assert main(["diagnose", "--u", out + "/u.csv",
                     "--phi", out + "/iterations.csv", "--config", cfg,
                     "--out", str(tmp_path / "d")]) == 3

    def test_missing_diagnostics_block_exit_three(self, tmp_path):
        cfg = write(tmp_path, "run.ini", TWO_PLANE_INI)
        out = str(tmp_path / "out")
        assert main(["solve", "--config", cfg, "--out", out]) == 0
        assert main(["diagnose", "--u", out + "/u.csv",
                     "--phi", out + "/phi.csv", "--config", cfg,
                     "--out", str(tmp_path / "d")]) == 3


class TestPrandtl:
    def test_single_point_roots(self, tmp_path):
        out = str(tmp_path / "pb")
        assert main(["prandtl", "--mu", "1", "--omega", "1", "--h", "1",
                     "--sigma", "8", "--profiles", "--out", out]) == 0
        rows = np.loadtxt(out + "/sweep.csv", delimiter=",", skiprows=1,
                          ndmin=2)
        assert rows.shape == (1, 9)
        assert rows[0, 6] == 1  # condition holds
        assert rows[0, 7] == pytest.approx(0.26882776111807333, abs=1e-12)
        assert rows[0, 8] == pytest.approx(0.48006813578768015, abs=1e-12)
        prof = np.loadtxt(out + "/profile_branch2.csv", delimiter=",",
                          skiprows=1)
        assert prof.shape == (201, 2)
        assert prof[-1, 1] == pytest.approx(1.0)  # boundary value

    def test_negative_mu_exits_three(self, tmp_path):
        assert main(["prandtl", "--mu", "-1", "--omega", "1", "--h", "1",
                     "--sigma", "8", "--out", str(tmp_path / "pb")]) == 3

    def test_sweep_below_threshold_exits_two(self, tmp_path):
        out = str(tmp_path / "pb")
        assert main(["prandtl", "--mu", "1", "--omega", "0", "--h", "1",
                     "--sigma", "7", "--sweep", "sigma=7.0:7.3:4",
                     "--out", out]) == 2
        rows = np.loadtxt(out + "/sweep.csv", delimiter=",", skiprows=1)
        assert rows.shape == (4, 9)
        assert np.all(rows[:, 6] == 0)
        assert np.all(np.isnan(rows[:, 7]))
        # z0 column still reports the threshold minimum e^2
        assert np.allclose(rows[:, 4], math.e**2)

    def test_sweep_straddling_threshold_flags_rows(self, tmp_path):
        out = str(tmp_path / "pb")
        assert main(["prandtl", "--mu", "1", "--omega", "0", "--h", "1",
                     "--sigma", "8", "--sweep", "sigma=7.0:7.8:5",
                     "--out", out]) == 0
        rows = np.loadtxt(out + "/sweep.csv", delimiter=",", skiprows=1)
        holds = rows[:, 6].astype(bool)
        assert list(holds) == [s > math.e**2 for s in rows[:, 3]]

    def test_bad_sweep_spec_exits_three(self, tmp_path):
        assert main(["prandtl", "--mu", "1", "--omega", "1", "--h", "1",
                     "--sigma", "8", "--sweep", "gamma=1:2:3",
                     "--out", str(tmp_path / "pb")]) == 3
