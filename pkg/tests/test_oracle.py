import numpy as np
import pytest
from scipy.integrate import solve_ivp

from spectral_pinn.bases import SineBasis, SphereBasis, TorusBasis
from spectral_pinn.exceptions import NonFiniteCoefficientError, TimeOutOfRangeError
from spectral_pinn.oracle import (
    OracleSolution,
    PdeSpec,
    heat_analytic,
    imex_bdf4_solve,
    load_solution,
    oracle_evaluate,
    save_solution,
)


@pytest.fixture(scope="module")
def sphere_basis():
    return SphereBasis(degree=9).fit()


class TestHeatAnalytic:
    def test_t0_reproduces_initial_condition(self):
        rng = np.random.default_rng(0)
        c = rng.normal(size=20)
        basis = SineBasis(20, 101).fit()
        x = basis.grid_
        np.testing.assert_allclose(heat_analytic(c, x, 0.0), basis.evaluate(c, x),
                                   atol=1e-12)

    def test_single_mode_decay_value(self):
        c = np.zeros(20)
        c[0] = 1.0
        got = heat_analytic(c, 0.25, 0.5, alpha=0.01)
        assert got == pytest.approx(0.8208687174155399, abs=1e-12)

    def test_monotone_decay(self):
        c = np.array([0.6, 0.0, 0.8])
        amps = [np.abs(heat_analytic(c, 0.13, t)) for t in (0.0, 5.0, 20.0, 120.0)]
        assert amps[0] > amps[1] > amps[2] > amps[3]
        assert amps[-1] < 1e-15


class TestPdeSpec:
    def test_rejects_bad_kind(self):
        with pytest.raises(ValueError):
            PdeSpec("advection", 0.1, "sphere")

    def test_rejects_nonpositive_coefficient(self):
        with pytest.raises(ValueError):
            PdeSpec("heat", 0.0, "interval")


class TestImexBdf4Linear:
    def test_single_mode_exact_decay(self, sphere_basis):
        pde = PdeSpec("allen_cahn", 0.1, "sphere", 1.0, include_reaction=False)
        idx = sphere_basis.index_.index((2, 1))
        c0 = np.zeros(100)
        c0[idx] = 1.0
        sol = imex_bdf4_solve(c0, pde, sphere_basis, dt=1e-3)
        assert sol.coeffs[-1, idx] == pytest.approx(np.exp(-0.6), abs=1e-6)
        assert sol.coeffs[-1, idx] == pytest.approx(0.5488116360940264, abs=1e-6)

    def test_zero_initial_condition_is_fixed_point(self, sphere_basis):
        pde = PdeSpec("allen_cahn", 0.1, "sphere", 1.0)
        sol = imex_bdf4_solve(np.zeros(100), pde, sphere_basis, dt=2e-3)
        np.testing.assert_array_equal(sol.coeffs, 0.0)

    def test_fourth_order_convergence(self, sphere_basis):
        pde = PdeSpec("allen_cahn", 0.1, "sphere", 1.0, include_reaction=False)
        rng = np.random.default_rng(42)
        c0 = rng.normal(size=100)
        c0 /= np.linalg.norm(c0)
        lam = sphere_basis.eigenvalues()
        errs = []
        for dt in (2e-3, 1e-3, 5e-4):
            sol = imex_bdf4_solve(c0, pde, sphere_basis, dt=dt)
            exact = np.exp(-0.1 * np.outer(sol.times, lam)) * c0
            errs.append(np.max(np.abs(sol.coeffs - exact)))
        for coarse, fine in zip(errs, errs[1:]):
            assert 10.0 <= coarse / fine <= 24.0

    def test_trajectory_shape(self, sphere_basis):
        pde = PdeSpec("allen_cahn", 0.1, "sphere", 1.0, include_reaction=False)
        sol = imex_bdf4_solve(np.ones(100) / 10, pde, sphere_basis, dt=1e-2)
        assert sol.coeffs.shape == (101, 100)
        assert np.all(np.isfinite(sol.coeffs))


class TestImexBdf4Nonlinear:
    def test_steady_states_preserved(self, sphere_basis):
        # u = +1, -1, 0 are Allen-Cahn fixed points; the constant mode of the
        # basis is Y_00 = 1/(2 sqrt(pi)), so u = 1 has c_00 = 2 sqrt(pi)
        pde = PdeSpec("allen_cahn", 0.1, "sphere", 1.0)
        for level in (1.0, -1.0, 0.0):
            c0 = np.zeros(100)
            c0[0] = level * 2.0 * np.sqrt(np.pi)
            sol = imex_bdf4_solve(c0, pde, sphere_basis, dt=1e-3)
            drift = np.max(np.abs(sol.coeffs - c0[None, :]))
            assert drift <= 1e-10 * max(1.0, abs(level)) + 1e-10

    def test_constant_data_matches_scalar_ode(self, sphere_basis):
        # spatially-constant u solves u' = u - u^3; compare with RK45
        pde = PdeSpec("allen_cahn", 0.1, "sphere", 1.0)
        u0 = 0.5
        c0 = np.zeros(100)
        c0[0] = u0 * 2.0 * np.sqrt(np.pi)
        sol = imex_bdf4_solve(c0, pde, sphere_basis, dt=1e-3)
        ref = solve_ivp(lambda t, u: u - u**3, (0, 1), [u0], rtol=1e-10, atol=1e-12,
                        t_eval=sol.times)
        got = sol.coeffs[:, 0] / (2.0 * np.sqrt(np.pi))
        np.testing.assert_allclose(got, ref.y[0], atol=1e-6)

    def test_comparison_principle_bound(self, sphere_basis):
        rng = np.random.default_rng(7)
        c0 = rng.normal(size=100)
        c0 /= np.linalg.norm(c0)
        pde = PdeSpec("allen_cahn", 0.1, "sphere", 1.0)
        sol = imex_bdf4_solve(c0, pde, sphere_basis, dt=1e-3)
        grid0 = sphere_basis.inverse_transform(c0[None, :])[0]
        bound = max(1.0, np.max(np.abs(grid0))) + 0.1
        for n in range(0, 1001, 100):
            vals = sphere_basis.inverse_transform(sol.coeffs[n][None, :])[0]
            assert np.max(np.abs(vals)) <= bound

    def test_nonfinite_detection(self, sphere_basis):
        pde = PdeSpec("allen_cahn", 0.1, "sphere", 1.0)
        c0 = np.full(100, np.inf)
        with pytest.raises(NonFiniteCoefficientError):
            imex_bdf4_solve(c0, pde, sphere_basis, dt=1e-2)

    def test_torus_solver_runs(self):
        tb = TorusBasis(2.0, 1.0, 9, 9).fit()
        rng = np.random.default_rng(3)
        c0 = rng.normal(size=81) * 0.1
        pde = PdeSpec("allen_cahn", 0.1, "torus", 0.2)
        sol = imex_bdf4_solve(c0, pde, tb, dt=1e-3)
        assert np.all(np.isfinite(sol.coeffs))


class TestEvaluate:
    def test_t0_and_time_lookup(self, sphere_basis):
        pde = PdeSpec("allen_cahn", 0.1, "sphere", 1.0, include_reaction=False)
        rng = np.random.default_rng(1)
        c0 = rng.normal(size=100)
        c0 /= np.linalg.norm(c0)
        sol = imex_bdf4_solve(c0, pde, sphere_basis, dt=2e-3)
        got = oracle_evaluate(sol, sphere_basis, (1.1, 0.3), 0.0)
        expect = sphere_basis.evaluate(c0, 1.1, 0.3)
        assert float(got) == pytest.approx(float(expect), abs=1e-12)

    def test_linear_decay_value_at_t1(self, sphere_basis):
        pde = PdeSpec("allen_cahn", 0.1, "sphere", 1.0, include_reaction=False)
        idx = sphere_basis.index_.index((2, 1))
        c0 = np.zeros(100)
        c0[idx] = 1.0
        sol = imex_bdf4_solve(c0, pde, sphere_basis, dt=1e-3)
        got = oracle_evaluate(sol, sphere_basis, (0.9, 2.2), 1.0)
        from spectral_pinn.bases import real_sph_harm
        expect = np.exp(-0.6) * real_sph_harm(2, 1, 0.9, 2.2)
        assert float(got) == pytest.approx(float(expect), abs=1e-6)

    def test_grid_node_consistency(self, sphere_basis):
        pde = PdeSpec("allen_cahn", 0.1, "sphere", 1.0, include_reaction=False)
        rng = np.random.default_rng(5)
        c0 = rng.normal(size=100)
        sol = imex_bdf4_solve(c0, pde, sphere_basis, dt=2e-3)
        node = 57
        got = oracle_evaluate(
            sol, sphere_basis,
            (sphere_basis.grid_theta_[node], sphere_basis.grid_phi_[node]), 0.5)
        grid_vals = sphere_basis.inverse_transform(sol.at_time(0.5)[None, :])[0]
        assert float(got) == pytest.approx(grid_vals[node], abs=1e-12)

    def test_out_of_range_time(self, sphere_basis):
        sol = OracleSolution(np.zeros((11, 100)), 0.1,
                             PdeSpec("allen_cahn", 0.1, "sphere", 1.0))
        with pytest.raises(TimeOutOfRangeError):
            sol.at_time(1.3)
        with pytest.raises(TimeOutOfRangeError):
            sol.at_time(0.55)  # between grid points

    def test_interval_evaluate(self):
        c = np.zeros(20)
        c[2] = 1.0
        pde = PdeSpec("heat", 0.01, "interval", 0.5)
        sol = OracleSolution(np.tile(c, (6, 1)), 0.1, pde)
        got = oracle_evaluate(sol, None, 0.2, 0.1)
        assert float(got) == pytest.approx(np.sin(2 * np.pi * 3 * 0.2), abs=1e-12)


class TestPersistence:
    def test_roundtrip(self, tmp_path, sphere_basis):
        pde = PdeSpec("allen_cahn", 0.1, "sphere", 1.0, include_reaction=False)
        c0 = np.zeros(100)
        c0[5] = 1.0
        sol = imex_bdf4_solve(c0, pde, sphere_basis, dt=1e-2)
        path = tmp_path / "traj.bin"
        save_solution(path, sol)
        back = load_solution(path, pde)
        np.testing.assert_array_equal(back.coeffs, sol.coeffs)
        assert back.dt == sol.dt
