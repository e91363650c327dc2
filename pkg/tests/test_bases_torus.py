import numpy as np
import pytest

from spectral_pinn.bases import (
    TorusBasis,
    TorusGeometry,
    assemble_fem,
    build_torus_mesh,
    solve_eigenbasis,
    torus_basis_eval,
)
from spectral_pinn.bases.torus import load_eigenbasis, save_eigenbasis
from spectral_pinn.exceptions import InvalidGridError


class TestMesh:
    def test_structured_counts_15(self):
        mesh = build_torus_mesh(TorusGeometry(2.0, 1.0, 15, 15))
        assert mesh.n_vertices == 225
        assert mesh.triangles.shape[0] == 450
        assert mesh.n_edges == 675
        assert mesh.euler_characteristic() == 0

    def test_minimal_mesh_euler(self):
        mesh = build_torus_mesh(TorusGeometry(2.0, 1.0, 3, 3))
        assert mesh.euler_characteristic() == 0

    def test_embedding_at_origin(self):
        mesh = build_torus_mesh(TorusGeometry(2.0, 1.0, 8, 8))
        np.testing.assert_allclose(mesh.vertices[0], [3.0, 0.0, 0.0], atol=1e-15)

    def test_too_small_grid(self):
        with pytest.raises(InvalidGridError):
            build_torus_mesh(TorusGeometry(2.0, 1.0, 2, 5))

    def test_geometry_validation(self):
        with pytest.raises(ValueError):
            TorusGeometry(1.0, 2.0)


class TestFemAssembly:
    def setup_method(self):
        self.mesh = build_torus_mesh(TorusGeometry(2.0, 1.0, 15, 15))
        self.S, self.B = assemble_fem(self.mesh)

    def test_constants_in_stiffness_kernel(self):
        ones = np.ones(self.mesh.n_vertices)
        np.testing.assert_allclose(self.S @ ones, 0.0, atol=1e-12)

    def test_mass_total_is_surface_area(self):
        # refinement study against the analytic area 4 pi^2 R r
        for n, tol in ((15, 0.05), (30, 0.02)):
            mesh = build_torus_mesh(TorusGeometry(2.0, 1.0, n, n))
            _, B = assemble_fem(mesh)
            ones = np.ones(mesh.n_vertices)
            area = float(ones @ B @ ones)
            assert area == pytest.approx(mesh.geometry.area, rel=tol)

    def test_symmetry(self):
        assert np.max(np.abs(self.S - self.S.T)) <= 1e-14
        assert np.max(np.abs(self.B - self.B.T)) <= 1e-14

    def test_mass_positive_definite(self):
        vals = np.linalg.eigvalsh(self.B)
        assert vals.min() > 0


class TestEigenbasis:
    def setup_method(self):
        self.mesh = build_torus_mesh(TorusGeometry(2.0, 1.0, 15, 15))
        S, B = assemble_fem(self.mesh)
        self.eb = solve_eigenbasis(S, B, 30, self.mesh)
        self.S, self.B = S, B

    def test_first_mode_constant_zero_eigenvalue(self):
        assert abs(self.eb.eigenvalues[0]) <= 1e-8
        v0 = self.eb.vectors[:, 0]
        assert np.max(np.abs(v0 - v0[0])) <= 1e-8

    def test_b_orthonormal(self):
        G = self.eb.vectors.T @ self.B @ self.eb.vectors
        assert np.max(np.abs(G - np.eye(30))) <= 1e-8

    def test_residuals(self):
        for k in range(30):
            res = self.S @ self.eb.vectors[:, k] - self.eb.eigenvalues[k] * (
                self.B @ self.eb.vectors[:, k])
            assert np.linalg.norm(res) <= 1e-8

    def test_lambda2_mesh_convergence(self):
        lam = {}
        for n in (15, 30):
            mesh = build_torus_mesh(TorusGeometry(2.0, 1.0, n, n))
            S, B = assemble_fem(mesh)
            lam[n] = solve_eigenbasis(S, B, 3, mesh).eigenvalues[1]
        assert abs(lam[15] - lam[30]) / lam[30] < 0.05

    def test_requesting_too_many_modes(self):
        with pytest.raises(ValueError):
            solve_eigenbasis(self.S, self.B, 226, self.mesh)


class TestBasisEvaluation:
    def setup_method(self):
        self.tb = TorusBasis(2.0, 1.0, 15, 15).fit()

    def test_vertex_lookup_exact(self):
        mesh = self.tb.mesh_
        k = 5
        for i, j in ((0, 0), (3, 7), (14, 14)):
            got = torus_basis_eval(self.tb.basis_, k, mesh.theta[i], mesh.phi[j])
            assert got == pytest.approx(self.tb.basis_.vectors[i * 15 + j, k - 1], abs=1e-14)

    def test_first_mode_constant_everywhere(self):
        v0 = self.tb.basis_.vectors[0, 0]
        rng = np.random.default_rng(0)
        pts = rng.uniform(0, 2 * np.pi, size=(10, 2))
        for t, p in pts:
            assert torus_basis_eval(self.tb.basis_, 1, t, p) == pytest.approx(v0, abs=1e-10)

    def test_barycenter_is_mean_of_nodal_values(self):
        mesh = self.tb.mesh_
        ht = 2 * np.pi / 15
        # barycenter of the lower triangle of cell (2, 3)
        t = mesh.theta[2] + ht * 2 / 3
        p = mesh.phi[3] + ht * 1 / 3
        k = 4
        nodal = self.tb.basis_.vectors[:, k - 1]
        tri = [2 * 15 + 3, 3 * 15 + 3, 3 * 15 + 4]
        expect = nodal[tri].mean()
        assert torus_basis_eval(self.tb.basis_, k, t, p) == pytest.approx(expect, abs=1e-12)

    def test_transform_round_trip_full_basis(self):
        rng = np.random.default_rng(1)
        F = rng.normal(size=(5, 225))
        C = self.tb.transform(F)
        back = self.tb.inverse_transform(C)
        assert np.max(np.abs(back - F)) <= 1e-9

    def test_persistence_round_trip(self, tmp_path):
        path = tmp_path / "torus.eig"
        save_eigenbasis(path, self.tb)
        tb2 = load_eigenbasis(path)
        np.testing.assert_array_equal(tb2.basis_.eigenvalues, self.tb.basis_.eigenvalues)
        np.testing.assert_array_equal(tb2.basis_.vectors, self.tb.basis_.vectors)
        F = np.random.default_rng(2).normal(size=(2, 225))
        np.testing.assert_allclose(tb2.transform(F), self.tb.transform(F), atol=1e-12)
