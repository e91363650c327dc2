import numpy as np
import pytest

from spectral_pinn.autodiff import tape_backward
from spectral_pinn.bases import SineBasis, SphereBasis
from spectral_pinn.blocks import build_model, build_naive_model
from spectral_pinn.training import (
    FunctionFamilySpec,
    Phase,
    ScheduleData,
    TripleDataset,
    coeff_consistency_tape,
    dataset_key,
    load_dataset,
    loss_coeff_consistency,
    loss_initial,
    loss_residual,
    make_triples,
    residual_loss_tape,
    run_schedule,
    sample_family,
    save_dataset,
)

INTERVAL_SPEC = FunctionFamilySpec("interval", 20, horizon=0.5)


@pytest.fixture(scope="module")
def sine_basis():
    return SineBasis(20, 101).fit()


def exact_model(basis):
    cfg = {"n_samples": 101, "n_coeffs": 20, "alpha": 0.01, "matrix": basis.pinv_}
    return build_model("interval", ("exact_operator", "realization_heat", "exact_sine"),
                       cfg, seed=0)


def constant_model(level: float, geometry: str = "interval"):
    cfg = {"n_samples": 101, "naive_width": 8, "naive_layers": 3, "epsilon": 0.1}
    m = build_naive_model(geometry, cfg, seed=0)
    for layer in m.net.layers:
        layer.weights[...] = 0.0
    m.net.layers[-1].bias[...] = level
    return m


class TestSampleFamily:
    def test_unit_norm(self, sine_basis):
        C, F = sample_family(INTERVAL_SPEC, 32, seed=3, basis=sine_basis)
        np.testing.assert_allclose(np.linalg.norm(C, axis=1), 1.0, atol=1e-12)
        assert F.shape == (32, 101)

    def test_seed_repeatability(self, sine_basis):
        a = sample_family(INTERVAL_SPEC, 8, seed=5, basis=sine_basis)
        b = sample_family(INTERVAL_SPEC, 8, seed=5, basis=sine_basis)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_mean_is_near_zero(self, sine_basis):
        C, _ = sample_family(INTERVAL_SPEC, 10_000, seed=11, basis=sine_basis)
        assert np.max(np.abs(C.mean(axis=0))) <= 0.05

    def test_sphere_family(self):
        sb = SphereBasis(degree=5).fit()
        spec = FunctionFamilySpec("sphere", 5, horizon=1.0)
        C, F = sample_family(spec, 4, seed=1, basis=sb)
        assert C.shape == (4, 36)
        assert F.shape == (4, 400)
        np.testing.assert_allclose(sb.transform(F), C, atol=1e-9)


class TestTriples:
    def test_interval_triples(self, sine_basis):
        ds = make_triples(INTERVAL_SPEC, 64, seed=2, basis=sine_basis)
        assert len(ds) == 64
        assert ds.t.max() <= 0.5 and ds.t.min() >= 0.0
        assert ds.points.min() >= 0.0 and ds.points.max() <= 1.0
        # pointwise targets match an independent synthesis
        i = 17
        k = np.arange(1, 21)
        expect = np.sin(2 * np.pi * ds.points[i, 0] * k) @ ds.coeffs[i]
        assert ds.u0_at_point[i] == pytest.approx(expect, abs=1e-12)

    def test_sphere_pole_exclusion(self):
        sb = SphereBasis(degree=5).fit()
        spec = FunctionFamilySpec("sphere", 5, horizon=1.0)
        ds = make_triples(spec, 200, seed=4, basis=sb)
        assert ds.points[:, 0].min() >= 0.05
        assert ds.points[:, 0].max() <= np.pi - 0.05

    def test_cache_roundtrip(self, tmp_path, sine_basis):
        ds = make_triples(INTERVAL_SPEC, 16, seed=9, basis=sine_basis)
        path = tmp_path / (dataset_key(INTERVAL_SPEC, 16, 9) + ".bin")
        save_dataset(path, ds)
        back = load_dataset(path)
        np.testing.assert_array_equal(back.samples, ds.samples)
        np.testing.assert_array_equal(back.t, ds.t)
        assert back.spec == ds.spec


class TestLossInitial:
    def test_exact_model_zero(self, sine_basis):
        model = exact_model(sine_basis)
        _, F = sample_family(INTERVAL_SPEC, 8, seed=7, basis=sine_basis)
        assert loss_initial(model, F, sine_basis.grid_) <= 1e-12

    def test_zero_model_gives_mean_square(self, sine_basis):
        model = constant_model(0.0)
        _, F = sample_family(INTERVAL_SPEC, 8, seed=8, basis=sine_basis)
        got = loss_initial(model, F, sine_basis.grid_)
        assert got == pytest.approx(np.mean(F**2), rel=1e-12)

    def test_single_sine_against_direct_summation(self, sine_basis):
        model = constant_model(0.0)
        f = np.sin(2 * np.pi * sine_basis.grid_)[None, :]
        got = loss_initial(model, f, sine_basis.grid_)
        direct = np.sum(np.sin(2 * np.pi * np.arange(101) / 100) ** 2) / 101
        assert got == pytest.approx(direct, rel=1e-12)
        assert got == pytest.approx(0.4950495049504951, abs=1e-12)


class TestLossResidual:
    def test_exact_model_satisfies_heat(self, sine_basis):
        model = exact_model(sine_basis)
        ds = make_triples(INTERVAL_SPEC, 128, seed=1, basis=sine_basis)
        val = loss_residual(model, ds.samples, ds.points, ds.t)
        assert val <= 1e-8

    def test_constant_one_is_allen_cahn_steady_state(self):
        model = constant_model(1.0, geometry="sphere")
        pts = np.stack([np.full(16, 1.0), np.full(16, 2.0)], axis=1)
        val = loss_residual(model, np.zeros((16, 101)), pts, np.full(16, 0.3),
                            pde_kind="allen_cahn")
        assert val <= 1e-20

    def test_constant_half_residual_value(self):
        model = constant_model(0.5, geometry="sphere")
        pts = np.stack([np.full(4, 1.2), np.full(4, 0.5)], axis=1)
        val = loss_residual(model, np.zeros((4, 101)), pts, np.full(4, 0.1),
                            pde_kind="allen_cahn")
        # residual = -(0.5 - 0.125) = -0.375 -> squared 0.140625
        assert val == pytest.approx(0.140625, rel=1e-12)

    def test_gradients_match_finite_differences_on_probe(self, sine_basis):
        cfg = {"n_samples": 101, "n_coeffs": 20, "alpha": 0.01}
        model = build_model("interval", ("linear_trained", "mlp_plain", "exact_sine"),
                            cfg, seed=21)
        ds = make_triples(INTERVAL_SPEC, 8, seed=12, basis=sine_basis)
        tape, loss = residual_loss_tape(model, ds.samples, ds.points, ds.t)
        rep = tape_backward(tape, loss)
        params = model.params()
        rng = np.random.default_rng(0)
        h = 1e-6
        checked = 0
        for name in params.names():
            flat = params[name].reshape(-1)
            for idx in rng.choice(flat.size, size=min(2, flat.size), replace=False):
                orig = flat[idx]
                flat[idx] = orig + h
                lp = loss_residual(model, ds.samples, ds.points, ds.t)
                flat[idx] = orig - h
                lm = loss_residual(model, ds.samples, ds.points, ds.t)
                flat[idx] = orig
                fd = (lp - lm) / (2 * h)
                got = rep[name].reshape(-1)[idx]
                assert got == pytest.approx(fd, rel=1e-4, abs=1e-9), name
                checked += 1
        assert checked >= 10


class TestCoeffConsistency:
    def test_realization_block_exact(self, sine_basis):
        model = exact_model(sine_basis)
        _, F = sample_family(INTERVAL_SPEC, 8, seed=3, basis=sine_basis)
        assert loss_coeff_consistency(model, F) <= 1e-24

    def test_zeroed_block_gives_coefficient_energy(self, sine_basis):
        cfg = {"n_samples": 101, "n_coeffs": 20, "alpha": 0.01, "matrix": sine_basis.pinv_}
        model = build_model("interval", ("exact_operator", "mlp_plain", "exact_sine"),
                            cfg, seed=5)
        model.time_stepping.net.layers[-1].weights[...] = 0.0
        model.time_stepping.net.layers[-1].bias[...] = 0.0
        C, F = sample_family(INTERVAL_SPEC, 8, seed=4, basis=sine_basis)
        got = loss_coeff_consistency(model, F)
        assert got == pytest.approx(np.mean(C**2), rel=1e-9)

    def test_random_block_positive_finite(self, sine_basis):
        cfg = {"n_samples": 101, "n_coeffs": 20, "alpha": 0.01}
        model = build_model("interval", ("linear_trained", "mlp_plain", "exact_sine"),
                            cfg, seed=6)
        _, F = sample_family(INTERVAL_SPEC, 8, seed=5, basis=sine_basis)
        got = loss_coeff_consistency(model, F)
        assert np.isfinite(got) and got > 0


class TestSchedule:
    def _data(self, basis, n=32):
        ds = make_triples(INTERVAL_SPEC, n, seed=13, basis=basis)
        _, F0 = sample_family(INTERVAL_SPEC, 8, seed=14, basis=basis)
        return ScheduleData(triples=ds, l0_samples=F0, grid_points=basis.grid_,
                            pretrain=ds, pretrain_coeff_targets=ds.coeffs)

    def test_empty_phases_keep_model(self, sine_basis):
        cfg = {"n_samples": 101, "n_coeffs": 20, "alpha": 0.01}
        model = build_model("interval", ("linear_trained", "mlp_plain", "exact_sine"),
                            cfg, seed=31)
        params = model.params()
        before = params.copy_values()
        run_schedule(model, self._data(sine_basis), [], seed=0)
        for k, v in before.items():
            np.testing.assert_array_equal(params[k], v)

    def test_freeze_contract(self, sine_basis):
        cfg = {"n_samples": 101, "n_coeffs": 20, "alpha": 0.01}
        model = build_model("interval", ("linear_trained", "mlp_plain", "mlp_interval"),
                            cfg, seed=32)
        params = model.params()
        before = params.copy_values()
        phases = [Phase("step-only", epochs=2, losses=("l0", "ld"),
                        train_blocks=("time_stepping",), batch_size=16)]
        run_schedule(model, self._data(sine_basis), phases, seed=1)
        for name in model.block_param_names(params, "transformation"):
            np.testing.assert_array_equal(params[name], before[name])
        for name in model.block_param_names(params, "reconstruction"):
            np.testing.assert_array_equal(params[name], before[name])
        changed = any(
            not np.array_equal(params[name], before[name])
            for name in model.block_param_names(params, "time_stepping"))
        assert changed

    def test_residual_loss_decreases_with_mlp_stepping(self, sine_basis):
        # full-realization transformation + reconstruction, trainable stepping
        cfg = {"n_samples": 101, "n_coeffs": 20, "alpha": 0.01, "matrix": sine_basis.pinv_}
        model = build_model("interval", ("exact_operator", "mlp_plain", "exact_sine"),
                            cfg, seed=33)
        data = self._data(sine_basis, n=64)
        phases = [Phase("ld", epochs=5, losses=("ld",), batch_size=64, lr=3e-3)]
        traces = run_schedule(model, data, phases, seed=2)
        t = traces["ld"]
        assert t[-1] < t[0]
