import numpy as np
import pytest

from spectral_pinn.bases import SineBasis, sine_eval, sine_reconstruct, sine_transform
from spectral_pinn.exceptions import RankDeficientError


class TestSineEval:
    def test_quarter_period(self):
        assert sine_eval(1, 0.25) == pytest.approx(1.0)

    def test_zero_at_origin(self):
        for k in (1, 5, 20):
            assert sine_eval(k, 0.0) == 0.0

    def test_k3_at_point1(self):
        # sin(0.6 pi) evaluated independently
        assert sine_eval(3, 0.1) == pytest.approx(np.sin(0.6 * np.pi), abs=1e-15)
        assert sine_eval(3, 0.1) == pytest.approx(0.9510565162951535, abs=1e-12)

    def test_rejects_k0(self):
        with pytest.raises(ValueError):
            sine_eval(0, 0.5)


class TestSineTransform:
    def setup_method(self):
        self.basis = SineBasis(n_frequencies=20, n_samples=101).fit()

    def test_pure_mode_recovery(self):
        f = sine_eval(3, self.basis.grid_)
        c = self.basis.transform(f[None, :])[0]
        expect = np.zeros(20)
        expect[2] = 1.0
        np.testing.assert_allclose(c, expect, atol=1e-12)

    def test_zero_to_zero(self):
        c = self.basis.transform(np.zeros((1, 101)))[0]
        np.testing.assert_array_equal(c, 0.0)

    def test_two_mode_combination(self):
        f = 0.6 * sine_eval(1, self.basis.grid_) + 0.8 * sine_eval(5, self.basis.grid_)
        c = self.basis.transform(f[None, :])[0]
        expect = np.zeros(20)
        expect[0], expect[4] = 0.6, 0.8
        np.testing.assert_allclose(c, expect, atol=1e-10)

    def test_round_trip_random(self):
        rng = np.random.default_rng(0)
        C = rng.normal(size=(50, 20))
        C /= np.linalg.norm(C, axis=1, keepdims=True)
        F = self.basis.inverse_transform(C)
        back = self.basis.transform(F)
        assert np.max(np.abs(back - C)) <= 1e-9

    def test_undersampled_grid_rejected(self):
        with pytest.raises(ValueError):
            SineBasis(n_frequencies=20, n_samples=40).fit()

    def test_functional_wrappers(self):
        f = sine_eval(2, np.arange(101) / 100)
        c = sine_transform(f)
        assert c[1] == pytest.approx(1.0, abs=1e-12)
        vals = sine_reconstruct(c, np.array([0.1, 0.3]))
        np.testing.assert_allclose(vals, sine_eval(2, np.array([0.1, 0.3])), atol=1e-10)

    def test_evaluate_matches_manual_sum(self):
        rng = np.random.default_rng(3)
        c = rng.normal(size=20)
        x = rng.uniform(0, 1, size=7)
        manual = sum(c[k - 1] * np.sin(2 * np.pi * k * x) for k in range(1, 21))
        np.testing.assert_allclose(self.basis.evaluate(c, x), manual, atol=1e-12)

    def test_sklearn_params(self):
        assert SineBasis().get_params() == {"n_frequencies": 20, "n_samples": 101}
