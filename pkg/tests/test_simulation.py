import math

import numpy as np
import pytest
from scipy import integrate

from src.errors import InputError
from src.simulation import (
    BrownianModel,
    brownian_pair,
    brownian_sample,
    conditional_sample,
    conditional_sampler,
    gaussian_wasserstein,
    make_conditional_sampler,
    marginal_density,
    median_curve,
    mse,
    stream_pairs,
    true_median,
)


class TestBrownianSample:
    def test_moments(self):
        model = BrownianModel(d=100)
        xs, ys = brownian_sample(model, 100_000, np.random.default_rng(0))
        # grid mean: Var(X) = 1/3 + O(1/d)
        assert xs.var() == pytest.approx(1.0 / 3.0, abs=0.01)
        assert ys[:, -1].var() == pytest.approx(1.0, abs=0.02)
        # Cov(X, Y(1)) is the grid mean of t, 0.5 in the continuous limit
        assert np.cov(xs, ys[:, -1])[0, 1] == pytest.approx(model.grid.mean(), abs=0.01)
        assert model.grid.mean() == pytest.approx(0.5, abs=0.01)

    def test_shapes(self, rng):
        xs, ys = brownian_sample(BrownianModel(d=7), 11, rng)
        assert xs.shape == (11,)
        assert ys.shape == (11, 7)

    def test_conditional_covariate_mode(self):
        model = BrownianModel(d=2, covariate="conditional")
        xs, ys = brownian_sample(model, 100_000, np.random.default_rng(1))
        assert xs.var() == pytest.approx(1.0 / 3.0, abs=0.01)
        np.testing.assert_allclose(np.cov(xs, ys[:, 1])[0, 1], model.cross_covariance[1], atol=0.01)
        # exact model: Cov(X, Y(1)) = 1 - 1/2
        assert np.cov(xs, ys[:, 1])[0, 1] == pytest.approx(0.5, abs=0.01)

    def test_pair_and_stream(self, rng):
        x, y = brownian_pair(BrownianModel(d=4), rng)
        assert isinstance(x, float)
        assert y.shape == (4,)
        recs = list(stream_pairs(BrownianModel(d=3), 10, rng, chunk=4))
        assert len(recs) == 10

    def test_stream_is_reproducible(self):
        model = BrownianModel(d=3)
        a = [y for _, y in stream_pairs(model, 20, np.random.default_rng(5))]
        b = [y for _, y in stream_pairs(model, 20, np.random.default_rng(5))]
        np.testing.assert_array_equal(np.vstack(a), np.vstack(b))

    @pytest.mark.parametrize("kwargs", [{"d": 0}, {"d": 2.5}, {"covariate": "integral"}])
    def test_invalid_model(self, kwargs):
        with pytest.raises(InputError):
            BrownianModel(**kwargs)


class TestConditional:
    def test_mean_at_end_point(self):
        model = BrownianModel(d=100)
        ys = conditional_sample(model, 0.39, 100_000, np.random.default_rng(2))
        assert ys[:, -1].mean() == pytest.approx(0.585, abs=0.01)

    def test_centred_at_zero(self):
        model = BrownianModel(d=10)
        ys = conditional_sample(model, 0.0, 50_000, np.random.default_rng(3))
        np.testing.assert_allclose(ys.mean(axis=0), 0.0, atol=0.02)

    def test_samplers_agree(self):
        model = BrownianModel(d=5)
        single = conditional_sampler(model, 0.2, np.random.default_rng(9))
        batch = make_conditional_sampler(model, 0.2)(np.random.default_rng(9), 1)[0]
        np.testing.assert_array_equal(single, batch)

    def test_factor_squares_to_covariance(self):
        model = BrownianModel(d=6)
        f = model.conditional_factor
        np.testing.assert_allclose(f @ f.T, model.conditional_covariance, atol=1e-7)


class TestTruth:
    def test_true_median(self):
        model = BrownianModel(d=100)
        assert true_median(model, 1.0, 0.39) == pytest.approx(0.585)
        assert true_median(model, 0.5, 0.0) == 0.0

    def test_off_grid(self):
        with pytest.raises(InputError):
            true_median(BrownianModel(d=4), 0.3, 1.0)

    def test_curve_vanishes_at_origin(self):
        model = BrownianModel(d=1000)
        assert median_curve(model, 1.0)[0] < 0.01

    def test_mse_of_zero_estimate(self):
        model = BrownianModel(d=100)
        assert 100 * mse(np.zeros(100), model, 0.39) == pytest.approx(18.4, abs=0.1)

    def test_mse_offsets(self):
        model = BrownianModel(d=10)
        truth = median_curve(model, 0.39)
        assert mse(truth, model, 0.39) == 0.0
        assert mse(truth + 0.3, model, 0.39) == pytest.approx(0.09)

    def test_mse_dimension(self):
        with pytest.raises(InputError):
            mse(np.zeros(3), BrownianModel(d=10), 0.0)


class TestDensityAndDistance:
    def test_density_values(self):
        assert marginal_density(0.0) == pytest.approx(math.sqrt(3 / (2 * math.pi)), abs=1e-4)
        assert marginal_density(0.0) == pytest.approx(0.6910, abs=1e-4)
        assert marginal_density(0.39) == pytest.approx(0.5500, abs=1e-4)

    def test_density_normalized(self):
        total, _ = integrate.quad(marginal_density, -10, 10)
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_wasserstein(self):
        assert gaussian_wasserstein([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert gaussian_wasserstein([3.0, 4.0], [0.0, 0.0]) == pytest.approx(5.0)
        with pytest.raises(InputError):
            gaussian_wasserstein([1.0], [1.0, 2.0])

    @pytest.mark.parametrize("x1, x2", [(0.0, 0.39), (-0.5, 0.5), (0.39, 1.2), (-1.0, -0.2)])
    def test_wasserstein_linear_in_covariate(self, x1, x2):
        model = BrownianModel(d=50)
        dist = gaussian_wasserstein(median_curve(model, x1), median_curve(model, x2))
        assert dist == pytest.approx(abs(x1 - x2) * np.linalg.norm(model.median_shape))


class TestConditionalCovariance:
    def test_independent_of_covariate(self):
        model = BrownianModel(d=5)
        covs = [
            np.cov(conditional_sample(model, x, 40_000, np.random.default_rng(seed)).T)
            for seed, x in enumerate((-0.5, 0.0, 0.8))
        ]
        for cov in covs:
            np.testing.assert_allclose(cov, model.conditional_covariance, atol=0.02)
        np.testing.assert_allclose(covs[0], covs[2], atol=0.02)
