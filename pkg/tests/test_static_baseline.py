import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from src.errors import EmptySampleError, InputError
from src.hilbert_core import create_kernel
from src.static_baseline import (
    WeightedSample,
    empirical_risk,
    kernel_weights,
    static_estimate,
    weiszfeld,
)


class TestKernelWeights:
    def test_symmetric_pair(self):
        w = kernel_weights(0.0, [-1.0, 1.0], 0.5, create_kernel("gaussian"))
        np.testing.assert_allclose(w, [0.5, 0.5])

    def test_compact_kernel_without_neighbours(self):
        with pytest.raises(EmptySampleError):
            kernel_weights(0.0, [2.0, 3.0], 0.5, create_kernel("epanechnikov"))

    def test_tiny_bandwidth_picks_nearest(self, rng):
        xs = rng.uniform(-1, 1, size=50)
        w = kernel_weights(0.1, xs, 1e-3, create_kernel("gaussian"))
        nearest = int(np.argmin(np.abs(xs - 0.1)))
        assert w[nearest] == pytest.approx(1.0, abs=1e-6)

    def test_far_target_does_not_underflow(self):
        w = kernel_weights(50.0, [0.0, 1.0], 0.01, create_kernel("gaussian"))
        assert w.sum() == pytest.approx(1.0)
        assert w[1] == pytest.approx(1.0)

    @settings(max_examples=50)
    @given(st.lists(st.floats(min_value=-5, max_value=5), min_size=1, max_size=30),
           st.floats(min_value=-5, max_value=5), st.floats(min_value=0.05, max_value=5))
    def test_normalized(self, xs, x, h):
        w = kernel_weights(x, xs, h, create_kernel("gaussian"))
        assert w.sum() == pytest.approx(1.0, abs=1e-10)
        assert (w >= 0).all()

    @settings(max_examples=50)
    @given(st.lists(st.floats(min_value=-5, max_value=5), min_size=1, max_size=30),
           st.floats(min_value=-5, max_value=5), st.floats(min_value=0.05, max_value=5),
           st.floats(min_value=0.01, max_value=100), st.floats(min_value=-10, max_value=10))
    def test_invariant_under_affine_rescaling(self, xs, x, h, scale, shift):
        k = create_kernel("gaussian")
        w = kernel_weights(x, xs, h, k)
        moved = kernel_weights(scale * x + shift, [scale * v + shift for v in xs], scale * h, k)
        np.testing.assert_allclose(moved, w, rtol=1e-6, atol=1e-12)

    def test_bad_bandwidth(self):
        with pytest.raises(InputError):
            kernel_weights(0.0, [0.0], 0.0, create_kernel("gaussian"))


class TestEmpiricalRisk:
    def test_single_point(self):
        assert empirical_risk([1.0, 1.0], WeightedSample([[1.0, 1.0]], [1.0])) == 0.0

    def test_two_points(self):
        sample = WeightedSample([[0.0, 0.0], [2.0, 0.0]], [1.0, 1.0])
        assert empirical_risk([1.0, 0.0], sample) == pytest.approx(2.0)

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            empirical_risk([1.0], WeightedSample([[0.0, 0.0]], [1.0]))


class TestWeightedSample:
    def test_all_zero_weights(self):
        with pytest.raises(EmptySampleError):
            WeightedSample([[0.0], [1.0]], [0.0, 0.0])

    def test_negative_weight(self):
        with pytest.raises(InputError):
            WeightedSample([[0.0], [1.0]], [1.0, -1.0])

    def test_length_mismatch(self):
        with pytest.raises(InputError):
            WeightedSample([[0.0], [1.0]], [1.0])


class TestWeiszfeld:
    def test_equilateral_triangle(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
        res = weiszfeld(WeightedSample(pts, np.ones(3)))
        assert res.converged
        np.testing.assert_allclose(res.median, pts.mean(axis=0), atol=1e-6)

    def test_square_corners(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        res = weiszfeld(WeightedSample(pts, np.ones(4)))
        np.testing.assert_allclose(res.median, [0.5, 0.5], atol=1e-6)

    def test_fermat_point_against_oracle(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        sample = WeightedSample(pts, np.ones(3) / 3)
        res = weiszfeld(sample)
        oracle = optimize.minimize(
            lambda a: empirical_risk(a, sample), x0=[0.3, 0.3], method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 5000},
        )
        assert res.objective <= oracle.fun + 1e-6

    def test_random_instances_against_oracle(self):
        rng = np.random.default_rng(2024)
        for _ in range(50):
            n, d = int(rng.integers(3, 30)), int(rng.integers(2, 6))
            w = rng.uniform(0.1, 1.0, size=n)
            sample = WeightedSample(rng.normal(size=(n, d)) * rng.uniform(0.5, 3.0), w / w.sum())
            res = weiszfeld(sample, tol=1e-12, max_iter=5000)
            oracle = optimize.minimize(
                lambda a: empirical_risk(a, sample), x0=sample.points.mean(axis=0), method="Powell",
                options={"xtol": 1e-10, "ftol": 1e-12, "maxiter": 20_000},
            )
            assert res.objective <= oracle.fun + 1e-7 * max(1.0, oracle.fun)
            # no small move away from the returned median lowers the risk
            for delta in rng.normal(size=(10, d)) * 1e-4:
                assert empirical_risk(res.median + delta, sample) >= res.objective - 1e-10

    def test_objective_decreases_every_iteration(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            pts = rng.standard_cauchy(size=(25, 3))
            res = weiszfeld(WeightedSample(pts, rng.uniform(0.1, 1.0, size=25)), tol=1e-12)
            steps = np.diff(res.objectives)
            assert np.all(steps <= 1e-12 * max(1.0, res.objectives[0]))

    def test_risk_below_every_sample_point(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            w = rng.uniform(0.1, 1.0, size=15)
            sample = WeightedSample(rng.normal(size=(15, 4)), w / w.sum())
            res = weiszfeld(sample)
            point_risks = [empirical_risk(p, sample) for p in sample.points]
            assert res.objective <= min(point_risks) + 1e-10

    def test_majority_point_returned_exactly(self):
        pts = np.array([[1.0, 2.0], [5.0, 5.0], [-3.0, 0.0]])
        res = weiszfeld(WeightedSample(pts, [0.6, 0.2, 0.2]))
        np.testing.assert_array_equal(res.median, [1.0, 2.0])
        assert res.iterations == 0

    def test_collinear_odd_sample_snaps_to_middle(self):
        pts = np.array([[0.0, 0.0], [1.0, 1.0], [3.0, 3.0]])
        res = weiszfeld(WeightedSample(pts, np.ones(3)))
        np.testing.assert_allclose(res.median, [1.0, 1.0], atol=1e-9)

    def test_objectives_nonincreasing_best(self, rng):
        pts = rng.normal(size=(40, 5))
        res = weiszfeld(WeightedSample(pts, rng.uniform(0.1, 1.0, size=40)))
        assert res.objective == pytest.approx(min(res.objectives))

    def test_max_iter_reports_not_converged(self, rng):
        pts = rng.normal(size=(200, 3))
        res = weiszfeld(WeightedSample(pts, np.ones(200)), tol=1e-300, max_iter=2)
        assert not res.converged
        assert res.iterations == 2
        assert np.isfinite(res.median).all()

    def test_zero_weight_points_ignored(self):
        pts = np.array([[0.0, 0.0], [100.0, 100.0], [2.0, 0.0]])
        res = weiszfeld(WeightedSample(pts, [1.0, 0.0, 1.0]))
        assert res.median[1] == pytest.approx(0.0, abs=1e-6)

    @pytest.mark.parametrize("kwargs", [{"tol": 0.0}, {"max_iter": 0}])
    def test_bad_parameters(self, kwargs):
        with pytest.raises(InputError):
            weiszfeld(WeightedSample([[0.0]], [1.0]), **kwargs)


def test_static_estimate_tracks_local_median(rng):
    xs = rng.uniform(-1, 1, size=2000)
    ys = np.column_stack([xs, -xs]) + rng.standard_cauchy(size=(2000, 2)) * 0.05
    res = static_estimate(0.5, xs, ys, 0.05, create_kernel("gaussian"))
    np.testing.assert_allclose(res.median, [0.5, -0.5], atol=0.05)
