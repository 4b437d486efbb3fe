import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate

from src.errors import InputError
from src.hilbert_core import (
    KERNELS,
    Schedule,
    as_point,
    create_kernel,
    direction,
    kernel_eval,
    parse_schedule,
    schedule_eval,
)

finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False).map(lambda v: round(v, 6))


class TestDirection:
    def test_unit_vector(self):
        np.testing.assert_allclose(direction([0.0, 0.0], [3.0, 4.0]), [0.6, 0.8])

    def test_same_point_is_zero(self):
        np.testing.assert_array_equal(direction([1.0, 2.0], [1.0, 2.0]), [0.0, 0.0])

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            direction([0.0, 0.0], [1.0, 2.0, 3.0])

    @given(arrays(np.float64, 4, elements=finite), arrays(np.float64, 4, elements=finite))
    def test_norm_is_one_or_zero(self, a, b):
        norm = np.linalg.norm(direction(a, b))
        if np.array_equal(a, b):
            assert norm == 0.0
        else:
            assert norm == pytest.approx(1.0, abs=1e-9)

    def test_decoupled_direction_bound(self, rng):
        for _ in range(10_000):
            dim = int(rng.integers(2, 11))
            a, b, c = rng.normal(size=(3, dim))
            lhs = np.linalg.norm(direction(a, b) - direction(a, c))
            bc = np.linalg.norm(b - c)
            rhs = bc / np.linalg.norm(a - b) + bc / np.linalg.norm(a - c)
            assert lhs <= rhs + 1e-12


class TestAsPoint:
    def test_converts(self):
        p = as_point([1, 2, 3])
        assert p.dtype == np.float64
        assert p.shape == (3,)

    @pytest.mark.parametrize("bad", [[], [[1.0, 2.0]], [1.0, float("nan")], ["a", "b"]])
    def test_rejects(self, bad):
        with pytest.raises(InputError):
            as_point(bad)


class TestKernels:
    def test_gaussian_at_zero(self):
        assert kernel_eval(create_kernel("gaussian"), 0.0) == pytest.approx(0.398942, abs=1e-6)

    def test_epanechnikov_values(self):
        k = create_kernel("epanechnikov")
        assert kernel_eval(k, 1.2) == 0.0
        assert kernel_eval(k, 0.0) == 0.75

    def test_uniform_support(self):
        k = create_kernel("uniform")
        assert k(0.5) == 1.0
        assert k(0.51) == 0.0

    def test_unknown_family(self):
        with pytest.raises(InputError, match="Supported"):
            create_kernel("triweight")

    @pytest.mark.parametrize("family", sorted(KERNELS))
    def test_integral_matches_quadrature(self, family):
        k = create_kernel(family)
        total, _ = integrate.quad(k.scalar, -k.support, k.support, points=[0.0], limit=200)
        assert total == pytest.approx(k.integral, abs=1e-6)

    @pytest.mark.parametrize("family", ["gaussian", "epanechnikov", "uniform"])
    def test_density_kernels_integrate_to_one(self, family):
        assert create_kernel(family).integral == 1.0

    def test_squared_exponential_is_rescaled_gaussian(self):
        sq = create_kernel("squared_exponential")
        g = create_kernel("gaussian")
        u = np.linspace(-4.0, 4.0, 81)
        # exp(-u^2) = sqrt(2 pi) * phi(sqrt(2) u)
        np.testing.assert_allclose(sq(u), math.sqrt(2.0 * math.pi) * g(math.sqrt(2.0) * u), rtol=1e-12)
        assert sq(0.0) == 1.0
        assert sq.integral == pytest.approx(math.sqrt(math.pi))

    @pytest.mark.parametrize("family", sorted(KERNELS))
    def test_square_integral_matches_quadrature(self, family):
        k = create_kernel(family)
        value, _ = integrate.quad(lambda u: k.scalar(u) ** 2, -k.support, k.support, points=[0.0], limit=200)
        assert k.square_integral == pytest.approx(value, abs=1e-6)

    @pytest.mark.parametrize("family", sorted(KERNELS))
    def test_sup_bounds_values(self, family):
        k = create_kernel(family)
        u = np.linspace(-3.0, 3.0, 601)
        assert k(u).max() <= k.sup + 1e-15

    def test_array_matches_scalar(self):
        k = create_kernel("gaussian")
        u = np.array([-2.0, 0.0, 0.7])
        np.testing.assert_allclose(k(u), [k.scalar(v) for v in u], rtol=1e-12)

    def test_equality_by_family(self):
        assert create_kernel("Gaussian") == create_kernel("gaussian")
        assert create_kernel("uniform") != create_kernel("gaussian")


class TestSchedule:
    def test_decaying_value(self):
        assert schedule_eval(Schedule.decaying(1.0, 2.0 / 3.0), 8) == pytest.approx(0.25)

    def test_first_index(self):
        assert Schedule.decaying(1.0, 0.3).value(1) == 1.0

    def test_zero_index_rejected(self):
        with pytest.raises(InputError):
            Schedule.decaying(1.0, 0.3).value(0)

    def test_fixed(self):
        s = Schedule.fixed(0.15)
        assert s.is_fixed
        assert s.value(1) == s.value(10_000) == 0.15

    @pytest.mark.parametrize("kwargs", [
        {"c": 0.0, "exponent": 0.5},
        {"c": 1.0, "exponent": 1.5},
        {"c": 1.0, "exponent": -0.1},
    ])
    def test_invalid_decaying(self, kwargs):
        with pytest.raises(InputError):
            Schedule.decaying(**kwargs)

    def test_invalid_fixed(self):
        with pytest.raises(InputError):
            Schedule.fixed(0.0)

    @pytest.mark.parametrize("text,expected", [
        ("0.15", Schedule.fixed(0.15)),
        ("n^-0.3", Schedule.decaying(1.0, 0.3)),
        ("2*n^-0.9", Schedule.decaying(2.0, 0.9)),
    ])
    def test_parse(self, text, expected):
        assert parse_schedule(text) == expected

    def test_label_parses_back(self):
        for s in (Schedule.fixed(0.05), Schedule.decaying(1.0, 0.3), Schedule.decaying(0.5, 0.9)):
            assert parse_schedule(s.label) == s

    def test_label_keeps_close_values_apart(self):
        a, b = Schedule.fixed(0.1500001), Schedule.fixed(0.1500002)
        assert a.label != b.label
        assert parse_schedule(a.label) == a
        assert Schedule.decaying(1.0000001, 0.3).label != Schedule.decaying(1.0000002, 0.3).label

    def test_short_labels_unchanged(self):
        assert Schedule.fixed(0.15).label == "0.15"
        assert Schedule.decaying(1.0, 0.3).label == "1*n^-0.3"

    def test_parse_garbage(self):
        with pytest.raises(InputError):
            parse_schedule("fast")

    @settings(max_examples=50)
    @given(st.floats(min_value=0.01, max_value=10.0), st.floats(min_value=0.0, max_value=1.0),
           st.integers(min_value=1, max_value=10**6))
    def test_nonincreasing(self, c, exponent, n):
        s = Schedule.decaying(c, exponent)
        assert s.value(n + 1) <= s.value(n) * (1 + 1e-15)
        assert s.value(n) == pytest.approx(c * math.pow(n, -exponent))
