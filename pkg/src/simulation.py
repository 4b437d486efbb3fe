"""Brownian-motion world with a known conditional median.

Y is a Brownian path observed at t_j = j / d (j = 1..d) and X is the mean of
the path. (Y, X) is jointly Gaussian, so the conditional median of Y given
X = x equals the conditional mean ``1.5 * t * (2 - t) * x``.
"""

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg, stats

from src.errors import InputError, PreconditionRefused
from src.hilbert_core import Point, as_point, check_same_dim

X_VARIANCE = 1.0 / 3.0
PSD_CLIP = 1e-8
COVARIATE_MODES = ("grid_mean", "conditional")
STREAM_CHUNK = 4096


@dataclass(frozen=True)
class BrownianModel:
    """Simulation design.

    ``covariate="grid_mean"`` draws a path and takes X as its grid mean, which
    matches the continuous-time integral up to O(1/d). ``"conditional"`` draws
    X ~ N(0, 1/3) and then Y | X exactly, which keeps the conditional median
    exact at small d.
    """

    d: int = 100
    x_star: float = 0.39
    covariate: str = "grid_mean"

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise InputError(f"Grid size d must be a positive integer, got {self.d}")
        if self.covariate not in COVARIATE_MODES:
            raise InputError(
                f"Unknown covariate mode: '{self.covariate}'.  Supported: {', '.join(COVARIATE_MODES)}"
            )

    @cached_property
    def grid(self) -> np.ndarray:
        return np.arange(1, self.d + 1, dtype=np.float64) / self.d

    @cached_property
    def covariance(self) -> np.ndarray:
        """Cov(Y(t_j), Y(t_l)) = min(t_j, t_l)."""
        return np.minimum.outer(self.grid, self.grid)

    @cached_property
    def cross_covariance(self) -> np.ndarray:
        """Cov(X, Y(t_j)) = t_j (1 - t_j / 2)."""
        t = self.grid
        return t * (1.0 - t / 2.0)

    @cached_property
    def median_shape(self) -> np.ndarray:
        t = self.grid
        return 1.5 * t * (2.0 - t)

    @cached_property
    def conditional_covariance(self) -> np.ndarray:
        c = self.cross_covariance
        cov = self.covariance - np.outer(c, c) / X_VARIANCE
        return 0.5 * (cov + cov.T)

    @cached_property
    def conditional_factor(self) -> np.ndarray:
        """Symmetric square root of the conditional covariance."""
        vals, vecs = linalg.eigh(self.conditional_covariance)
        if vals.min() < -PSD_CLIP:
            raise PreconditionRefused(
                f"Conditional covariance is indefinite (smallest eigenvalue {vals.min():.3g})"
            )
        vals = np.clip(vals, 0.0, None)
        return (vecs * np.sqrt(vals)) @ vecs.T


# ---- samplers ------------------------------------------------------- #

def conditional_sample(model: BrownianModel, x, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` draws of Y | X = x (``x`` scalar or one value per draw)."""
    x = np.broadcast_to(np.asarray(x, dtype=np.float64), (n,))
    noise = rng.standard_normal((n, model.d)) @ model.conditional_factor
    return np.outer(x, model.median_shape) + noise


def brownian_sample(model: BrownianModel, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """``n`` i.i.d. pairs as arrays ``xs`` (n,) and ``ys`` (n, d)."""
    if n < 0:
        raise InputError(f"Sample size must be nonnegative, got {n}")
    if model.covariate == "conditional":
        xs = rng.normal(0.0, math.sqrt(X_VARIANCE), size=n)
        return xs, conditional_sample(model, xs, n, rng)
    increments = rng.standard_normal((n, model.d)) * math.sqrt(1.0 / model.d)
    ys = np.cumsum(increments, axis=1)
    return ys.mean(axis=1), ys


def stream_pairs(model: BrownianModel, n: int, rng: np.random.Generator, chunk: int = STREAM_CHUNK):
    """Yield ``n`` simulated records ``(x, y)``, generated chunk by chunk."""
    remaining = n
    while remaining > 0:
        size = min(chunk, remaining)
        xs, ys = brownian_sample(model, size, rng)
        for i in range(size):
            yield float(xs[i]), ys[i]
        remaining -= size


def brownian_pair(model: BrownianModel, rng: np.random.Generator) -> tuple[float, Point]:
    xs, ys = brownian_sample(model, 1, rng)
    return float(xs[0]), ys[0]


def conditional_sampler(model: BrownianModel, x: float, rng: np.random.Generator) -> Point:
    return conditional_sample(model, x, 1, rng)[0]


def make_conditional_sampler(model: BrownianModel, x: float):
    """Sampler ``(rng, size) -> (size, d)`` of Y | X = x."""

    def sampler(rng: np.random.Generator, size: int) -> np.ndarray:
        return conditional_sample(model, x, size, rng)

    return sampler


# ---- ground truth --------------------------------------------------- #

def true_median(model: BrownianModel, t: float, x: float) -> float:
    if not np.any(np.abs(model.grid - t) <= 1e-12):
        raise InputError(f"t={t} is not a grid point of the d={model.d} model")
    return 1.5 * t * (2.0 - t) * x


def median_curve(model: BrownianModel, x: float) -> Point:
    return model.median_shape * x


def mse(estimate, model: BrownianModel, x: float) -> float:
    """Mean squared error over the grid against the true conditional median."""
    estimate = as_point(estimate, name="estimate")
    if estimate.shape != (model.d,):
        raise InputError(f"Estimate has dim {estimate.size}, model has d={model.d}")
    return float(np.mean(np.square(median_curve(model, x) - estimate)))


def marginal_density(x: float) -> float:
    """Density of X ~ N(0, 1/3)."""
    return float(stats.norm.pdf(x, loc=0.0, scale=math.sqrt(X_VARIANCE)))


def gaussian_wasserstein(m1, m2) -> float:
    """W2 distance between Gaussians that share a covariance matrix."""
    m1 = as_point(m1, name="m1")
    m2 = as_point(m2, name="m2")
    check_same_dim(m1, m2, "means")
    return float(np.linalg.norm(m1 - m2))
