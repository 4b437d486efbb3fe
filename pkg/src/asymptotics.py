"""Diagnostics tied to the convergence theory of the kernel recursion.

Covers the admissibility of power-law schedules, Monte Carlo plug-in values
of the two operators in the limiting covariance of the averaged estimator,
the sandwich covariance itself and a log-log rate fit.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from src.errors import InputError, PreconditionRefused
from src.hilbert_core import Kernel, Point, Schedule, as_point
from src.log import log

BOUNDARY_TOL = 1e-12
MAX_DEGENERATE_FRACTION = 0.01


# ---- schedule admissibility ------------------------------------------ #

@dataclass
class ScheduleVerdict:
    as_convergence: bool
    rate_bound: bool
    clt: bool
    violated: list[str] = field(default_factory=list)

    def summary(self) -> str:
        return f"as:{_flag(self.as_convergence)} rate:{_flag(self.rate_bound)} clt:{_flag(self.clt)}"


def _flag(value: bool) -> str:
    return "true" if value else "false"


def _check(name: str, lhs: float, op: str, rhs: float, violated: list[str]) -> bool:
    """Evaluate ``lhs op rhs``; equality within BOUNDARY_TOL counts as the boundary."""
    boundary = abs(lhs - rhs) <= BOUNDARY_TOL
    if op == ">":
        ok = lhs > rhs and not boundary
    elif op == "<":
        ok = lhs < rhs and not boundary
    elif op == ">=":
        ok = lhs >= rhs or boundary
    else:
        ok = lhs <= rhs or boundary
    if not ok:
        violated.append(f"{name} (boundary)" if boundary else name)
    return ok


def validate_schedule(gamma: float, h: float, beta: float) -> ScheduleVerdict:
    """Check the step exponent ``gamma`` and bandwidth exponent ``h``.

    ``beta`` is the Hoelder regularity of the conditional law in the covariate.
    Strict inequalities fail on the boundary, non-strict ones pass.
    """
    for name, v in (("gamma", gamma), ("h", h)):
        if not (0.0 < v <= 1.0):
            raise InputError(f"{name} must lie in (0, 1], got {v}")
    if not beta > 0:
        raise InputError(f"beta must be positive, got {beta}")

    violated: list[str] = []
    g_le_1 = _check("gamma <= 1", gamma, "<=", 1.0, violated)
    two_g = _check("2*gamma - h > 1", 2 * gamma - h, ">", 1.0, violated)
    g_bh = _check("gamma + beta*h > 1", gamma + beta * h, ">", 1.0, violated)
    as_conv = g_le_1 and two_g and g_bh

    rate_cond = _check("h*(1 + 2*beta) >= gamma", h * (1 + 2 * beta), ">=", gamma, violated)
    g_lt_1 = _check("gamma < 1", gamma, "<", 1.0, violated)
    h_big = _check("h > 1/(2*beta + 1)", h, ">", 1.0 / (2 * beta + 1), violated)

    return ScheduleVerdict(
        as_convergence=as_conv,
        rate_bound=as_conv and rate_cond,
        clt=g_lt_1 and two_g and g_bh and h_big,
        violated=violated,
    )


def inverse_bandwidth_sum_gap(bandwidth: Schedule, n: int) -> float:
    """Relative gap between sum_{k<=n} 1/h_k and (n / h_n) / (1 + h)."""
    if bandwidth.is_fixed:
        raise InputError("The inverse-bandwidth sum gap needs a decaying bandwidth")
    k = np.arange(1, n + 1, dtype=np.float64)
    total = float(np.sum(1.0 / (bandwidth.c * k ** -bandwidth.exponent)))
    scale = n / bandwidth.value(n)
    return abs(total - scale / (1.0 + bandwidth.exponent)) / scale


# ---- plug-in covariance operators ------------------------------------ #

@dataclass
class CovariancePair:
    sigma: np.ndarray
    gamma_op: np.ndarray
    mc_samples: int
    skipped: int = 0
    # p(x) times the kernel integral; the recursion sees Gamma through this factor
    hessian_scale: float = 1.0

    @property
    def min_gamma_eigenvalue(self) -> float:
        return float(linalg.eigvalsh(self.gamma_op).min())

    @property
    def hessian(self) -> np.ndarray:
        return self.hessian_scale * self.gamma_op


def _shard_sums(sampler, m: np.ndarray, rng: np.random.Generator, size: int):
    ys = np.asarray(sampler(rng, size), dtype=np.float64)
    diff = ys - m
    r = np.linalg.norm(diff, axis=1)
    ok = r > 0
    u = diff[ok] / r[ok, None]
    outer = u.T @ u
    inv_r = 1.0 / r[ok]
    gamma_sum = inv_r.sum() * np.eye(m.size) - (u * inv_r[:, None]).T @ u
    return outer, gamma_sum, int(ok.sum()), int((~ok).sum())


def estimate_sigma_gamma(
    sampler,
    m,
    p_x: float,
    kernel: Kernel,
    mc_samples: int,
    seed: int,
    shards: int = 1,
) -> CovariancePair:
    """Monte Carlo plug-in of the two operators in the limiting covariance.

    ``sampler(rng, size)`` draws responses from the conditional law at the
    target covariate and ``m`` is its median. Shards draw from independent
    child seeds and are merged in shard order.
    """
    m = as_point(m, name="median")
    if mc_samples < 100:
        raise InputError(f"mc_samples must be at least 100, got {mc_samples}")
    if m.size < 2:
        raise InputError("The covariance operators need a response dimension of at least 2")
    if shards < 1:
        raise InputError(f"shards must be at least 1, got {shards}")
    if not (p_x > 0 and math.isfinite(p_x)):
        raise InputError(f"Covariate density must be positive at the target, got {p_x}")

    sizes = [mc_samples // shards + (1 if i < mc_samples % shards else 0) for i in range(shards)]
    children = np.random.SeedSequence(seed).spawn(shards)
    with ThreadPoolExecutor(max_workers=shards) as pool:
        parts = list(pool.map(
            lambda args: _shard_sums(sampler, m, np.random.default_rng(args[0]), args[1]),
            zip(children, sizes),
        ))

    outer = sum(p[0] for p in parts)
    gamma_sum = sum(p[1] for p in parts)
    used = sum(p[2] for p in parts)
    skipped = sum(p[3] for p in parts)
    if used == 0:
        raise InputError("Every Monte Carlo draw coincided with the median")
    if skipped:
        log(f"Skipped {skipped} Monte Carlo draws equal to the median")
        if skipped > MAX_DEGENERATE_FRACTION * mc_samples:
            raise PreconditionRefused(
                f"{skipped} of {mc_samples} draws sit on the median; the conditional law has an atom there"
            )

    sigma = p_x * kernel.square_integral * outer / used
    gamma_op = gamma_sum / used
    return CovariancePair(
        sigma=0.5 * (sigma + sigma.T),
        gamma_op=0.5 * (gamma_op + gamma_op.T),
        mc_samples=mc_samples,
        skipped=skipped,
        hessian_scale=p_x * kernel.integral,
    )


def sandwich_covariance(pair: CovariancePair, h: float) -> np.ndarray:
    """(1 / (1 + h)) * H^-1 Sigma H^-1 with H = p(x) * Gamma, symmetrized.

    The averaged kernel recursion linearizes around the median with the
    effective Hessian H, so the density enters both sides of the sandwich.
    """
    if not (0.0 <= h <= 1.0):
        raise InputError(f"h must lie in [0, 1], got {h}")
    hessian = pair.hessian
    smallest = float(linalg.eigvalsh(hessian).min())
    if smallest <= 1e-10:
        raise PreconditionRefused(
            f"Gamma is singular (smallest eigenvalue {smallest:.3g}); "
            "the conditional law may be concentrated on a line",
            ["conditional law not concentrated on a line"],
        )
    left = linalg.solve(hessian, pair.sigma, assume_a="sym")
    cov = linalg.solve(hessian, left.T, assume_a="sym")
    cov = 0.5 * (cov + cov.T)
    return cov / (1.0 + h)


# ---- rates and weighted averages -------------------------------------- #

@dataclass
class RateFit:
    slope: float
    intercept: float
    r2: float


def rate_slope(errors) -> RateFit:
    """Least-squares fit of log(mse) against log(n)."""
    errors = list(errors)
    if len(errors) < 4:
        raise InputError(f"rate_slope needs at least 4 points, got {len(errors)}")
    ns = np.array([e[0] for e in errors], dtype=np.float64)
    mses = np.array([e[1] for e in errors], dtype=np.float64)
    if len(np.unique(ns)) != len(ns):
        raise InputError("rate_slope needs distinct sample sizes")
    if np.any(ns < 1):
        raise InputError("Sample sizes must be positive")
    if np.any(~(mses > 0)):
        raise InputError("Errors must be positive to take logarithms")
    fit = stats.linregress(np.log(ns), np.log(mses))
    return RateFit(slope=float(fit.slope), intercept=float(fit.intercept), r2=float(fit.rvalue ** 2))


def weighted_average_diag(iterates, m, bandwidths) -> Point:
    """(1/n) * sum_k sqrt(h_k) * (Z_k - m)."""
    iterates = np.atleast_2d(np.asarray(iterates, dtype=np.float64))
    bandwidths = np.asarray(bandwidths, dtype=np.float64).ravel()
    m = as_point(m, name="median")
    if iterates.shape[0] != bandwidths.shape[0] or iterates.shape[0] == 0:
        raise InputError(
            f"Need equally many iterates and bandwidths (>= 1), got {iterates.shape[0]} and {bandwidths.shape[0]}"
        )
    if iterates.shape[1] != m.size:
        raise InputError(f"Iterates have dim {iterates.shape[1]}, median has dim {m.size}")
    return (np.sqrt(bandwidths) @ (iterates - m)) / iterates.shape[0]


# ---- smoothed objective and expected step ----------------------------- #

def _local_weights(xs, x: float, h: float, kernel: Kernel) -> np.ndarray:
    if not h > 0:
        raise InputError(f"Bandwidth must be positive, got {h}")
    return kernel.values((np.asarray(xs, dtype=np.float64) - x) / h) / h


def _unit_steps(alpha: np.ndarray, ys: np.ndarray) -> np.ndarray:
    diff = ys - alpha
    r = np.linalg.norm(diff, axis=1)
    out = np.zeros_like(diff)
    ok = r > 0
    out[ok] = diff[ok] / r[ok, None]
    return out


def smoothed_objective(alpha, xs, ys, x: float, h: float, kernel: Kernel) -> float:
    """Sample mean of (||Y - alpha|| - ||Y||) * K((X - x) / h) / h."""
    alpha = as_point(alpha, name="alpha")
    ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    w = _local_weights(xs, x, h, kernel)
    gap = np.linalg.norm(ys - alpha, axis=1) - np.linalg.norm(ys, axis=1)
    return float(np.mean(gap * w))


def smoothed_gradient(alpha, xs, ys, x: float, h: float, kernel: Kernel) -> Point:
    """Sample version of the gradient of the smoothed objective at ``alpha``."""
    alpha = as_point(alpha, name="alpha")
    ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    w = _local_weights(xs, x, h, kernel)
    return -(w @ _unit_steps(alpha, ys)) / ys.shape[0]


def mean_kernel_step(alpha, xs, ys, x: float, h: float, kernel: Kernel) -> tuple[float, float]:
    """Norm of the mean kernel-weighted unit step and its Monte Carlo standard error."""
    alpha = as_point(alpha, name="alpha")
    ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    n = ys.shape[0]
    if n < 2:
        raise InputError("mean_kernel_step needs at least two records")
    steps = _local_weights(xs, x, h, kernel)[:, None] * _unit_steps(alpha, ys)
    mean = steps.mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm == 0.0:
        return 0.0, float(math.sqrt(np.sum(steps.var(axis=0, ddof=1)) / n))
    # delta method: project the per-record steps on the mean direction
    proj = steps @ (mean / norm)
    return norm, float(proj.std(ddof=1) / math.sqrt(n))
