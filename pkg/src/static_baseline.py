"""Offline comparator: kernel weights and the weighted Weiszfeld algorithm."""

from dataclasses import dataclass, field

import numpy as np

from src.errors import EmptySampleError, InputError
from src.hilbert_core import Kernel, Point

ANCHOR_TOL = 1e-12
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 500


@dataclass
class WeightedSample:
    """Points (one per row) with nonnegative weights."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        self.weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if self.points.shape[0] == 0 or self.points.shape[1] == 0:
            raise InputError("Weighted sample needs at least one point")
        if self.points.shape[0] != self.weights.shape[0]:
            raise InputError(
                f"{self.points.shape[0]} points but {self.weights.shape[0]} weights"
            )
        if not np.all(np.isfinite(self.points)) or not np.all(np.isfinite(self.weights)):
            raise InputError("Weighted sample contains non-finite values")
        if np.any(self.weights < 0):
            raise InputError("Weights must be nonnegative")
        if not self.weights.sum() > 0:
            raise EmptySampleError("All weights are zero")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class WeiszfeldResult:
    median: Point
    iterations: int
    converged: bool
    objective: float
    objectives: list[float] = field(default_factory=list)


def kernel_weights(x: float, xs, h: float, k: Kernel) -> np.ndarray:
    """Normalized weights proportional to K((X_i - x) / h)."""
    xs = np.asarray(xs, dtype=np.float64).ravel()
    if xs.size == 0:
        raise InputError("kernel_weights needs at least one covariate")
    if not h > 0:
        raise InputError(f"Bandwidth must be positive, got {h}")
    # log domain: a Gaussian at tiny h would underflow every raw weight to zero
    logw = k.log_values((xs - x) / h)
    top = np.max(logw)
    if not np.isfinite(top):
        raise EmptySampleError(
            f"No covariate within the kernel support around x={x:g} (h={h:g})"
        )
    w = np.exp(logw - top)
    return w / w.sum()


def empirical_risk(alpha, sample: WeightedSample) -> float:
    """Weighted sum of distances from ``alpha`` to the sample points."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (sample.dim,):
        raise InputError(f"Dimension mismatch: alpha has shape {alpha.shape}, sample dim {sample.dim}")
    return float(sample.weights @ np.linalg.norm(sample.points - alpha, axis=1))


def _point_is_median(points: np.ndarray, weights: np.ndarray, j: int) -> bool:
    """Optimality of data point j: the pull of the other points is at most w_j."""
    diff = points - points[j]
    dist = np.linalg.norm(diff, axis=1)
    others = dist > ANCHOR_TOL
    w_j = weights[~others].sum()
    if not others.any():
        return True
    pull = (weights[others, None] * diff[others] / dist[others, None]).sum(axis=0)
    return bool(np.linalg.norm(pull) <= w_j)


def _step(points: np.ndarray, weights: np.ndarray, alpha: np.ndarray) -> tuple[np.ndarray, bool]:
    """One Weiszfeld step with the Vardi-Zhang rule at data points.

    Returns the new iterate and whether ``alpha`` is a data point that is
    already optimal.
    """
    diff = points - alpha
    dist = np.linalg.norm(diff, axis=1)
    anchored = dist < ANCHOR_TOL
    free = ~anchored
    inv = weights[free] / dist[free]
    denom = inv.sum()
    if denom == 0.0:
        return alpha, True
    if not anchored.any():
        return (inv @ points[free]) / denom, False

    w_anchor = weights[anchored].sum()
    pull = inv @ diff[free]
    r = np.linalg.norm(pull)
    if r <= w_anchor:
        return alpha, True
    return alpha + (r - w_anchor) / denom * (pull / r), False


def weiszfeld(
    sample: WeightedSample,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> WeiszfeldResult:
    """Minimize ``alpha -> sum_i w_i ||Y_i - alpha||``.

    Starts from the weighted coordinate-wise mean and stops once the move is
    below ``tol`` relative to the iterate size. Running out of iterations is
    reported through ``converged`` and the best iterate seen is returned.
    """
    if not tol > 0:
        raise InputError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise InputError(f"max_iter must be at least 1, got {max_iter}")

    keep = sample.weights > 0
    points = sample.points[keep]
    weights = sample.weights[keep] / sample.weights[keep].sum()
    reduced = WeightedSample(points, weights)

    heavy = int(np.argmax(weights))
    if weights[heavy] >= 0.5 or len(points) == 1:
        if _point_is_median(points, weights, heavy):
            median = points[heavy].copy()
            risk = empirical_risk(median, reduced)
            return WeiszfeldResult(median, 0, True, risk, [risk])

    alpha = weights @ points
    best, best_risk = alpha, empirical_risk(alpha, reduced)
    objectives = [best_risk]
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        new, at_optimum = _step(points, weights, alpha)
        if at_optimum:
            converged = True
            break
        move = np.linalg.norm(new - alpha)
        alpha = new
        risk = empirical_risk(alpha, reduced)
        objectives.append(risk)
        if risk <= best_risk:
            best, best_risk = alpha, risk
        if move <= tol * max(1.0, np.linalg.norm(alpha)):
            converged = True
            break

    # Weiszfeld creeps towards a data-point optimum; snap to it when it is one
    nearest = int(np.argmin(np.linalg.norm(points - best, axis=1)))
    if _point_is_median(points, weights, nearest):
        best = points[nearest].copy()
        best_risk = empirical_risk(best, reduced)
        converged = True

    return WeiszfeldResult(np.asarray(best, dtype=np.float64).copy(), iterations, converged, best_risk, objectives)


def static_estimate(
    x: float,
    xs,
    ys,
    h: float,
    k: Kernel,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> WeiszfeldResult:
    """Kernel-weighted Weiszfeld estimate of the conditional median at ``x``."""
    weights = kernel_weights(x, xs, h, k)
    return weiszfeld(WeightedSample(np.asarray(ys, dtype=np.float64), weights), tol, max_iter)

