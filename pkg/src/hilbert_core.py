"""Geometry of the response space: points, unit directions, kernels and schedules.

Points are 1-D float64 numpy arrays. Norms are Euclidean on the coordinate
vector; a curve sampled on a grid is treated as a plain vector, without any
grid-spacing rescaling.
"""

import math
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from src.errors import InputError

Point = np.ndarray


def as_point(coords, name: str = "point") -> Point:
    """Convert ``coords`` to a finite 1-D float64 array."""
    try:
        arr = np.asarray(coords, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{name}: not numeric ({exc})") from None
    if arr.ndim != 1 or arr.size == 0:
        raise InputError(f"{name}: expected a non-empty vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name}: contains non-finite coordinates")
    return arr


def check_same_dim(a: Point, b: Point, what: str = "points"):
    if a.shape != b.shape:
        raise InputError(f"Dimension mismatch between {what}: {a.shape[0]} vs {b.shape[0]}")


def direction(a, b) -> Point:
    """Unit vector starting at ``a`` pointing to ``b``; zero vector when a == b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_same_dim(a, b)
    diff = b - a
    dist = np.linalg.norm(diff)
    if dist == 0.0:
        return np.zeros_like(diff)
    return diff / dist


# ---------- Kernels ---------- #


class Kernel(ABC):
    """Base class for a smoothing kernel on the real line.

    The Gaussian kernel does not have compact support, which the convergence
    theory asks for; it is offered anyway because the simulation study uses it.
    """

    @property
    @abstractmethod
    def name(self) -> str:
        """Family name as accepted by ``create_kernel``."""

    @property
    @abstractmethod
    def sup(self) -> float:
        """Maximum value of the kernel."""

    @property
    @abstractmethod
    def square_integral(self) -> float:
        """Closed-form value of the integral of K(u)**2."""

    @property
    @abstractmethod
    def support(self) -> float:
        """Half-width of the interval holding (effectively) all the mass."""

    @property
    def integral(self) -> float:
        """Integral of K over the line."""
        return 1.0

    @abstractmethod
    def scalar(self, u: float) -> float:
        """K(u) for a single float."""

    @abstractmethod
    def log_values(self, u: np.ndarray) -> np.ndarray:
        """log K(u), ``-inf`` outside the support."""

    def values(self, u: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.exp(self.log_values(u))

    def __call__(self, u):
        if np.ndim(u) == 0:
            return self.scalar(float(u))
        return self.values(np.asarray(u, dtype=np.float64))

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"

    def __eq__(self, other) -> bool:
        return isinstance(other, Kernel) and other.name == self.name

    def __hash__(self) -> int:
        return hash(self.name)


class GaussianKernel(Kernel):
    _NORM = 1.0 / math.sqrt(2.0 * math.pi)
    _LOG_NORM = -0.5 * math.log(2.0 * math.pi)

    @property
    def name(self) -> str:
        return "gaussian"

    @property
    def sup(self) -> float:
        return self._NORM

    @property
    def square_integral(self) -> float:
        return 1.0 / (2.0 * math.sqrt(math.pi))

    @property
    def support(self) -> float:
        return 10.0

    def scalar(self, u: float) -> float:
        return self._NORM * math.exp(-0.5 * u * u)

    def log_values(self, u: np.ndarray) -> np.ndarray:
        return self._LOG_NORM - 0.5 * np.square(u)


class EpanechnikovKernel(Kernel):
    @property
    def name(self) -> str:
        return "epanechnikov"

    @property
    def sup(self) -> float:
        return 0.75

    @property
    def square_integral(self) -> float:
        return 0.6

    @property
    def support(self) -> float:
        return 1.0

    def scalar(self, u: float) -> float:
        if abs(u) > 1.0:
            return 0.0
        return 0.75 * (1.0 - u * u)

    def log_values(self, u: np.ndarray) -> np.ndarray:
        inside = np.abs(u) < 1.0
        out = np.full(np.shape(u), -np.inf)
        out[inside] = math.log(0.75) + np.log1p(-np.square(u[inside]))
        return out


class UniformKernel(Kernel):
    @property
    def name(self) -> str:
        return "uniform"

    @property
    def sup(self) -> float:
        return 1.0

    @property
    def square_integral(self) -> float:
        return 1.0

    @property
    def support(self) -> float:
        return 0.5

    def scalar(self, u: float) -> float:
        return 1.0 if abs(u) <= 0.5 else 0.0

    def log_values(self, u: np.ndarray) -> np.ndarray:
        return np.where(np.abs(u) <= 0.5, 0.0, -np.inf)


class SquaredExponentialKernel(Kernel):
    """Unnormalized weight exp(-u**2).

    Not a density: it integrates to sqrt(pi), so at equal bandwidth it acts
    like a Gaussian density kernel of scale h / sqrt(2) with steps scaled by
    sqrt(pi). The benchmark tables are calibrated against this weight.
    """

    @property
    def name(self) -> str:
        return "squared_exponential"

    @property
    def sup(self) -> float:
        return 1.0

    @property
    def integral(self) -> float:
        return math.sqrt(math.pi)

    @property
    def square_integral(self) -> float:
        return math.sqrt(math.pi / 2.0)

    @property
    def support(self) -> float:
        return 7.0

    def scalar(self, u: float) -> float:
        return math.exp(-u * u)

    def log_values(self, u: np.ndarray) -> np.ndarray:
        return -np.square(u)


KERNELS = {
    "gaussian": GaussianKernel,
    "squared_exponential": SquaredExponentialKernel,
    "epanechnikov": EpanechnikovKernel,
    "uniform": UniformKernel,
}


def create_kernel(family: str) -> Kernel:
    """Build a kernel from its family name."""
    cls = KERNELS.get(str(family).strip().lower())
    if cls is None:
        raise InputError(
            f"Unknown kernel: '{family}'.  Supported: {', '.join(KERNELS)}"
        )
    return cls()


def kernel_eval(k: Kernel, u: float) -> float:
    return k.scalar(float(u))


# ---------- Schedules ---------- #

_DECAYING_RE = re.compile(r"^\s*(?:([0-9.eE+-]+)\s*\*\s*)?n\s*\^\s*\(?\s*-\s*([0-9.eE+]+)\s*\)?\s*$")


@dataclass(frozen=True)
class Schedule:
    """Step or bandwidth sequence: ``c * n**-exponent`` or a fixed value."""

    c: float = 1.0
    exponent: float = 0.0
    mode: str = "decaying"
    fixed_value: float | None = None

    def __post_init__(self):
        if self.mode == "decaying":
            if not (self.c > 0 and math.isfinite(self.c)):
                raise InputError(f"Schedule prefactor must be positive, got {self.c}")
            if not (0.0 <= self.exponent <= 1.0):
                raise InputError(f"Schedule exponent must lie in [0, 1], got {self.exponent}")
        elif self.mode == "fixed":
            if self.fixed_value is None or not (self.fixed_value > 0 and math.isfinite(self.fixed_value)):
                raise InputError(f"Fixed schedule needs a positive value, got {self.fixed_value}")
        else:
            raise InputError(f"Unknown schedule mode: '{self.mode}'.  Supported: decaying, fixed")

    @classmethod
    def decaying(cls, c: float, exponent: float) -> "Schedule":
        return cls(c=float(c), exponent=float(exponent), mode="decaying")

    @classmethod
    def fixed(cls, value: float) -> "Schedule":
        return cls(mode="fixed", fixed_value=float(value))

    @property
    def is_fixed(self) -> bool:
        return self.mode == "fixed"

    def value(self, n: int) -> float:
        if n < 1:
            raise InputError(f"Schedules are indexed from n = 1, got {n}")
        if self.mode == "fixed":
            return self.fixed_value
        return self.c * float(n) ** -self.exponent

    @property
    def label(self) -> str:
        if self.mode == "fixed":
            return f"{self.fixed_value:.9g}"
        return f"{self.c:.9g}*n^-{self.exponent:.9g}"


def schedule_eval(s: Schedule, n: int) -> float:
    return s.value(n)


def parse_schedule(text: str) -> Schedule:
    """Parse ``"0.15"`` (fixed) or ``"n^-0.3"`` / ``"2*n^-0.3"`` (decaying)."""
    text = str(text).strip()
    m = _DECAYING_RE.match(text)
    if m:
        c = float(m.group(1)) if m.group(1) else 1.0
        return Schedule.decaying(c, float(m.group(2)))
    try:
        return Schedule.fixed(float(text))
    except ValueError:
        raise InputError(f"Cannot parse schedule '{text}' (expected 0.15 or n^-0.3)") from None
