"""Online estimators of the conditional geometric median.

Each record ``(x_new, y)`` is seen once. The iterate moves a step of length
``gamma_n * K((x_new - x) / h_n) / h_n`` towards ``y``; the averaged iterate is
the running mean of the iterates after ``burn_in``. Unconditional mode drops
the kernel weight.
"""

import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from src.errors import EmptySampleError, InputError
from src.hilbert_core import GaussianKernel, Kernel, Point, Schedule, as_point
from src.log import WarningCounter, log
from src.static_baseline import WeightedSample, empirical_risk, kernel_weights

INIT_MODES = ("first_record", "given_point", "random_record")
RANDOM_INIT_WINDOW = 100
RISK_RESERVOIR_SIZE = 1000


@dataclass(frozen=True)
class EstimatorConfig:
    x: float | None = None
    step: Schedule = field(default_factory=lambda: Schedule.decaying(1.0, 2.0 / 3.0))
    bandwidth: Schedule = field(default_factory=lambda: Schedule.fixed(0.15))
    kernel: Kernel = field(default_factory=GaussianKernel)
    mode: str = "conditional"
    burn_in: int = 0
    init: str = "first_record"
    init_point: Point | None = field(default=None, compare=False)
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("conditional", "unconditional"):
            raise InputError(f"Unknown mode: '{self.mode}'.  Supported: conditional, unconditional")
        if self.mode == "conditional" and (self.x is None or not math.isfinite(self.x)):
            raise InputError("Conditional mode needs a finite target covariate x")
        if self.burn_in < 0:
            raise InputError(f"burn_in must be nonnegative, got {self.burn_in}")
        if self.init not in INIT_MODES:
            raise InputError(f"Unknown init: '{self.init}'.  Supported: {', '.join(INIT_MODES)}")
        if self.init == "given_point" and self.init_point is None:
            raise InputError("init=given_point needs init_point")

    @property
    def conditional(self) -> bool:
        return self.mode == "conditional"


@dataclass
class EstimatorState:
    z: Point
    z_bar: Point
    n: int
    n_avg: int
    config: EstimatorConfig
    skipped: int = 0

    @classmethod
    def start(cls, z1, config: EstimatorConfig) -> "EstimatorState":
        z1 = as_point(z1, name="initial point").copy()
        return cls(z=z1, z_bar=np.zeros_like(z1), n=1, n_avg=0, config=config)

    @property
    def dim(self) -> int:
        return self.z.shape[0]


@dataclass
class StreamResult:
    z: Point
    z_bar: Point
    n: int
    skipped: int = 0
    n_avg: int = 0


@dataclass
class TargetEstimate:
    x: float
    z: Point
    z_bar: Point


# ---- single-step updates ---------------------------------------------- #

def _finite(x_new: float, y: np.ndarray) -> bool:
    return math.isfinite(x_new) and bool(np.isfinite(y).all())


def rm_update(state: EstimatorState, record, warnings: WarningCounter | None = None) -> EstimatorState:
    """Move ``state.z`` one Robbins-Monro step towards the record's response.

    Records with non-finite values are skipped and counted in ``state.skipped``.
    """
    x_new, y = record
    y = np.asarray(y, dtype=np.float64)
    if y.shape != state.z.shape:
        raise InputError(f"Record has dim {y.size}, estimator has dim {state.dim}")
    x_new = float(x_new) if state.config.conditional else 0.0
    if not _finite(x_new, y):
        state.skipped += 1
        if warnings is not None:
            warnings.warn(f"non-finite record after n={state.n}")
        return state

    cfg = state.config
    n = state.n
    state.n = n + 1
    if cfg.conditional:
        h = cfg.bandwidth.value(n)
        weight = cfg.kernel.scalar((x_new - cfg.x) / h) / h
        if weight == 0.0:
            return state
    else:
        weight = 1.0

    diff = y - state.z
    dist = math.sqrt(float(diff @ diff))
    if dist == 0.0:
        return state
    state.z = state.z + (cfg.step.value(n) * weight / dist) * diff
    return state


def averaged_update(state: EstimatorState) -> EstimatorState:
    """Fold the current iterate into the running mean (no-op during burn-in)."""
    if state.n <= state.config.burn_in:
        return state
    state.n_avg += 1
    state.z_bar = state.z_bar + (state.z - state.z_bar) / state.n_avg
    return state


# ---- streaming drivers ------------------------------------------------ #

def _start_weights(config: EstimatorConfig, xs: Sequence[float]) -> np.ndarray | None:
    """Kernel weights of the candidate starting records around the target.

    ``None`` (uniform draw) in unconditional mode or when no candidate gets
    positive weight.
    """
    if not config.conditional:
        return None
    h = config.bandwidth.value(len(xs))
    w = config.kernel.values((np.asarray(xs, dtype=np.float64) - config.x) / h)
    total = float(w.sum())
    if not total > 0:
        return None
    return w / total


def _draw_start_indices(seed: int, count: int, weights: np.ndarray | None, available: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    if weights is None:
        return rng.choice(available, size=count, replace=count > available)
    return rng.choice(available, size=count, replace=count > np.count_nonzero(weights), p=weights)


def _records_with_index(records: Iterable) -> Iterable:
    for i, (x_new, y) in enumerate(records):
        yield i, float(x_new), np.asarray(y, dtype=np.float64)


def _drive(records: Iterable, configs: list[EstimatorConfig], on_step=None) -> list[EstimatorState]:
    """Advance one state per config over a single pass of ``records``."""
    stream = iter(_records_with_index(records))
    base = configs[0]
    warnings = WarningCounter("records")
    buffered: list = []

    if base.init == "first_record":
        first = next(stream, None)
        if first is None:
            raise InputError("Empty record source")
        z1 = first[2]
        if not _finite(first[1] if base.conditional else 0.0, z1):
            raise InputError("First record is not finite and cannot initialise the estimator")
    elif base.init == "given_point":
        z1 = base.init_point
    else:
        for item in stream:
            buffered.append(item)
            if len(buffered) >= RANDOM_INIT_WINDOW:
                break
        if not buffered:
            raise InputError("Empty record source")
        choices = [item for item in buffered if _finite(item[1] if base.conditional else 0.0, item[2])]
        if not choices:
            raise InputError("No finite record available to initialise the estimator")
        weights = _start_weights(base, [item[1] for item in choices])
        z1 = choices[int(_draw_start_indices(base.seed, 1, weights, len(choices))[0])][2]

    states = [EstimatorState.start(z1, cfg) for cfg in configs]
    dim = states[0].dim
    for st in states:
        averaged_update(st)

    def _items():
        yield from buffered
        yield from stream

    seen = 0
    for i, x_new, y in _items():
        seen += 1
        if y.shape != (dim,):
            raise InputError(f"Record {i + 1} has dim {y.size}, expected {dim}")
        consumed = []
        for st in states:
            before = st.skipped
            rm_update(st, (x_new, y), warnings)
            if st.skipped == before:
                averaged_update(st)
                consumed.append(st)
        if on_step is not None:
            for st in consumed:
                on_step(st)

    if base.init != "first_record" and seen == 0:
        raise InputError("Empty record source")
    warnings.summary()
    return states


def run_stream(
    records: Iterable,
    config: EstimatorConfig,
    on_step: Callable[[EstimatorState], None] | None = None,
) -> StreamResult:
    """Run the estimator over one pass of ``records``.

    Memory stays O(dim) except for ``random_record`` init, which buffers the
    first records it draws the starting point from.
    """
    st = _drive(records, [config], on_step)[0]
    return StreamResult(z=st.z, z_bar=st.z_bar, n=st.n, skipped=st.skipped, n_avg=st.n_avg)


def multi_target_run(records: Iterable, base: EstimatorConfig, targets: Sequence[float]) -> list[TargetEstimate]:
    """One pass over ``records`` updating an estimator per target covariate."""
    if len(targets) == 0:
        raise InputError("multi_target_run needs at least one target")
    configs = [replace(base, x=float(t)) for t in targets]
    states = _drive(records, configs)
    return [TargetEstimate(x=cfg.x, z=st.z, z_bar=st.z_bar) for cfg, st in zip(configs, states)]


# ---- multi-start selection -------------------------------------------- #

def _require_replayable(records):
    if iter(records) is records:
        raise InputError("Multi-start needs a replayable source (a list or a file path), not an iterator")


def reservoir_sample(records: Iterable, size: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform sample of at most ``size`` records from one pass."""
    rng = np.random.default_rng(seed)
    xs: list[float] = []
    ys: list[np.ndarray] = []
    seen = 0
    for _, x_new, y in _records_with_index(records):
        if not _finite(x_new, y):
            continue
        seen += 1
        if len(xs) < size:
            xs.append(x_new)
            ys.append(y)
            continue
        j = int(rng.integers(0, seen))
        if j < size:
            xs[j] = x_new
            ys[j] = y
    return np.asarray(xs), np.asarray(ys)


@dataclass
class MultiStartResult:
    runs: list[StreamResult]
    rm_risks: list[float]
    avg_risks: list[float]

    def select(self, which: str = "averaged") -> Point:
        if which == "averaged":
            return self.runs[int(np.argmin(self.avg_risks))].z_bar
        if which == "rm":
            return self.runs[int(np.argmin(self.rm_risks))].z
        raise InputError(f"Unknown estimator: '{which}'.  Supported: averaged, rm")

    def best_risk(self, which: str = "averaged") -> float:
        return min(self.avg_risks if which == "averaged" else self.rm_risks)


def multi_start_run(records, config: EstimatorConfig, restarts: int, seed: int) -> MultiStartResult:
    """Run from ``restarts`` random starting records and score every run.

    Starting records are drawn among the first records with probability
    proportional to their kernel weight around the target covariate.

    Each run's Robbins-Monro and averaged estimates are scored by the
    kernel-weighted empirical risk over a reservoir of records, weighted at the
    bandwidth of the final iteration.
    """
    if restarts < 1:
        raise InputError(f"restarts must be at least 1, got {restarts}")
    _require_replayable(records)

    window: list[tuple[float, np.ndarray]] = []
    for _, x_new, y in _records_with_index(records):
        if _finite(x_new if config.conditional else 0.0, y):
            window.append((x_new, y))
        if len(window) >= RANDOM_INIT_WINDOW:
            break
    if not window:
        raise InputError("Empty record source")

    if restarts == 1:
        starts = [None]
    else:
        weights = _start_weights(config, [x_new for x_new, _ in window])
        starts = [window[int(i)][1] for i in _draw_start_indices(seed, restarts, weights, len(window))]

    runs = []
    for z1 in starts:
        if z1 is None:
            cfg = replace(config, init="random_record", seed=seed)
        else:
            cfg = replace(config, init="given_point", init_point=z1)
        runs.append(run_stream(records, cfg))

    xs, ys = reservoir_sample(records, RISK_RESERVOIR_SIZE, seed + 1)
    if config.conditional:
        h_final = config.bandwidth.value(runs[0].n)
        try:
            w = kernel_weights(config.x, xs, h_final, config.kernel)
        except EmptySampleError:
            log(f"No reservoir record near x={config.x:g}; scoring restarts with equal weights")
            w = np.full(len(xs), 1.0 / len(xs))
    else:
        w = np.full(len(xs), 1.0 / len(xs))
    sample = WeightedSample(ys, w)

    rm_risks = [empirical_risk(r.z, sample) for r in runs]
    avg_risks = [empirical_risk(r.z_bar, sample) for r in runs]
    return MultiStartResult(runs, rm_risks, avg_risks)


def multi_start_select(records, config: EstimatorConfig, restarts: int, seed: int) -> Point:
    """Averaged estimate of the restart with the smallest empirical risk."""
    return multi_start_run(records, config, restarts, seed).select("averaged")
