"""Monte Carlo replication engine for the Brownian simulation study.

Every replication owns a random stream seeded from ``(master_seed, index)``,
so a report depends only on its configuration, never on the worker count.
"""

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from src.asymptotics import (
    RateFit,
    ScheduleVerdict,
    CovariancePair,
    estimate_sigma_gamma,
    rate_slope,
    sandwich_covariance,
    validate_schedule,
)
from src.errors import InputError, PreconditionRefused
from src.hilbert_core import Schedule, create_kernel, parse_schedule
from src.log import log
from src.recursive_estimator import EstimatorConfig, multi_start_run, run_stream
from src.simulation import (
    BrownianModel,
    brownian_sample,
    make_conditional_sampler,
    marginal_density,
    median_curve,
    mse,
    stream_pairs,
)
from src.static_baseline import static_estimate

ESTIMATORS = ("static", "robbins_monro", "averaged")
ESTIMATOR_LABELS = {"static": "Static kernel", "robbins_monro": "Robbins-Monro", "averaged": "Averaged"}


def _default_bandwidths() -> list[Schedule]:
    return [Schedule.fixed(v) for v in (0.05, 0.10, 0.15, 0.20, 0.25)] + [Schedule.decaying(1.0, 0.3)]


@dataclass(frozen=True)
class TableExperimentConfig:
    n: int = 500
    d: int = 100
    replications: int = 100
    bandwidths: tuple[Schedule, ...] = field(default_factory=lambda: tuple(_default_bandwidths()))
    c_gamma_values: tuple[float, ...] = (0.1, 0.3, 1.0, 3.0)
    estimators: tuple[str, ...] = ESTIMATORS
    gamma_exponent: float = 0.9
    fixed_gamma_exponent: float = 2.0 / 3.0
    restarts: int = 10
    master_seed: int = 0
    x: float = 0.39
    kernel: str = "squared_exponential"
    burn_in: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise InputError(f"replications must be at least 1, got {self.replications}")
        if self.n < 2 or self.d < 1 or self.restarts < 1 or self.workers < 1:
            raise InputError("n >= 2, d >= 1, restarts >= 1 and workers >= 1 are required")
        if not self.bandwidths:
            raise InputError("At least one bandwidth column is required")
        if any(not c > 0 for c in self.c_gamma_values):
            raise InputError("c_gamma values must be positive")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown or not self.estimators:
            raise InputError(f"Unknown estimators {sorted(unknown)}.  Supported: {', '.join(ESTIMATORS)}")
        create_kernel(self.kernel)


@dataclass
class CellResult:
    mean_error_x100: float
    mc_stderr: float
    replications: int
    seconds: float = field(default=0.0, compare=False)


@dataclass
class ExperimentReport:
    """Cells keyed by ``(estimator, c_gamma, bandwidth label)``.

    Static cells have ``c_gamma = None``; a static cell on a decaying
    bandwidth column is present with value ``None`` (not computed).
    """

    cells: dict
    metadata: dict = field(default_factory=dict, compare=False)

    def get(self, estimator: str, c_gamma: float | None, bandwidth: str) -> CellResult | None:
        return self.cells.get((estimator, c_gamma, bandwidth))


# ---- configuration file --------------------------------------------- #

_LIST_KEYS = {"bandwidths", "c_gamma", "estimators"}
_INT_KEYS = {"n", "d", "replications", "restarts", "master_seed", "burn_in", "workers"}
_FLOAT_KEYS = {"gamma_exponent", "fixed_gamma_exponent", "x"}


def load_experiment_config(path: str) -> TableExperimentConfig:
    """Read a key=value experiment file (lists are comma separated, # comments)."""
    values: dict = {}
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as exc:
        raise InputError(f"Cannot read experiment config {path}: {exc}") from None

    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key=value, got '{line}'")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            if key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_KEYS:
                values[key] = float(value)
            elif key == "kernel":
                values[key] = value
            elif key in _LIST_KEYS:
                items = [v.strip() for v in value.split(",") if v.strip()]
                if key == "bandwidths":
                    values["bandwidths"] = tuple(parse_schedule(v) for v in items)
                elif key == "c_gamma":
                    values["c_gamma_values"] = tuple(float(v) for v in items)
                else:
                    values["estimators"] = tuple(items)
            else:
                raise InputError(f"{path}:{lineno}: unknown key '{key}'")
        except ValueError as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"{path}:{lineno}: bad value for '{key}': {value}") from None
    return TableExperimentConfig(**values)


# ---- table experiment ----------------------------------------------- #

def _cell_keys(cfg: TableExperimentConfig) -> list[tuple]:
    keys = []
    if "static" in cfg.estimators:
        keys += [("static", None, bw.label) for bw in cfg.bandwidths]
    for est in ("robbins_monro", "averaged"):
        if est in cfg.estimators:
            keys += [(est, c, bw.label) for c in cfg.c_gamma_values for bw in cfg.bandwidths]
    return keys


def _run_replication(cfg: TableExperimentConfig, index: int) -> tuple[dict, dict]:
    seq = np.random.SeedSequence([cfg.master_seed, index])
    rng = np.random.default_rng(seq)
    restart_seed = int(seq.generate_state(1)[0])
    model = BrownianModel(d=cfg.d, x_star=cfg.x)
    kernel = create_kernel(cfg.kernel)
    xs, ys = brownian_sample(model, cfg.n, rng)
    records = list(zip(xs, ys))
    errors: dict = {}
    seconds: dict = {}

    if "static" in cfg.estimators:
        for bw in cfg.bandwidths:
            if not bw.is_fixed:
                continue
            t0 = time.perf_counter()
            res = static_estimate(cfg.x, xs, ys, bw.fixed_value, kernel)
            if not res.converged:
                log(f"Replication {index}: Weiszfeld did not converge at h={bw.label}")
            errors[("static", None, bw.label)] = 100.0 * mse(res.median, model, cfg.x)
            seconds[("static", None, bw.label)] = time.perf_counter() - t0

    wanted = [e for e in ("robbins_monro", "averaged") if e in cfg.estimators]
    if wanted:
        for c in cfg.c_gamma_values:
            for bw in cfg.bandwidths:
                exponent = cfg.fixed_gamma_exponent if bw.is_fixed else cfg.gamma_exponent
                est_cfg = EstimatorConfig(
                    x=cfg.x,
                    step=Schedule.decaying(c, exponent),
                    bandwidth=bw,
                    kernel=kernel,
                    burn_in=cfg.burn_in,
                )
                t0 = time.perf_counter()
                result = multi_start_run(records, est_cfg, cfg.restarts, restart_seed)
                elapsed = time.perf_counter() - t0
                for est in wanted:
                    which = "rm" if est == "robbins_monro" else "averaged"
                    errors[(est, c, bw.label)] = 100.0 * mse(result.select(which), model, cfg.x)
                    seconds[(est, c, bw.label)] = elapsed
    return errors, seconds


def run_table_experiment(cfg: TableExperimentConfig) -> ExperimentReport:
    """Mean estimation errors (x100) per (estimator, c_gamma, bandwidth) cell."""
    start = time.time()
    log(f"Table experiment: n={cfg.n}, d={cfg.d}, {cfg.replications} replications, {cfg.workers} worker(s)")
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        results = list(pool.map(partial(_run_replication, cfg), range(cfg.replications)))

    cells: dict = {}
    for key in _cell_keys(cfg):
        values = [errors[key] for errors, _ in results if key in errors]
        if not values:
            cells[key] = None
            continue
        arr = np.asarray(values)
        stderr = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
        cells[key] = CellResult(
            mean_error_x100=float(arr.mean()),
            mc_stderr=stderr,
            replications=len(arr),
            seconds=float(sum(secs.get(key, 0.0) for _, secs in results)),
        )

    wall = time.time() - start
    log(f"Table experiment done in {wall:.1f}s")
    metadata = {
        "n": cfg.n,
        "d": cfg.d,
        "replications": cfg.replications,
        "bandwidths": ",".join(bw.label for bw in cfg.bandwidths),
        "c_gamma": ",".join(f"{c:g}" for c in cfg.c_gamma_values),
        "estimators": ",".join(cfg.estimators),
        "gamma_exponent": cfg.gamma_exponent,
        "fixed_gamma_exponent": cfg.fixed_gamma_exponent,
        "restarts": cfg.restarts,
        "x": cfg.x,
        "kernel": cfg.kernel,
        "burn_in": cfg.burn_in,
        "master_seed": cfg.master_seed,
        "wall_time_s": round(wall, 3),
    }
    return ExperimentReport(cells=cells, metadata=metadata)


def sensitivity_ratio(report: ExperimentReport, estimator: str, bandwidth: str, c_gammas) -> float:
    """max / min mean error across ``c_gammas`` in one bandwidth column."""
    errors = []
    for c in c_gammas:
        cell = report.get(estimator, c, bandwidth)
        if cell is None:
            raise InputError(f"No cell for {estimator}, c_gamma={c}, bandwidth={bandwidth}")
        errors.append(cell.mean_error_x100)
    return max(errors) / min(errors)


def _fmt(value: float) -> str:
    return f"{value:.9g}"


def report_to_csv(report: ExperimentReport, stream, include_timing: bool = False):
    writer = csv.writer(stream, lineterminator="\n")
    header = ["estimator", "c_gamma", "bandwidth", "mean_error_x100", "stderr", "reps"]
    if include_timing:
        header.append("seconds")
    writer.writerow(header)
    for (est, c, bw), cell in report.cells.items():
        c_text = "" if c is None else _fmt(c)
        if cell is None:
            row = [est, c_text, bw, "", "", "0"]
            if include_timing:
                row.append("")
        else:
            row = [est, c_text, bw, _fmt(cell.mean_error_x100), _fmt(cell.mc_stderr), str(cell.replications)]
            if include_timing:
                row.append(f"{cell.seconds:.3f}")
        writer.writerow(row)


def format_table(report: ExperimentReport) -> str:
    """Aligned text table: one row per estimator and c_gamma, one column per bandwidth."""
    columns: list[str] = []
    rows: dict = {}
    for (est, c, bw), cell in report.cells.items():
        if bw not in columns:
            columns.append(bw)
        label = ESTIMATOR_LABELS.get(est, est) + ("" if c is None else f"  c={c:g}")
        rows.setdefault(label, {})[bw] = cell

    width = max(16, *(len(c) + 2 for c in columns))
    label_width = max(len(label) for label in rows) + 2
    lines = [" " * label_width + "".join(c.rjust(width) for c in columns)]
    for label, cells in rows.items():
        parts = []
        for col in columns:
            cell = cells.get(col)
            text = "-" if cell is None else f"{cell.mean_error_x100:.3f} ({cell.mc_stderr:.3f})"
            parts.append(text.rjust(width))
        lines.append(label.ljust(label_width) + "".join(parts))
    return "\n".join(lines)


# ---- rate experiment ------------------------------------------------ #

@dataclass
class RateExperimentResult:
    points: list[tuple[int, float]]
    fit: RateFit


def _rate_replication(model, ns, step, bandwidth, seed, index) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    wanted = set(ns)
    errors: dict = {}
    cfg = EstimatorConfig(x=model.x_star, step=step, bandwidth=bandwidth)

    def checkpoint(state):
        if state.n in wanted and state.n not in errors:
            errors[state.n] = mse(state.z, model, model.x_star)

    run_stream(stream_pairs(model, max(ns), rng), cfg, on_step=checkpoint)
    return errors


def rate_experiment(
    ns,
    replications: int,
    gamma: float = 0.9,
    h: float = 0.3,
    d: int = 100,
    seed: int = 0,
    c_gamma: float = 1.0,
    c_h: float = 1.0,
    x: float = 0.39,
    workers: int = 1,
) -> RateExperimentResult:
    """Median Robbins-Monro error at each checkpoint n, with a log-log fit."""
    ns = sorted(int(n) for n in ns)
    if len(ns) < 4 or ns[0] < 2:
        raise InputError("rate_experiment needs at least 4 checkpoints, each >= 2")
    if replications < 1:
        raise InputError(f"replications must be at least 1, got {replications}")
    model = BrownianModel(d=d, x_star=x)
    step = Schedule.decaying(c_gamma, gamma)
    bandwidth = Schedule.decaying(c_h, h)
    log(f"Rate experiment: checkpoints {ns}, {replications} replications")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        runs = list(pool.map(
            partial(_rate_replication, model, ns, step, bandwidth, seed),
            range(replications),
        ))
    points = [(n, float(np.median([r[n] for r in runs]))) for n in ns]
    return RateExperimentResult(points=points, fit=rate_slope(points))


# ---- CLT experiment ------------------------------------------------- #

@dataclass
class CltResult:
    empirical_cov: np.ndarray
    theoretical_cov: np.ndarray
    trace_ratio: float
    verdict: ScheduleVerdict
    pair: CovariancePair


def _clt_replication(model, n, cfg, seed, index) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    result = run_stream(stream_pairs(model, n, rng), cfg)
    return result.z_bar


def clt_experiment(
    d: int,
    n: int,
    replications: int,
    gamma: float,
    h: float,
    seed: int,
    c_gamma: float = 1.0,
    c_h: float = 1.0,
    x: float = 0.39,
    kernel: str = "gaussian",
    beta: float = 1.0,
    mc_samples: int = 20000,
    workers: int = 1,
    include_h_factor: bool = True,
) -> CltResult:
    """Compare the spread of sqrt(n h_n) (Zbar_n - m) with the sandwich covariance.

    The stream is drawn with ``covariate="conditional"`` so the conditional
    median is exact at small d.
    """
    if replications < 2:
        raise InputError(f"clt_experiment needs at least 2 replications, got {replications}")
    if not (2 <= d <= 5):
        raise InputError(f"clt_experiment supports 2 <= d <= 5, got {d}")
    if n < 2:
        raise InputError(f"n must be at least 2, got {n}")
    verdict = validate_schedule(gamma, h, beta)
    if not verdict.clt:
        raise PreconditionRefused(
            f"Schedule gamma={gamma:g}, h={h:g} does not satisfy the CLT conditions",
            verdict.violated,
        )

    k = create_kernel(kernel)
    model = BrownianModel(d=d, x_star=x, covariate="conditional")
    m = median_curve(model, x)
    bandwidth = Schedule.decaying(c_h, h)
    cfg = EstimatorConfig(x=x, step=Schedule.decaying(c_gamma, gamma), bandwidth=bandwidth, kernel=k)

    log(f"CLT experiment: d={d}, n={n}, {replications} replications")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        z_bars = list(pool.map(partial(_clt_replication, model, n, cfg, seed), range(replications)))
    scaled = math.sqrt(n * bandwidth.value(n)) * (np.asarray(z_bars) - m)
    empirical = np.atleast_2d(np.cov(scaled, rowvar=False))

    mc_seed = int(np.random.SeedSequence([seed, replications]).generate_state(1)[0])
    pair = estimate_sigma_gamma(make_conditional_sampler(model, x), m, marginal_density(x), k, mc_samples, mc_seed)
    theoretical = sandwich_covariance(pair, h)
    if not include_h_factor:
        theoretical = theoretical * (1.0 + h)
    ratio = float(np.trace(empirical) / np.trace(theoretical))
    return CltResult(empirical, theoretical, ratio, verdict, pair)
