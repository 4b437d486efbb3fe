"""Command-line surface: CSV ingestion and one subcommand per workload.

Exit codes: 0 success, 1 input error, 2 refused precondition.
"""

import argparse
import csv
import os
import re
import sys
from dataclasses import replace

import numpy as np

from src.asymptotics import validate_schedule
from src.bench_harness import (
    clt_experiment,
    format_table,
    load_experiment_config,
    rate_experiment,
    report_to_csv,
    run_table_experiment,
)
from src.config import ROOT_DIR, load_config, section
from src.errors import InputError, PreconditionRefused
from src.hilbert_core import KERNELS, Schedule, create_kernel
from src.log import WarningCounter, configure, log
from src.recursive_estimator import EstimatorConfig, multi_start_run, multi_target_run, run_stream
from src.simulation import BrownianModel, stream_pairs
from src.static_baseline import static_estimate

MAX_BAD_FRACTION = 0.10
DEFAULT_QUANTILES = (0.25, 0.5, 0.75, 0.9)


def _fmt(value: float) -> str:
    return f"{value:.9g}"


# ---- ingestion -------------------------------------------------------- #

class CsvStream:
    """Records ``(x, y)`` read lazily from a CSV with header ``x,y1,...,yd``.

    A file path can be iterated several times (each pass re-reads the file);
    standard input (``"-"``) only once. Malformed rows are skipped and counted
    per pass; more than 10% malformed rows is fatal.
    """

    def __init__(self, path: str = "-"):
        self.path = path
        self.skipped = 0
        self.rows = 0
        self.passes = 0
        self._stdin_used = False
        if self.replayable:
            with open(path, newline="", encoding="utf-8") as f:
                self.dim = self._parse_header(next(csv.reader(f), None))
        else:
            self._reader = csv.reader(sys.stdin)
            self.dim = self._parse_header(next(self._reader, None))

    @property
    def replayable(self) -> bool:
        return self.path != "-"

    def _parse_header(self, header) -> int:
        if not header:
            raise InputError(f"{self.name}: missing header (expected x,y1,...,yd)")
        names = [h.strip() for h in header]
        d = len(names) - 1
        if d < 1 or names[0] != "x" or names[1:] != [f"y{j}" for j in range(1, d + 1)]:
            raise InputError(f"{self.name}: invalid header '{','.join(names)}' (expected x,y1,...,yd)")
        return d

    @property
    def name(self) -> str:
        return "stdin" if self.path == "-" else self.path

    def _rows(self):
        if self.replayable:
            with open(self.path, newline="", encoding="utf-8") as f:
                reader = csv.reader(f)
                next(reader, None)
                yield from reader
        else:
            if self._stdin_used:
                raise InputError("Standard input can only be read once; pass a file path to replay")
            self._stdin_used = True
            yield from self._reader

    def __iter__(self):
        self.passes += 1
        self.skipped = 0
        self.rows = 0
        warnings = WarningCounter("rows")
        total = 0
        for lineno, row in enumerate(self._rows(), start=2):
            if not row:
                continue
            total += 1
            if len(row) != self.dim + 1:
                self.skipped += 1
                warnings.warn(f"line {lineno}: {len(row)} fields, expected {self.dim + 1}")
                continue
            try:
                values = np.array([float(v) for v in row], dtype=np.float64)
            except ValueError:
                self.skipped += 1
                warnings.warn(f"line {lineno}: not numeric")
                continue
            if not np.all(np.isfinite(values)):
                self.skipped += 1
                warnings.warn(f"line {lineno}: non-finite value")
                continue
            self.rows += 1
            yield float(values[0]), values[1:]
        warnings.summary()
        if total and self.skipped > MAX_BAD_FRACTION * total:
            raise InputError(f"{self.name}: {self.skipped} of {total} rows are malformed (more than 10%)")


def ingest_stream(path: str = "-") -> CsvStream:
    return CsvStream(path)


def _load_arrays(stream: CsvStream) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = [], []
    for x, y in stream:
        xs.append(x)
        ys.append(y)
    if not xs:
        raise InputError(f"{stream.name}: no usable records")
    return np.asarray(xs), np.vstack(ys)


# ---- output ----------------------------------------------------------- #

class _Output:
    """Writable text target: a path, or stdout for ``"-"``/None."""

    def __init__(self, path: str | None):
        self.path = path if path and path != "-" else None

    def __enter__(self):
        self._f = open(self.path, "w", newline="", encoding="utf-8") if self.path else sys.stdout
        return self._f

    def __exit__(self, *exc):
        if self.path:
            self._f.close()
        else:
            sys.stdout.flush()


def _write_curves(path: str | None, rows: list[list[str]], header: list[str]):
    with _Output(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_meta(meta_path: str | None, output: str | None, meta: dict):
    if meta_path is None and output and output != "-":
        meta_path = output + ".meta"
    lines = [f"{k}={v}" for k, v in meta.items()]
    if meta_path:
        with open(meta_path, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")
    else:
        for line in lines:
            log(line)


# ---- helpers ---------------------------------------------------------- #

def _pick(value, cfg: dict, key: str, default):
    if value is not None:
        return value
    return cfg.get(key, default)


def _estimator_config(args, cfg: dict, x: float | None) -> EstimatorConfig:
    kernel = create_kernel(_pick(args.kernel, cfg, "kernel", "gaussian"))
    step = Schedule.decaying(_pick(args.c_gamma, cfg, "c_gamma", 1.0), _pick(args.gamma, cfg, "gamma", 0.9))
    if args.fixed_h is not None:
        bandwidth = Schedule.fixed(args.fixed_h)
    elif args.h is None and args.c_h is None and cfg.get("fixed_h") is not None:
        bandwidth = Schedule.fixed(cfg["fixed_h"])
    else:
        bandwidth = Schedule.decaying(_pick(args.c_h, cfg, "c_h", 1.0), _pick(args.h, cfg, "h", 0.3))
    mode = "unconditional" if getattr(args, "unconditional", False) else "conditional"
    return EstimatorConfig(
        x=x if mode == "conditional" else None,
        step=step,
        bandwidth=bandwidth,
        kernel=kernel,
        mode=mode,
        burn_in=_pick(args.burn_in, cfg, "burn_in", 0),
        init=_pick(args.init, cfg, "init", "first_record"),
        seed=_pick(args.seed, cfg, "seed", 0),
    )


def _parse_floats(text: str, flag: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"{flag}: expected comma-separated numbers, got '{text}'") from None
    if not values:
        raise InputError(f"{flag}: no values given")
    return values


# ---- subcommands ------------------------------------------------------ #

def cmd_simulate(args, config: dict) -> int:
    cfg = section(config, "simulate")
    n = _pick(args.n, cfg, "n", 500)
    d = _pick(args.d, cfg, "d", 100)
    seed = _pick(args.seed, cfg, "seed", 0)
    if n < 1:
        raise InputError(f"--n must be positive, got {n}")
    model = BrownianModel(d=d, covariate=args.covariate)
    rng = np.random.default_rng(seed)
    with _Output(args.output) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["x"] + [f"y{j}" for j in range(1, d + 1)])
        for x, y in stream_pairs(model, n, rng):
            writer.writerow([_fmt(x)] + [_fmt(v) for v in y])
    log(f"Simulated {n} records (d={d}, seed={seed})")
    return 0


def cmd_estimate(args, config: dict) -> int:
    cfg = section(config, "estimator")
    if not args.unconditional and args.x is None:
        raise InputError("--x is required in conditional mode (or pass --unconditional)")
    est_cfg = _estimator_config(args, cfg, args.x)
    restarts = _pick(args.restarts, cfg, "restarts", 1)
    which = _pick(args.estimator, cfg, "estimator", "averaged")
    stream = ingest_stream(args.input)

    if restarts > 1:
        if not stream.replayable:
            raise InputError("--restarts > 1 replays the data; pass a file path instead of stdin")
        result = multi_start_run(stream, est_cfg, restarts, est_cfg.seed)
        estimate = result.select(which)
        n = result.runs[0].n
    else:
        result = run_stream(stream, est_cfg)
        estimate = result.z_bar if which == "averaged" else result.z
        n = result.n

    _write_curves(args.output, [[_fmt(v) for v in estimate]], [f"t{j}" for j in range(1, estimate.size + 1)])
    _write_meta(args.meta, args.output, {
        "n": n,
        "x": "" if args.x is None else _fmt(args.x),
        "gamma": est_cfg.step.label,
        "h": est_cfg.bandwidth.label,
        "kernel": est_cfg.kernel.name,
        "estimator": which,
        "restarts": restarts,
        "seed": est_cfg.seed,
        "skipped_records": stream.skipped,
    })
    return 0


def cmd_baseline(args, config: dict) -> int:
    cfg = section(config, "baseline")
    if args.x is None:
        raise InputError("--x is required")
    h = _pick(args.h, cfg, "h", 0.15)
    kernel = create_kernel(_pick(args.kernel, cfg, "kernel", "gaussian"))
    stream = ingest_stream(args.input)
    xs, ys = _load_arrays(stream)
    res = static_estimate(
        args.x, xs, ys, h, kernel,
        tol=_pick(args.tol, cfg, "tol", 1e-8),
        max_iter=_pick(args.max_iter, cfg, "max_iter", 500),
    )
    if not res.converged:
        log(f"Weiszfeld stopped after {res.iterations} iterations without meeting the tolerance")
    _write_curves(args.output, [[_fmt(v) for v in res.median]], [f"t{j}" for j in range(1, res.median.size + 1)])
    _write_meta(args.meta, args.output, {
        "n": len(xs),
        "x": _fmt(args.x),
        "h": _fmt(h),
        "kernel": kernel.name,
        "iterations": res.iterations,
        "converged": str(res.converged).lower(),
        "objective": _fmt(res.objective),
        "skipped_records": stream.skipped,
    })
    return 0


def cmd_profile(args, config: dict) -> int:
    cfg = section(config, "profile")
    stream = ingest_stream(args.input)
    if args.x_values:
        targets = _parse_floats(args.x_values, "--x-values")
        labels = [""] * len(targets)
    else:
        if not stream.replayable:
            raise InputError("Quantile targets need a first pass over the data; pass a file path or --x-values")
        levels = _parse_floats(args.quantiles, "--quantiles") if args.quantiles else list(
            cfg.get("quantiles", DEFAULT_QUANTILES)
        )
        if any(not 0.0 <= q <= 1.0 for q in levels):
            raise InputError("--quantiles must lie in [0, 1]")
        xs = np.fromiter((x for x, _ in stream), dtype=np.float64)
        if xs.size == 0:
            raise InputError(f"{stream.name}: no usable records")
        targets = [float(v) for v in np.quantile(xs, levels)]
        labels = [_fmt(q) for q in levels]
        log("Quantile targets: " + ", ".join(f"q{q}={_fmt(t)}" for q, t in zip(labels, targets)))

    base = _estimator_config(args, cfg, targets[0])
    which = _pick(args.estimator, cfg, "estimator", "averaged")
    restarts = _pick(args.restarts, cfg, "restarts", 1)
    if restarts > 1:
        if not stream.replayable:
            raise InputError("--restarts > 1 replays the data; pass a file path instead of stdin")
        curves = [multi_start_run(stream, replace(base, x=t), restarts, base.seed).select(which) for t in targets]
    else:
        results = multi_target_run(stream, base, targets)
        curves = [r.z_bar if which == "averaged" else r.z for r in results]

    header = ["quantile", "x"] + [f"t{j}" for j in range(1, stream.dim + 1)]
    rows = [[label, _fmt(t)] + [_fmt(v) for v in curve] for label, t, curve in zip(labels, targets, curves)]
    _write_curves(args.output, rows, header)
    log(f"Profile: {len(targets)} targets, {stream.passes} pass(es) over the data")
    return 0


def cmd_benchmark(args, config: dict) -> int:
    cfg = section(config, "benchmark")
    path = args.experiment
    if path is None and cfg.get("experiment"):
        path = os.path.join(ROOT_DIR, cfg["experiment"])
    if not path:
        raise InputError("--experiment is required (key=value experiment file)")
    exp = load_experiment_config(path)
    workers = _pick(args.workers, cfg, "workers", None)
    if workers is not None:
        exp = replace(exp, workers=workers)
    report = run_table_experiment(exp)
    if args.output:
        with _Output(args.output) as f:
            report_to_csv(report, f, include_timing=args.timing)
    print(format_table(report))
    return 0


def cmd_clt_check(args, config: dict) -> int:
    cfg = section(config, "clt")
    result = clt_experiment(
        d=_pick(args.d, cfg, "d", 2),
        n=_pick(args.n, cfg, "n", 20000),
        replications=_pick(args.replications, cfg, "replications", 200),
        gamma=_pick(args.gamma, cfg, "gamma", 0.8),
        h=_pick(args.h, cfg, "h", 0.4),
        seed=_pick(args.seed, cfg, "seed", 0),
        c_gamma=_pick(args.c_gamma, cfg, "c_gamma", 1.0),
        c_h=_pick(args.c_h, cfg, "c_h", 1.0),
        beta=_pick(args.beta, cfg, "beta", 1.0),
        mc_samples=_pick(args.mc_samples, cfg, "mc_samples", 20000),
        workers=_pick(args.workers, cfg, "workers", 1),
    )
    np.set_printoptions(precision=6, suppress=True)
    print("empirical covariance:")
    print(result.empirical_cov)
    print("theoretical covariance:")
    print(result.theoretical_cov)
    print(f"trace_ratio={_fmt(result.trace_ratio)}")
    return 0


def cmd_validate_schedule(args, config: dict) -> int:
    verdict = validate_schedule(args.gamma, args.h, args.beta)
    print(verdict.summary())
    for name in verdict.violated:
        print(f"violated: {name}")
    return 0


def cmd_rate_check(args, config: dict) -> int:
    cfg = section(config, "rate")
    ns = [int(v) for v in _parse_floats(args.ns or ",".join(str(v) for v in cfg.get("ns", [500, 2000, 8000, 32000])), "--ns")]
    result = rate_experiment(
        ns,
        replications=_pick(args.replications, cfg, "replications", 50),
        gamma=_pick(args.gamma, cfg, "gamma", 0.9),
        h=_pick(args.h, cfg, "h", 0.3),
        d=_pick(args.d, cfg, "d", 100),
        seed=_pick(args.seed, cfg, "seed", 0),
        workers=_pick(args.workers, cfg, "workers", 1),
    )
    print("n,median_mse")
    for n, value in result.points:
        print(f"{n},{_fmt(value)}")
    print(f"slope={_fmt(result.fit.slope)} intercept={_fmt(result.fit.intercept)} r2={_fmt(result.fit.r2)}")
    return 0


# ---- parser ----------------------------------------------------------- #

# comma-separated number lists; argparse reads "-0.5,0" as an option
LIST_FLAGS = ("--x-values", "--quantiles", "--ns")
_NEGATIVE_LEAD = re.compile(r"-[0-9.]")


def _fold_list_values(argv: list[str]) -> list[str]:
    """Rewrite ``--flag -0.5,0`` as ``--flag=-0.5,0`` for the list flags."""
    out: list[str] = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in LIST_FLAGS and i + 1 < len(argv) and _NEGATIVE_LEAD.match(argv[i + 1]):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


class _UsageError(Exception):
    def __init__(self, parser: argparse.ArgumentParser, message: str):
        super().__init__(message)
        self.parser = parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(self, message)


def _add_estimator_flags(p: argparse.ArgumentParser):
    p.add_argument("input", nargs="?", default="-", help="CSV file with header x,y1,...,yd ('-' = stdin)")
    p.add_argument("--gamma", type=float, help="step exponent")
    p.add_argument("--c-gamma", type=float, help="step prefactor")
    p.add_argument("--h", type=float, help="bandwidth exponent")
    p.add_argument("--c-h", type=float, help="bandwidth prefactor")
    p.add_argument("--fixed-h", type=float, help="fixed bandwidth (overrides --h/--c-h)")
    p.add_argument("--kernel", choices=list(KERNELS))
    p.add_argument("--burn-in", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--init", choices=["first_record", "random_record"])
    p.add_argument("--estimator", choices=["averaged", "rm"])
    p.add_argument("--output", help="output CSV path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="condmedian", description="Online conditional geometric median estimation")
    parser.add_argument("--config", help="path to config.json")
    parser.add_argument("--log-file", help="append log lines to this file")
    parser.add_argument("--quiet", action="store_true", help="no log output on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="emit a simulated Brownian dataset as CSV")
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--covariate", choices=["grid_mean", "conditional"], default="grid_mean")
    p.add_argument("--output")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("estimate", help="one-pass recursive estimate")
    _add_estimator_flags(p)
    p.add_argument("--x", type=float, help="target covariate")
    p.add_argument("--unconditional", action="store_true", help="ignore covariates (plain geometric median)")
    p.add_argument("--meta", help="metadata sidecar path (default <output>.meta)")
    p.set_defaults(handler=cmd_estimate)

    p = sub.add_parser("baseline", help="static kernel-weighted Weiszfeld estimate")
    p.add_argument("input", nargs="?", default="-")
    p.add_argument("--x", type=float)
    p.add_argument("--h", type=float, help="fixed bandwidth")
    p.add_argument("--kernel", choices=list(KERNELS))
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--output")
    p.add_argument("--meta")
    p.set_defaults(handler=cmd_baseline)

    p = sub.add_parser("profile", help="conditional median profiles at several covariate values")
    _add_estimator_flags(p)
    p.add_argument("--quantiles", help="covariate quantile levels, e.g. 0.25,0.5,0.75,0.9")
    p.add_argument("--x-values", help="explicit covariate targets (skips the quantile pass)")
    p.set_defaults(handler=cmd_profile)

    p = sub.add_parser("benchmark", help="Monte Carlo table experiment")
    p.add_argument("--experiment", help="key=value experiment file")
    p.add_argument("--output", help="report CSV path")
    p.add_argument("--workers", type=int)
    p.add_argument("--timing", action="store_true", help="add an informational seconds column")
    p.set_defaults(handler=cmd_benchmark)

    p = sub.add_parser("clt-check", help="Monte Carlo check of the averaged estimator's limiting covariance")
    for flag, kind in (("--d", int), ("--n", int), ("--replications", int), ("--gamma", float),
                       ("--h", float), ("--c-gamma", float), ("--c-h", float), ("--beta", float),
                       ("--mc-samples", int), ("--seed", int), ("--workers", int)):
        p.add_argument(flag, type=kind)
    p.set_defaults(handler=cmd_clt_check)

    p = sub.add_parser("validate-schedule", help="check step/bandwidth exponents")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.set_defaults(handler=cmd_validate_schedule)

    p = sub.add_parser("rate-check", help="log-log slope of the Robbins-Monro error")
    p.add_argument("--ns", help="checkpoints, e.g. 500,2000,8000,32000")
    for flag, kind in (("--replications", int), ("--gamma", float), ("--h", float),
                       ("--d", int), ("--seed", int), ("--workers", int)):
        p.add_argument(flag, type=kind)
    p.set_defaults(handler=cmd_rate_check)

    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    try:
        args = parser.parse_args(_fold_list_values(list(argv)))
    except _UsageError as exc:
        exc.parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        # --help
        return int(exc.code or 0)

    try:
        config = load_config(args.config)
        log_cfg = section(config, "logging")
        configure(args.log_file or log_cfg.get("file"), args.quiet or log_cfg.get("quiet", False))
        return args.handler(args, config)
    except PreconditionRefused as exc:
        log(f"Refused: {exc}")
        for name in exc.violated:
            log(f"  violated: {name}")
        return 2
    except InputError as exc:
        log(f"Error: {exc}")
        return 1
    except (OSError, ValueError) as exc:
        log(f"Error: {exc}")
        return 1


def main() -> int:
    return run_cli(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
