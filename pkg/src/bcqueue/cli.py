"""Command-line front end: ``solve``, ``sweep``, ``simulate``, ``validate``.

Exit codes: 0 success, 1 solver error, 2 unstable input, 3 validation
tolerance breach, 64 usage error.

Every subcommand accepts ``--config FILE``: flat ``key = value`` lines whose
keys are the long flag names without the leading dashes (``#`` starts a
comment). Flags given on the command line win over the file.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .exceptions import BCQueueError, ParameterError, UnstableModelError
from .linalg import spectral_radius
from .matgeom import DEFAULT_MAX_ITER, DEFAULT_TOL, boundary_vector, solve_rate_matrix
from .measures import DEFAULT_TAIL_EPS, PerformanceReport, evaluate
from .model import QueueParameters, build_block_matrices, stability
from .oracle import mg1_erlang_oracle, truncated_measures
from .sim import SimConfig, simulate, spawn_seeds

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_UNSTABLE = 2
EXIT_VALIDATION = 3
EXIT_USAGE = 64

THREADS_ENV = "BCQUEUE_THREADS"

CSV_HEADER = (
    "swept_value,arrival_rate,build_rate,generate_rate,block_size,is_stable,"
    "EJ,EI,ET_closed,ET_series,littles_residual,spectral_radius,iterations,error"
)

SWEEPABLE = {
    "build-rate": "build_rate",
    "generate-rate": "generate_rate",
    "arrival-rate": "arrival_rate",
    "block-size": "max_block_size",
}

# validation tolerances
TOL_TRUNCATED = 1e-6
TOL_ORACLE_B1 = 1e-9
SIM_HALF_WIDTHS = 3.0
TOL_LITTLE = 1e-8


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt(x):
    """Fixed 12-significant-digit rendering used in every CSV cell."""
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return f"{x:.12g}"


def parse_values(text, integer=False):
    """``start:stop:step`` (inclusive) or a comma-separated list."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"range must be start:stop:step, got {text!r}")
        start, stop, step = (float(x) for x in parts)
        if step <= 0:
            raise UsageError("range step must be > 0")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        values = [round(start + k * step, 12) for k in range(count)]
    else:
        values = [float(x) for x in text.split(",") if x.strip()]
    if integer:
        if any(v != int(v) for v in values):
            raise UsageError("block-size values must be integers")
        values = [int(v) for v in values]
    if not values:
        raise UsageError("no sweep values given")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise UsageError("sweep values must be strictly increasing")
    return values


def read_config(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = value
    return out


# ---------------------------------------------------------------- arguments

_PARAM_FLAGS = [
    ("arrival-rate", float, "transaction arrival rate"),
    ("build-rate", float, "blockchain-building rate (stage that empties the block)"),
    ("generate-rate", float, "block-generation rate (stage that consumes the queue)"),
    ("block-size", int, "maximum number of transactions per block"),
]


def _add(parser, flag, typ, help_, **kw):
    parser.add_argument(f"--{flag}", dest=flag.replace("-", "_"), type=typ, default=None,
                        help=help_, **kw)


def _common(parser, with_params=True):
    parser.add_argument("--config", default=None, help="key = value file with flag defaults")
    if with_params:
        for flag, typ, help_ in _PARAM_FLAGS:
            _add(parser, flag, typ, help_)


def _solver_flags(parser):
    _add(parser, "tol", float, f"rate-matrix step tolerance (default {DEFAULT_TOL:g})")
    _add(parser, "max-iter", int, f"rate-matrix iteration cap (default {DEFAULT_MAX_ITER})")
    _add(parser, "tail-eps", float, f"series truncation bound (default {DEFAULT_TAIL_EPS:g})")


def _sim_flags(parser):
    _add(parser, "seed", int, "64-bit seed (default 1)")
    _add(parser, "horizon", int, "confirmations to simulate, warm-up included")
    _add(parser, "warmup", int, "confirmations discarded before measuring (default 10%% of horizon)")
    _add(parser, "batches", int, "number of batch means (default 32)")


def build_parser():
    parser = _Parser(prog="bcqueue", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    parser.subcommands = sub.choices

    p = sub.add_parser("solve", help="solve one parameter point, print a JSON report")
    _common(p)
    _solver_flags(p)

    p = sub.add_parser("sweep", help="solve a parameter grid, print CSV")
    _common(p)
    _solver_flags(p)
    _add(p, "sweep", str, "swept parameter", choices=sorted(SWEEPABLE))
    _add(p, "values", str, "start:stop:step (inclusive) or comma list")
    _add(p, "output", str, "CSV destination (default stdout)")
    _add(p, "jobs", int, f"worker threads (default ${THREADS_ENV} or 1)")

    p = sub.add_parser("simulate", help="run the discrete-event simulator, print JSON")
    _common(p)
    _sim_flags(p)
    _add(p, "replications", int, "independent replications spawned from --seed (default 1)")
    _add(p, "jobs", int, f"worker threads (default ${THREADS_ENV} or 1)")

    p = sub.add_parser("validate", help="compare analytic, truncated, simulated and b=1 values")
    _common(p)
    _solver_flags(p)
    _sim_flags(p)
    _add(p, "level-cap", int, "truncation level for the direct oracle (default 200)")
    p.add_argument("--no-sim", action="store_true", default=None, help="skip the simulator")
    p.add_argument("--paper-literal-r", action="store_true", default=None,
                   help="solve R with exponent b instead of b+1 (diagnostic; expected to fail)")
    return parser


_TYPES = {flag: typ for flag, typ, _ in _PARAM_FLAGS}
_TYPES.update({
    "tol": float, "max-iter": int, "tail-eps": float, "seed": int, "horizon": int,
    "warmup": int, "batches": int, "level-cap": int, "replications": int, "jobs": int,
    "sweep": str, "values": str, "output": str,
})
_BOOL_KEYS = ("no-sim", "paper-literal-r")


def _truthy(text):
    return text.strip().lower() in ("1", "true", "yes", "on")


def merge_config(args, parser):
    if not args.config:
        return args
    try:
        cfg = read_config(args.config)
    except OSError as exc:
        parser.error(f"cannot read config: {exc}")
    except UsageError as exc:
        parser.error(str(exc))
    for key, raw in cfg.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest) or dest in ("config", "command"):
            parser.error(f"unknown config key {key!r} for '{args.command}'")
        if getattr(args, dest) is not None:
            continue
        try:
            value = _truthy(raw) if key in _BOOL_KEYS else _TYPES[key](raw)
        except (KeyError, ValueError):
            parser.error(f"bad value {raw!r} for config key {key!r}")
        if key == "sweep" and value not in SWEEPABLE:
            parser.error(f"sweep must be one of {sorted(SWEEPABLE)}")
        setattr(args, dest, value)
    return args


def params_from_args(args, parser, skip=None):
    missing = [f"--{flag}" for flag, _, _ in _PARAM_FLAGS
               if getattr(args, flag.replace("-", "_")) is None and flag != skip]
    if missing:
        parser.error("missing required parameter(s): " + ", ".join(missing))
    values = {
        "arrival_rate": args.arrival_rate if args.arrival_rate is not None else 1.0,
        "build_rate": args.build_rate if args.build_rate is not None else 1.0,
        "generate_rate": args.generate_rate if args.generate_rate is not None else 1.0,
        "max_block_size": args.block_size if args.block_size is not None else 1,
    }
    try:
        return QueueParameters(**values)
    except ParameterError as exc:
        parser.error(str(exc))


def _solver_kw(args):
    return {
        "tol": args.tol if args.tol is not None else DEFAULT_TOL,
        "max_iter": args.max_iter if args.max_iter is not None else DEFAULT_MAX_ITER,
        "tail_eps": args.tail_eps if args.tail_eps is not None else DEFAULT_TAIL_EPS,
    }


def _jobs(args):
    if getattr(args, "jobs", None):
        return max(1, args.jobs)
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _dump(obj, out):
    json.dump(obj, out, indent=2, sort_keys=False, allow_nan=True)
    out.write("\n")


# ------------------------------------------------------------------- solve


def solve_report(params, **kw) -> dict:
    report = evaluate(params, **kw)
    d = report.to_dict()
    d["is_stable"] = True
    return d


def cmd_solve(args, parser, out):
    params = params_from_args(args, parser)
    st = stability(params)
    if not st.is_stable:
        _dump({"params": params.to_dict(), "is_stable": False, "stability": st.to_dict()}, out)
        return EXIT_UNSTABLE
    try:
        d = solve_report(params, **_solver_kw(args))
    except BCQueueError as exc:
        _dump({"params": params.to_dict(), "is_stable": True, "error": str(exc)}, out)
        print(f"bcqueue: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    _dump(d, out)
    return EXIT_OK


# ------------------------------------------------------------------- sweep


@dataclass(frozen=True)
class SweepSpec:
    swept_parameter: str
    values: tuple
    fixed: QueueParameters
    outputs: tuple = ("EJ", "EI", "ET_closed", "ET_series")

    def __post_init__(self):
        if self.swept_parameter not in SWEEPABLE.values():
            raise ParameterError(f"cannot sweep {self.swept_parameter!r}")
        if not self.values:
            raise ParameterError("sweep needs at least one value")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ParameterError("sweep values must be strictly increasing")

    def points(self):
        return [self.fixed.replace(**{self.swept_parameter: v}) for v in self.values]


def sweep_row(swept_value, params, solver_kw):
    """One CSV row (list of cells) for a grid point; failures land in ``error``."""
    st = stability(params)
    cells = [swept_value, params.arrival_rate, params.build_rate, params.generate_rate,
             params.b, st.is_stable]
    if not st.is_stable:
        return cells + [None] * 7 + ["unstable"], False
    try:
        r: PerformanceReport = evaluate(params, **solver_kw)
    except BCQueueError as exc:
        return cells + [None] * 7 + [f"{type(exc).__name__}: {exc}".replace(",", ";")], True
    return cells + [r.mean_queue, r.mean_block, r.mean_confirmation_closed,
                    r.mean_confirmation_series, r.littles_residual, r.spectral_radius,
                    r.iterations, ""], False


def run_sweep(spec: SweepSpec, solver_kw=None, jobs=1):
    """Rows for every grid point in spec order, plus whether any point failed."""
    solver_kw = solver_kw or {}
    points = spec.points()

    def work(pair):
        return sweep_row(pair[0], pair[1], solver_kw)

    pairs = list(zip(spec.values, points))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, pairs))
    else:
        results = [work(p) for p in pairs]
    rows = [r for r, _ in results]
    return rows, any(failed for _, failed in results)


def write_csv(rows, out):
    out.write(CSV_HEADER + "\n")
    for row in rows:
        out.write(",".join(fmt(c) for c in row) + "\n")


def sweep_spec_from_args(args, parser):
    if args.sweep is None or args.values is None:
        parser.error("sweep needs --sweep and --values (flags or config)")
    field = SWEEPABLE[args.sweep]
    try:
        values = parse_values(args.values, integer=field == "max_block_size")
    except (UsageError, ValueError) as exc:
        parser.error(str(exc))
    fixed = params_from_args(args, parser, skip=args.sweep)
    try:
        spec = SweepSpec(field, tuple(values), fixed)
        spec.points()
    except ParameterError as exc:
        parser.error(str(exc))
    return spec


def cmd_sweep(args, parser, out):
    spec = sweep_spec_from_args(args, parser)
    rows, failed = run_sweep(spec, _solver_kw(args), jobs=_jobs(args))
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            write_csv(rows, fh)
    else:
        buf = io.StringIO(newline="\n")
        write_csv(rows, buf)
        out.write(buf.getvalue())
    return EXIT_SOLVER if failed else EXIT_OK


# ---------------------------------------------------------------- simulate


def _sim_config(args, params, default_horizon=1_120_000):
    horizon = args.horizon if args.horizon is not None else default_horizon
    return SimConfig(
        params=params,
        seed=args.seed if args.seed is not None else 1,
        horizon_events=horizon,
        warmup_events=args.warmup,
        batch_count=args.batches if args.batches is not None else 32,
    )


def cmd_simulate(args, parser, out):
    params = params_from_args(args, parser)
    try:
        config = _sim_config(args, params)
    except ParameterError as exc:
        parser.error(str(exc))
    reps = args.replications or 1
    if reps == 1:
        configs = [config]
    else:
        configs = [SimConfig(params, s, config.horizon_events, config.warmup_events,
                             config.batch_count) for s in spawn_seeds(config.seed, reps)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        jobs = _jobs(args)
        if jobs > 1 and reps > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(simulate, configs))
        else:
            results = [simulate(c) for c in configs]
    payload = {
        "params": params.to_dict(),
        "seed": config.seed,
        "horizon_events": config.horizon_events,
        "warmup_events": config.warmup_events,
        "batch_count": config.batch_count,
    }
    if reps == 1:
        payload.update(results[0].to_dict())
    else:
        payload["replications"] = [r.to_dict() for r in results]
        payload["unstable"] = results[0].unstable
    _dump(payload, out)
    return EXIT_OK


# ---------------------------------------------------------------- validate

_MEASURES = (("mean_queue", "EJ"), ("mean_block", "EI"), ("mean_confirmation", "ET"))


def _paper_literal_diagnostics(params, kw):
    matrices = build_block_matrices(params)
    # the literal limit is stochastic; resolve it finely enough to show that to 1e-12
    r, iterations, residual = solve_rate_matrix(matrices, tol=min(kw["tol"], 1e-14),
                                                max_iter=kw["max_iter"], exponent="literal")
    rows = r.sum(axis=1)
    diag = {
        "exponent": "literal",
        "iterations": iterations,
        "residual": residual,
        "spectral_radius": spectral_radius(r),
        "max_row_sum_deviation_from_1": float(np.max(np.abs(rows - 1.0))),
    }
    diag["stochastic"] = diag["max_row_sum_deviation_from_1"] <= 1e-12
    try:
        boundary_vector(matrices, r)
        diag["boundary_error"] = None
    except BCQueueError as exc:
        diag["boundary_error"] = str(exc)
    if diag["spectral_radius"] >= 1.0 - 1e-9:
        diag["failure"] = (f"exponent-b rate matrix has spectral radius {diag['spectral_radius']:.12g}; "
                           "no stationary distribution can be built from it")
    return diag


def validate(params, level_cap=200, sim_config=None, paper_literal=False, solver_kw=None):
    """Run every applicable route and return ``(report_dict, ok)``."""
    kw = {"tol": DEFAULT_TOL, "max_iter": DEFAULT_MAX_ITER, "tail_eps": DEFAULT_TAIL_EPS}
    kw.update(solver_kw or {})
    result = {"params": params.to_dict(), "stability": stability(params).to_dict()}
    analytic = None
    ok = True
    if paper_literal:
        diag = _paper_literal_diagnostics(params, kw)
        result["rate_matrix"] = diag
        result["failures"] = [diag.get("failure") or diag.get("boundary_error")
                              or "exponent-b route does not yield measures"]
        ok = False
    else:
        report = evaluate(params, **kw)
        analytic = {"mean_queue": report.mean_queue, "mean_block": report.mean_block,
                    "mean_confirmation": report.mean_confirmation_closed}
        result["rate_matrix"] = {"exponent": "corrected", "iterations": report.iterations,
                                 "residual": report.residual,
                                 "spectral_radius": report.spectral_radius}
        little_ok = report.littles_residual <= TOL_LITTLE * (1 + params.lam * report.mean_confirmation_closed)
        series_ok = report.series_gap <= 1e-8 + report.series_tail_bound
        result["checks"] = {
            "littles_residual": report.littles_residual,
            "littles_ok": little_ok,
            "series_closed_gap": report.series_gap,
            "series_tail_bound": report.series_tail_bound,
            "series_ok": series_ok,
        }
        ok = ok and little_ok and series_ok
    truncated = truncated_measures(params, level_cap)
    result["truncated_tail_mass"] = truncated.tail_mass
    oracle = mg1_erlang_oracle(params) if params.b == 1 else None
    sim = None
    if sim_config is not None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            sim = simulate(sim_config)
        result["simulation"] = {"seed": sim.seed_used, "confirmed_count": sim.confirmed_count}
    table = []
    for key, label in _MEASURES:
        row = {
            "measure": label,
            "analytic": analytic[key] if analytic else None,
            "truncated": getattr(truncated, key),
            "simulated": None,
            "simulated_half_width": None,
            "oracle_b1": getattr(oracle, key) if oracle else None,
        }
        exact = [v for v in (row["analytic"], row["truncated"], row["oracle_b1"]) if v is not None]
        row["max_discrepancy"] = max(exact) - min(exact)
        row_ok = analytic is not None
        if analytic is not None:
            row_ok = abs(row["analytic"] - row["truncated"]) <= TOL_TRUNCATED
            if oracle is not None:
                row_ok = row_ok and abs(row["analytic"] - row["oracle_b1"]) <= TOL_ORACLE_B1
        if sim is not None:
            est = {"mean_queue": sim.est_queue, "mean_block": sim.est_block,
                   "mean_confirmation": sim.est_confirmation}[key]
            row["simulated"] = est.value
            row["simulated_half_width"] = est.half_width
            if analytic is not None:
                row_ok = row_ok and est.covers(row["analytic"], SIM_HALF_WIDTHS)
        row["ok"] = bool(row_ok)
        ok = ok and row["ok"]
        table.append(row)
    result["table"] = table
    result["tolerances"] = {"analytic_vs_truncated": TOL_TRUNCATED,
                            "analytic_vs_oracle_b1": TOL_ORACLE_B1,
                            "simulated_half_widths": SIM_HALF_WIDTHS,
                            "littles_law": TOL_LITTLE}
    result["ok"] = bool(ok)
    return result, bool(ok)


def cmd_validate(args, parser, out):
    params = params_from_args(args, parser)
    if not stability(params).is_stable:
        _dump({"params": params.to_dict(), "is_stable": False,
               "stability": stability(params).to_dict()}, out)
        return EXIT_UNSTABLE
    sim_config = None
    if not args.no_sim:
        try:
            sim_config = _sim_config(args, params, default_horizon=220_000)
        except ParameterError as exc:
            parser.error(str(exc))
    try:
        result, ok = validate(
            params,
            level_cap=args.level_cap if args.level_cap is not None else 200,
            sim_config=sim_config,
            paper_literal=bool(args.paper_literal_r),
            solver_kw=_solver_kw(args),
        )
    except ParameterError as exc:
        parser.error(str(exc))
    except BCQueueError as exc:
        _dump({"params": params.to_dict(), "error": f"{type(exc).__name__}: {exc}"}, out)
        print(f"bcqueue: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    _dump(result, out)
    if not ok:
        bad = [r["measure"] for r in result["table"] if not r["ok"]]
        print(f"bcqueue: validation failed for {', '.join(bad) or 'diagnostics'}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
}


def main(argv=None, out=None):
    out = out if out is not None else sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    sub = parser.subcommands[args.command]
    args = merge_config(args, sub)
    return COMMANDS[args.command](args, sub, out)


if __name__ == "__main__":
    sys.exit(main())
