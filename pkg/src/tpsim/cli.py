"""Command-line front end: ``tpsim presets|plan|run|sweep|roofline``."""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import analysis
from .config import PRESETS, ArchConfig, load_config
from .errors import ConfigError, InfeasiblePlanError
from .kernel import make_operands, oracle_matmul
from .schedule import SELF_TIMED, TIME_TRIGGERED, dumps_schedule, plan_matmul, validate, wcet_bound
from .sim import DEFAULT_POLL_INTERVAL, dumps_trace, run, run_campaign

MODE_FLAGS = {"selftimed": SELF_TIMED, "timetriggered": TIME_TRIGGERED}
JITTER_FLAGS = {"uniform": "uniform", "worst": "constant-worst", "zero": "constant-zero"}

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


@dataclass
class ExperimentSpec:
    config: str
    n: int = 256
    runs: int = 100
    seed0: int = 0
    mode: str = SELF_TIMED
    jitter: Optional[str] = None
    poll_interval: int = DEFAULT_POLL_INTERVAL
    rows_per_batch: int = 4
    block_width: Optional[int] = None
    check_functional: bool = False
    workers: int = 1
    trace_path: Optional[str] = None

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.n < 1:
            raise ValueError("n must be >= 1")


@dataclass
class ExperimentOutcome:
    cfg: ArchConfig
    stats_row: dict
    run_rows: list[dict]
    problems: list[str]


class ExperimentFailed(Exception):
    pass


def resolve_config(spec: ExperimentSpec) -> ArchConfig:
    cfg = load_config(spec.config)
    if spec.jitter is not None:
        cfg = cfg.replace(dram=dataclasses.replace(cfg.dram, jitter_distribution=JITTER_FLAGS[spec.jitter]))
    return cfg


def run_experiment(spec: ExperimentSpec) -> ExperimentOutcome:
    """Plan, validate, bound and simulate one configuration."""
    cfg = resolve_config(spec)
    try:
        _, schedule = plan_matmul(cfg, spec.n, mode=spec.mode, block_width=spec.block_width,
                                  rows_per_batch=spec.rows_per_batch)
    except InfeasiblePlanError as exc:
        raise ExperimentFailed(str(exc)) from exc
    report = validate(schedule, cfg)
    if not report.ok:
        raise ExperimentFailed(f"schedule for {cfg.name} failed validation:\n{report}")
    bound = wcet_bound(schedule, cfg, spec.poll_interval)

    problems = []
    results = run_campaign(schedule, cfg, spec.runs, spec.seed0, poll_interval=spec.poll_interval,
                           workers=spec.workers)
    if spec.check_functional or spec.trace_path:
        a, b = make_operands(spec.n, cfg.element_bits, seed=spec.seed0)
        first = run(schedule, cfg, spec.seed0, poll_interval=spec.poll_interval,
                    trace=bool(spec.trace_path), operands=(a, b), check=False)
        if spec.trace_path:
            with open(spec.trace_path, "w") as fh:
                fh.write(dumps_trace(first))
        if spec.check_functional and not np.array_equal(first.c, oracle_matmul(a, b, cfg.acc_bits)):
            problems.append(f"{cfg.name}: simulated C differs from the reference product")

    violations = sum(r.total_cycles > bound for r in results)
    if violations:
        problems.append(f"{cfg.name}: {violations} run(s) exceeded the WCET bound {bound}")
    st = analysis.stats(results)
    stats_row = {
        "config": cfg.name,
        "n": spec.n,
        "mode": spec.mode,
        "jitter": cfg.dram.jitter_distribution,
        "runs": st.run_count,
        "seed_first": spec.seed0,
        "seed_last": spec.seed0 + spec.runs - 1,
        "median_cycles": st.median_cycles,
        "stddev_cycles": st.stddev_cycles,
        "min_cycles": st.min_cycles,
        "max_cycles": st.max_cycles,
        "wcet_bound": bound,
        "bound_violations": violations,
        "fmax_hz": cfg.fmax_hz,
        "median_seconds_at_fmax": analysis.to_wall_clock(st.median_cycles, cfg.fmax_hz),
        "dram_base_latency_cycles": cfg.dram.base_latency_cycles,
        "dram_bytes_per_cycle": cfg.dram.bytes_per_cycle,
        "dram_jitter_max_cycles": cfg.dram.jitter_max_cycles,
        "poll_interval": spec.poll_interval,
    }
    run_rows = [
        {"config": cfg.name, "n": spec.n, "mode": spec.mode, "seed": r.seed,
         "total_cycles": r.total_cycles, "dram_accesses": r.dram_access_count, "wcet_bound": bound}
        for r in results
    ]
    return ExperimentOutcome(cfg, stats_row, run_rows, problems)


@contextlib.contextmanager
def _output(path: Optional[str]):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _spec_from_args(args, config: str) -> ExperimentSpec:
    return ExperimentSpec(
        config=config,
        n=args.n,
        runs=args.runs,
        seed0=args.seed,
        mode=MODE_FLAGS[args.mode],
        jitter=args.jitter,
        poll_interval=args.poll_interval,
        rows_per_batch=args.rows_per_batch,
        block_width=args.block_width,
        check_functional=args.check_functional,
        workers=args.workers,
        trace_path=getattr(args, "trace", None),
    )


def cmd_presets(args) -> int:
    with _output(args.out) as fh:
        analysis.write_csv(fh, analysis.PRESET_COLUMNS, analysis.preset_rows())
    return EXIT_OK


def cmd_plan(args) -> int:
    cfg = load_config(args.config or args.preset)
    try:
        plan, schedule = plan_matmul(cfg, args.n, mode=MODE_FLAGS[args.mode],
                                     block_width=args.block_width, rows_per_batch=args.rows_per_batch)
    except InfeasiblePlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    with _output(args.out) as fh:
        fh.write(f"# {cfg.name}: block_width={plan.block_width} passes={plan.passes} "
                 f"rows_per_batch={plan.rows_per_batch} double_buffer={plan.double_buffer}\n")
        fh.write(dumps_schedule(schedule))
    return EXIT_OK


def cmd_run(args) -> int:
    spec = _spec_from_args(args, args.config or args.preset)
    try:
        outcome = run_experiment(spec)
    except ExperimentFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if args.runs_out:
        with _output(args.runs_out) as fh:
            analysis.write_csv(fh, analysis.RUN_COLUMNS, outcome.run_rows)
    with _output(args.out) as fh:
        analysis.write_csv(fh, analysis.STATS_COLUMNS, [outcome.stats_row], analysis.STATS_HEADER)
    for problem in outcome.problems:
        print(f"error: {problem}", file=sys.stderr)
    return EXIT_FAIL if outcome.problems else EXIT_OK


def cmd_sweep(args) -> int:
    names = [p for p in args.presets.split(",") if p.strip()]
    if not names:
        print("error: empty preset list", file=sys.stderr)
        return EXIT_USAGE
    rows, problems = [], []
    for name in names:
        try:
            outcome = run_experiment(_spec_from_args(args, name.strip()))
        except ExperimentFailed as exc:
            print(f"error: sweep aborted at preset {name}: {exc}", file=sys.stderr)
            return EXIT_FAIL
        rows.append(outcome.stats_row)
        problems.extend(outcome.problems)
    with _output(args.out) as fh:
        analysis.write_csv(fh, analysis.STATS_COLUMNS, rows, analysis.STATS_HEADER)
    for problem in problems:
        print(f"error: {problem}", file=sys.stderr)
    return EXIT_FAIL if problems else EXIT_OK


def cmd_roofline(args) -> int:
    names = [p.strip() for p in args.presets.split(",") if p.strip()]
    if not names:
        print("error: empty preset list", file=sys.stderr)
        return EXIT_USAGE
    grid = analysis.default_intensity_grid(args.lo_exp, args.hi_exp, args.per_octave)
    rows = []
    for name in names:
        rows.extend(analysis.roofline_rows(load_config(name), grid, args.clock_hz))
    with _output(args.out) as fh:
        analysis.write_csv(fh, analysis.ROOFLINE_COLUMNS, rows, analysis.ROOFLINE_HEADER)
    return EXIT_OK


def _add_experiment_flags(p: argparse.ArgumentParser):
    p.add_argument("--n", type=int, default=256, help="matrix dimension (default 256)")
    p.add_argument("--runs", type=int, default=100, help="Monte-Carlo runs (default 100)")
    p.add_argument("--seed", type=int, default=0, help="first seed; run i uses seed + i")
    p.add_argument("--mode", choices=sorted(MODE_FLAGS), default="selftimed")
    p.add_argument("--jitter", choices=sorted(JITTER_FLAGS), default=None,
                   help="override the DRAM jitter distribution")
    p.add_argument("--poll-interval", type=int, default=DEFAULT_POLL_INTERVAL,
                   help="manager status-poll period in cycles (0 = ideal)")
    p.add_argument("--rows-per-batch", type=int, default=4)
    p.add_argument("--block-width", type=int, default=None)
    p.add_argument("--check-functional", action="store_true",
                   help="fail unless the simulated product matches the reference")
    p.add_argument("--workers", type=int, default=1, help="parallel campaign processes")
    p.add_argument("--out", default=None, help="stats CSV path (default stdout)")


def _add_config_flags(p: argparse.ArgumentParser):
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset", help=f"one of {', '.join(PRESETS)}")
    group.add_argument("--config", help="key/value config file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tpsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("presets", help="list the built-in configurations as CSV")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_presets)

    p = sub.add_parser("plan", help="print the static matmul schedule")
    _add_config_flags(p)
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--mode", choices=sorted(MODE_FLAGS), default="selftimed")
    p.add_argument("--rows-per-batch", type=int, default=4)
    p.add_argument("--block-width", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("run", help="plan, bound and simulate one configuration")
    _add_config_flags(p)
    _add_experiment_flags(p)
    p.add_argument("--runs-out", default=None, help="per-run CSV path")
    p.add_argument("--trace", default=None, help="write the event trace of the first run")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="one stats row per preset")
    p.add_argument("--presets", default="Dual,Quad,Octa,Hexadeca")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("roofline", help="roofline points per preset")
    p.add_argument("--presets", default="Fast,Dual,Quad,Octa,Hexadeca")
    p.add_argument("--clock-hz", type=float, default=None,
                   help="evaluate every preset at this clock instead of its own")
    p.add_argument("--lo-exp", type=int, default=-4)
    p.add_argument("--hi-exp", type=int, default=8)
    p.add_argument("--per-octave", type=int, default=4)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_roofline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
