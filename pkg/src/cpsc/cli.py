"""Command-line front end: live capture, replay, calibration, simulation,
report recomputation, and budget sweeps."""
from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Callable, List, Optional, Sequence

from .answers import Modality
from .calibrate import (
    DEFAULT_MIN_ANCHORS,
    CalibrationError,
    InsufficientData,
    infer_params,
)
from .harness import (
    ALL_AGGREGATION,
    ALL_STOPPING,
    EvalReport,
    budget_sweep,
    parse_strategy,
    recompute_metrics,
    run_eval,
    sweep_to_csv,
)
from .live import LiveSource
from .samplers import (
    ProblemSpec,
    RecordingSource,
    ReplaySource,
    SampleSource,
    SyntheticSource,
    index_trace,
    load_problems,
    load_trace,
    load_world,
    record_trace,
)
from .stoptests import AgreementParams


def _add_eval_flags(p: argparse.ArgumentParser, default_strategies: List[str]) -> None:
    p.add_argument("--strategy", action="append", metavar="NAME",
                   help=f"strategy row, repeatable (default: {' '.join(default_strategies)}); "
                        f"known: {', '.join(ALL_STOPPING + ALL_AGGREGATION)}")
    p.add_argument("--rho", type=float, default=0.975,
                   help="posterior stopping threshold (default 0.975)")
    p.add_argument("--beta-rho", type=float, default=None,
                   help="majority-test threshold (defaults to --rho)")
    p.add_argument("--budget", type=int, default=40,
                   help="sample budget per problem (default 40)")
    p.add_argument("--esc-window-size", type=int, default=5,
                   help="unanimous-window size for esc (default 5)")
    p.add_argument("--params", metavar="FILE",
                   help="agreement parameters JSON (from `calibrate`)")
    p.add_argument("--workers", type=int, default=1,
                   help="problem-level worker threads (default 1)")
    p.add_argument("--out-dir", metavar="DIR",
                   help="write per-strategy RunRecord JSONL files here")


def _parse_strategies(args: argparse.Namespace, default: List[str]) -> list:
    names = args.strategy or default
    return [parse_strategy(n) for n in names]


def _load_params(args: argparse.Namespace) -> Optional[AgreementParams]:
    if getattr(args, "params", None):
        return AgreementParams.load(args.params)
    return None


def _finish(report: EvalReport, out_dir: Optional[str]) -> None:
    print(report.render_table())
    if out_dir:
        path = os.path.join(out_dir, "report.json")
        with open(path, "w") as fh:
            json.dump(report.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {path}", file=sys.stderr)


def _eval_on(problems: Sequence[ProblemSpec],
             source_factory: Callable[[], SampleSource],
             args: argparse.Namespace, default_strategies: List[str],
             dataset_name: str, model: str = "") -> EvalReport:
    return run_eval(
        problems,
        source_factory,
        _parse_strategies(args, default_strategies),
        params=_load_params(args),
        rho=args.rho,
        budget=args.budget,
        esc_window_size=args.esc_window_size,
        beta_rho=args.beta_rho,
        workers=args.workers,
        out_dir=args.out_dir,
        dataset_name=dataset_name,
        model=model,
    )


_DEFAULT_ROWS = ["full", "cp-aa", "cp-fa", "cp-ff"]


def cmd_run(args: argparse.Namespace) -> int:
    """Sample live once at full budget, save the trace, evaluate on replay."""
    problems = load_problems(args.dataset)
    per_modality = args.capture if args.capture is not None else args.budget
    source = RecordingSource(LiveSource.from_env(
        template_family=args.family, template_root=args.template_dir))
    for problem in problems:
        for i in range(per_modality):
            for modality in (Modality.COT, Modality.POT):
                source.next_sample(problem, modality, 0.0 if i == 0 else 0.7)
    os.makedirs(args.out_dir, exist_ok=True)
    trace_path = os.path.join(args.out_dir, "trace.jsonl")
    n = record_trace(source.samples, trace_path)
    print(f"captured {n} samples -> {trace_path}", file=sys.stderr)
    trace = index_trace(source.samples)
    report = _eval_on(problems, lambda: ReplaySource(trace), args,
                      _DEFAULT_ROWS, args.dataset,
                      model=os.environ.get("CPSC_MODEL", ""))
    _finish(report, args.out_dir)
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    problems = load_problems(args.dataset)
    trace = load_trace(args.trace)
    report = _eval_on(problems, lambda: ReplaySource(trace), args,
                      _DEFAULT_ROWS, args.dataset)
    _finish(report, args.out_dir)
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    problems = load_problems(args.dataset)
    trace = load_trace(args.trace)
    golds = {p.id: p.gold for p in problems}
    try:
        params, estimate = infer_params(trace, golds, model=args.model,
                                        min_anchors=args.min_anchors)
    except (InsufficientData, CalibrationError) as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return 2
    print(estimate.report())
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(params.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {args.out}", file=sys.stderr)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    world = load_world(args.world)
    factory = lambda: SyntheticSource(world, seed=args.seed,  # noqa: E731
                                      temp0_mode=not args.stochastic_first)
    report = _eval_on(world.specs(), factory, args, _DEFAULT_ROWS, args.world)
    _finish(report, args.out_dir)
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    problems = load_problems(args.dataset)
    golds = {p.id: p.gold for p in problems}
    report = EvalReport(dataset=args.dataset, model="", budget=args.budget or 0,
                        rows=[])
    for path in args.records:
        report.rows.append(recompute_metrics(path, golds, args.budget))
    print(report.render_table())
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    budgets = [int(b) for b in args.budgets.split(",") if b]
    if args.trace:
        problems = load_problems(args.dataset)
        trace = load_trace(args.trace)
        factory: Callable[[], SampleSource] = lambda: ReplaySource(trace)
        dataset_name = args.dataset
    else:
        world = load_world(args.world)
        problems = world.specs()
        factory = lambda: SyntheticSource(world, seed=args.seed,  # noqa: E731
                                          temp0_mode=not args.stochastic_first)
        dataset_name = args.world
    reports = budget_sweep(
        problems, factory, _parse_strategies(args, _DEFAULT_ROWS), budgets,
        params=_load_params(args), rho=args.rho,
        esc_window_size=args.esc_window_size, beta_rho=args.beta_rho,
        workers=args.workers, dataset_name=dataset_name,
    )
    for report in reports:
        print(report.render_table())
        print()
    if args.out:
        sweep_to_csv(reports, args.out)
        print(f"wrote {args.out}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpsc",
        description="Cross-modal self-consistency: sample, stop early, aggregate, report.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="sample a live model, capture the trace, evaluate")
    p.add_argument("--dataset", required=True, help="problems JSONL")
    p.add_argument("--family", default="gsm", help="prompt template family (default gsm)")
    p.add_argument("--template-dir", default=None,
                   help="templates root overriding the packaged prompts")
    p.add_argument("--capture", type=int, default=None, metavar="N",
                   help="samples per modality to record (default: --budget)")
    _add_eval_flags(p, _DEFAULT_ROWS)
    p.set_defaults(fn=cmd_run, out_dir_required=True)

    p = sub.add_parser("replay", help="evaluate strategies over a recorded trace")
    p.add_argument("--dataset", required=True, help="problems JSONL")
    p.add_argument("--trace", required=True, help="trace JSONL")
    _add_eval_flags(p, _DEFAULT_ROWS)
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("calibrate", help="estimate agreement parameters from a trace")
    p.add_argument("--dataset", required=True, help="problems JSONL")
    p.add_argument("--trace", required=True, help="full-sampling trace JSONL")
    p.add_argument("--model", default="", help="label stored with the parameters")
    p.add_argument("--min-anchors", type=int, default=DEFAULT_MIN_ANCHORS,
                   help=f"minimum anchor count (default {DEFAULT_MIN_ANCHORS})")
    p.add_argument("--out", metavar="FILE", help="write parameters JSON here")
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("simulate", help="evaluate strategies on a synthetic world")
    p.add_argument("--world", required=True, help="synthetic world JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stochastic-first", action="store_true",
                   help="draw index-0 samples instead of returning the mode")
    _add_eval_flags(p, _DEFAULT_ROWS)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("report", help="recompute metrics from RunRecord files")
    p.add_argument("records", nargs="+", help="RunRecord JSONL files")
    p.add_argument("--dataset", required=True, help="problems JSONL (for gold answers)")
    p.add_argument("--budget", type=int, default=None,
                   help="reference budget for the reduction column")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("sweep", help="rerun an evaluation across budgets, emit CSV")
    p.add_argument("--dataset", help="problems JSONL (required with --trace)")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--trace", help="trace JSONL")
    group.add_argument("--world", help="synthetic world JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stochastic-first", action="store_true")
    p.add_argument("--budgets", required=True, metavar="B1,B2,...",
                   help="comma-separated ascending budgets")
    p.add_argument("--out", metavar="FILE", help="CSV output path")
    _add_eval_flags(p, _DEFAULT_ROWS)
    p.set_defaults(fn=cmd_sweep)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "out_dir_required", False) and not args.out_dir:
        parser.error("run requires --out-dir (trace and records are written there)")
    if args.command == "sweep" and args.trace and not args.dataset:
        parser.error("sweep --trace requires --dataset")
    try:
        return args.fn(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
