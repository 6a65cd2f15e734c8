"""
Command-line entry point for the epimodulation toolkit.

    python -m src.main simulate --scenario two-wave --out truth.csv
    python -m src.main backtest --config plan.cfg
    python -m src.main modulate --forecasts ensemble.csv --truth truth.csv --out modulated.csv
    python -m src.main score --base runs/arima/base --model runs/arima/epimod --window 2022-01-01:2022-03-01
    python -m src.main report --base runs/arima/base --model runs/arima/epimod --out report.csv
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

from .backtest import run_backtest
from .config import AppConfig, load_config
from .epimod import ExponentMode, ModulationMode, ThetaOptions
from .errors import ConfigError, EpimodError
from .hub_io import read_score_records, write_score_table, write_truth_csv
from .plan import load_plan, parse_window
from .realtime import modulate_file
from .report import DIMENSIONS, breakdown, write_report
from .scenarios import add_observation_noise, get_all_scenarios, load_scenario
from .scoring import OVERALL, AggregationWindow, aggregate

logger = logging.getLogger(__name__)

_HANDLER_TAG = "_epimod_handler"


def setup_logging(log_dir: str, debug: bool = False) -> None:
    """Configure logging; safe to call more than once."""
    log_level = logging.DEBUG if debug else logging.INFO
    root_logger = logging.getLogger()

    # Drop handlers installed by an earlier call
    for handler in list(root_logger.handlers):
        if getattr(handler, _HANDLER_TAG, False):
            root_logger.removeHandler(handler)
            handler.close()

    handlers = []
    if log_dir:
        log_path = Path(log_dir)
        log_path.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_path / "epimod.log", encoding='utf-8')
        file_handler.setFormatter(logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        ))
        handlers.append(file_handler)

    # Console handler writes to stderr so CSV on stdout stays clean
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(logging.Formatter(
        '%(asctime)s - %(levelname)s - %(message)s'
    ))
    handlers.append(console_handler)

    for handler in handlers:
        handler.setLevel(log_level)
        setattr(handler, _HANDLER_TAG, True)
        root_logger.addHandler(handler)
    root_logger.setLevel(log_level)


class _Parser(argparse.ArgumentParser):
    """Prints full help on usage errors (exit 2)."""

    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _scores_path(path_text: str) -> Path:
    path = Path(path_text)
    return path / "scores.csv" if path.is_dir() else path


def _window_argument(raw: str) -> AggregationWindow:
    label = None
    if "=" in raw:
        label, raw = raw.split("=", 1)
    return parse_window("--window", raw, label=label or raw)


def _argparse_window(raw: str) -> AggregationWindow:
    try:
        return _window_argument(raw)
    except ConfigError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def cmd_simulate(args, config: AppConfig) -> int:
    scenario = load_scenario(args.scenario)
    noise = args.noise or scenario.noise
    seed = config.seed if args.seed is None else args.seed

    series = add_observation_noise(scenario.simulate(), noise, seed)
    write_truth_csv([series], args.out)
    logger.info(f"Simulated '{scenario.name}' ({len(series)} periods, noise={noise}, seed={seed}) -> {args.out}")
    return 0


def cmd_backtest(args, config: AppConfig) -> int:
    plan = load_plan(args.config)
    requested = args.threads or plan.threads or config.threads
    threads = max(1, min(requested, config.threads))
    if threads < requested:
        logger.info(f"Capping workers at EPIMOD_THREADS={config.threads}")

    result = run_backtest(plan, threads=threads)
    stats = result.history.get_stats()
    for name, run in sorted(result.runs.items()):
        for row in run.summary:
            if row.window == OVERALL.label and row.pct_improvement is not None:
                logger.info(f"  {name}: overall MAE {row.base_mae:.3f} -> {row.model_mae:.3f} "
                            f"({row.pct_improvement:+.1f}%)")
    if stats["errors"]:
        logger.warning(f"{stats['errors']} of {stats['cells_processed']} cells failed; see log")
    return 0


def cmd_modulate(args, config: AppConfig) -> int:
    mode = ModulationMode(exponent=ExponentMode(args.mode), include_history=args.include_history)
    options = ThetaOptions(fixed_theta=args.fixed_theta)
    result = modulate_file(
        args.forecasts,
        args.truth,
        args.out,
        mode=mode,
        options=options,
        realtime=not args.allow_same_origin,
        theta_trace_path=args.theta_trace,
    )
    if result.unestimated:
        logger.warning(f"{result.unestimated} forecast sets had no retrospective origins")
    return 0


def cmd_score(args, config: AppConfig) -> int:
    base = read_score_records(_scores_path(args.base))
    model = read_score_records(_scores_path(args.model))

    windows = [OVERALL]
    for horizon in args.horizon or []:
        windows.append(AggregationWindow(f"h{horizon}", horizons={horizon}))
    windows.extend(args.window or [])

    model_name = args.name or Path(args.model).name
    result = aggregate(base, model, windows, model_name=model_name)
    logger.info(f"Scored {result.matched} matched records "
                f"({result.unmatched_base} base-only, {result.unmatched_model} model-only)")

    if args.out:
        write_score_table(result.rows, args.out)
    else:
        sys.stdout.write(write_score_table(result.rows, None))
    return 0


def cmd_report(args, config: AppConfig) -> int:
    base = read_score_records(_scores_path(args.base))
    model = read_score_records(_scores_path(args.model))
    rows = breakdown(base, model, args.dimension or DIMENSIONS)
    if args.out:
        write_report(rows, args.out)
        logger.info(f"Wrote {len(rows)} report rows to {args.out}")
    else:
        sys.stdout.write(write_report(rows, None))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="epimod", description="Epimodulation of epidemic forecasts")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", help="simulate a bundled SIR scenario into a truth CSV")
    p.add_argument("--scenario", default="two-wave", help=f"one of: {', '.join(get_all_scenarios())}")
    p.add_argument("--out", required=True, type=Path, help="truth CSV to write")
    p.add_argument("--noise", choices=["none", "poisson"], help="observation noise (default: scenario's)")
    p.add_argument("--seed", type=int, help="noise seed (default: EPIMOD_SEED)")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("backtest", help="run a rolling-origin backtest plan")
    p.add_argument("--config", required=True, type=Path, help="plan file (key = value lines)")
    p.add_argument("--threads", type=int, help="worker threads (capped by EPIMOD_THREADS)")
    p.set_defaults(handler=cmd_backtest)

    p = sub.add_parser("modulate", help="epimodulate a hub-format forecast file")
    p.add_argument("--forecasts", required=True, type=Path)
    p.add_argument("--truth", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--fixed-theta", type=float, help="skip estimation and use this normalized theta")
    p.add_argument("--mode", choices=[m.value for m in ExponentMode], default=ExponentMode.CUMULATIVE_WINDOW.value)
    p.add_argument("--include-history", action="store_true", help="add the pre-origin cumulative count")
    p.add_argument("--theta-trace", type=Path, help="write per-set theta estimates here")
    p.add_argument("--allow-same-origin", action="store_true",
                   help="let a set's own realized window count towards its theta")
    p.set_defaults(handler=cmd_modulate)

    p = sub.add_parser("score", help="compare two runs' score records by window")
    p.add_argument("--base", required=True, help="scores.csv or a directory containing it")
    p.add_argument("--model", required=True, help="scores.csv or a directory containing it")
    p.add_argument("--window", action="append", type=_argparse_window, metavar="[LABEL=]START:END")
    p.add_argument("--horizon", action="append", type=int)
    p.add_argument("--name", help="model name in the table (default: --model basename)")
    p.add_argument("--out", type=Path, help="CSV to write (default: stdout)")
    p.set_defaults(handler=cmd_score)

    p = sub.add_parser("report", help="per-date/location/horizon MAE reductions")
    p.add_argument("--base", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--dimension", action="append", choices=list(DIMENSIONS))
    p.add_argument("--out", type=Path, help="CSV to write (default: stdout)")
    p.set_defaults(handler=cmd_report)

    return parser


def main(argv: Optional[list] = None) -> int:
    """Main entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = load_config()
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    setup_logging(config.log_dir, config.debug_mode)

    logger.debug("=" * 60)
    logger.debug(f"epimod {args.command}")
    logger.debug("=" * 60)

    # Validate configuration
    errors = config.validate()
    if errors:
        for error in errors:
            logger.error(f"Configuration error: {error}")
        print(f"error: {errors[0]}", file=sys.stderr)
        return 1

    try:
        return args.handler(args, config)
    except (EpimodError, FileNotFoundError, ValueError) as e:
        logger.debug("Command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
