import argparse
import json
import logging
import sys
from dataclasses import replace
from datetime import date
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional

import pandas as pd

from .core.backtest import (SCORE_COLUMNS, BacktestPlan, aggregate, default_first_day, forecasts_frame, run,
                            sharpness)
from .core.config import Config
from .core.curves import Side, delta_features, inverse, settle
from .core.exceptions import (ConfigError, CurveValidationError, DataValidationError, DisjointDomainsError,
                              InsufficientHistoryError, LengthMismatchError, MalformedInputError,
                              OutputExistsError, UsageError)
from .core.synthmarket import generate
from .core.verification import permutation_test, pit_histogram, reliability
from .core.volmodel import compute_residuals, knn_diagnostic_curve
from .utils.console import console, err_console, frame_table, setup_logging
from .utils.data_io import (OBSERVED_COLUMNS, load_curves, load_dataset, load_scores, residuals_frame,
                            write_dataset)
from .utils.output_handler import OutputHandler, RunManifest, check_inputs

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_HISTORY = 3

COMMANDS = ("settle", "features", "backtest", "synth", "permtest", "replay")

BACKTEST_OUTPUTS = [
    "scores.csv", "aggregates.csv", "aggregates_by_hour.csv", "forecasts.csv", "pit_histogram.csv",
    "reliability.csv", "sharpness.csv", "gaps.csv",
]
SYNTH_OUTPUTS = ["curves.csv", "observed.csv", "forecasts.csv"]


class CLIArgumentParser(argparse.ArgumentParser):
    """Argument parser that reports usage errors with exit status 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_day(value: Optional[str], flag: str) -> Optional[date]:
    if value is None:
        return None
    try:
        return date.fromisoformat(value.strip())
    except ValueError:
        raise UsageError(f"{flag} expects an ISO date (YYYY-MM-DD), got '{value}'")


def parse_exclude_dates(value: Optional[str]) -> FrozenSet[date]:
    """Comma-separated ISO dates, or a file with one date per line"""
    if not value:
        return frozenset()
    if Path(value).is_file():
        items = Path(value).read_text(encoding="utf-8").splitlines()
    else:
        items = value.split(",")
    return frozenset(parse_day(item, "--exclude-dates") for item in items if item.strip())


def _file_handler(out: str, force: bool) -> OutputHandler:
    target = Path(out)
    return OutputHandler(target.parent, force, manifest_name=f"{target.stem}.manifest.json")


class PriceDressCLI:
    """Command-line interface for pricedress"""

    def __init__(self, config: Optional[Config] = None):
        self.config = config
        self.handlers = {
            "settle": self.cmd_settle,
            "features": self.cmd_features,
            "backtest": self.cmd_backtest,
            "synth": self.cmd_synth,
            "permtest": self.cmd_permtest,
            "replay": self.cmd_replay,
        }

    def load_config(self, args: argparse.Namespace) -> Config:
        """Config file, then --set overrides, then command flags"""
        if args.config is not None and not Path(args.config).is_file():
            raise UsageError(f"Config file not found: {args.config}")
        config = Config(args.config)

        overrides = list(args.set or [])
        if args.seed is not None:
            overrides += [f"backtest.seed={args.seed}", f"synth.seed={args.seed}"]
        if getattr(args, "days", None) is not None:
            overrides.append(f"synth.n_days={args.days}")
        if getattr(args, "n_resamples", None) is not None:
            overrides.append(f"backtest.n_resamples={args.n_resamples}")
        if getattr(args, "models", None):
            overrides.append("backtest.models=" + json.dumps([m.strip() for m in args.models.split(",")]))
        config.apply_overrides(overrides)
        return config

    def _manifest(self, command: str, args: argparse.Namespace, inputs: Dict[str, str],
                  output_dir, seed: Optional[int]) -> RunManifest:
        from . import __version__

        arguments = {k: v for k, v in vars(args).items() if k != "command"}
        return RunManifest(
            command=command,
            config_path=getattr(self.config, "config_path", None),
            inputs=inputs,
            output_dir=str(output_dir),
            seed=seed,
            version=__version__,
            config=self.config.to_dict(),
            arguments=arguments,
        )

    def cmd_settle(self, args: argparse.Namespace) -> int:
        """Settle every (day, hour) of a curve file"""
        inputs = check_inputs({"curves": args.curves})
        handler = _file_handler(args.out, args.force)
        handler.reserve([Path(args.out).name])

        curves = load_curves(args.curves, not args.no_price_range_check)
        rows = []
        for (day, hour), sides in sorted(curves.items()):
            if Side.BID not in sides or Side.ASK not in sides:
                logger.warning("Skipping %s hour %d: only the %s curve is present", day, hour,
                               next(iter(sides)).value)
                continue
            try:
                settlement = settle(sides[Side.BID], sides[Side.ASK])
            except DisjointDomainsError as e:
                raise DisjointDomainsError(f"{e} (date={day}, hour={hour})") from e
            rows.append((day.isoformat(), hour, settlement.price, settlement.volume))
        if not rows:
            raise DataValidationError(f"No complete bid/ask pair in {args.curves}")

        handler.write_csv(pd.DataFrame(rows, columns=OBSERVED_COLUMNS), Path(args.out).name)
        handler.write_manifest(self._manifest("settle", args, inputs, handler.output_dir, None))
        console.print(f"✅ Settled {len(rows)} hours -> {args.out}")
        return EXIT_OK

    def cmd_features(self, args: argparse.Namespace) -> int:
        """Delta features per (day, hour) plus the residual table and its kNN diagnostic curve"""
        inputs = check_inputs({"curves": args.curves, "forecasts": args.forecasts})
        out = Path(args.out)
        residuals_name = f"{out.stem}_residuals.csv"
        diagnostic_name = f"{out.stem}_diagnostic.csv"
        handler = _file_handler(args.out, args.force)
        handler.reserve([out.name, residuals_name, diagnostic_name])

        model = self.config.model
        dataset = load_dataset(args.curves, None, args.forecasts, not args.no_price_range_check)
        rows, history = [], []
        for record in dataset:
            if record.ask is None:
                continue
            if record.p_hat is None:
                logger.warning("No point forecast for %s hour %d, skipped", record.date, record.hour)
                continue
            feature = delta_features(record.ask, record.p_hat, model.m)
            v_hat = inverse(record.ask, record.p_hat)
            rows.append((record.date.isoformat(), record.hour, record.p_hat, v_hat.volume,
                         feature.delta_plus, feature.delta_minus, feature.clamped))
            if record.bid is not None:
                history.append(replace(record, volume=settle(record.bid, record.ask).volume))
        if not rows:
            raise DataValidationError("No (day, hour) has both an ask curve and a point forecast")

        features = pd.DataFrame(rows, columns=["date", "hour", "p_hat_eur", "v_hat_mwh", "delta_plus_mwh",
                                               "delta_minus_mwh", "clamped"])
        handler.write_csv(features, out.name)

        residuals = compute_residuals(history, model.m)
        handler.write_csv(residuals_frame(residuals), residuals_name)
        try:
            curve = knn_diagnostic_curve(residuals, model.diagnostic_knn)
            handler.write_csv(pd.DataFrame(curve, columns=["delta_plus_mwh", "mean_mwh", "std_mwh"]),
                              diagnostic_name)
        except InsufficientHistoryError as e:
            logger.warning("kNN diagnostic curve skipped: %s", e)

        handler.write_manifest(self._manifest("features", args, inputs, handler.output_dir, None))
        console.print(f"✅ Features for {len(rows)} hours, {len(residuals)} residuals -> {out.parent}")
        return EXIT_OK

    def _verification_frames(self, scores: pd.DataFrame):
        cfg = self.config.backtest
        pit_rows, reliability_rows = [], []
        for model, group in scores.groupby("model", sort=False):
            counts = pit_histogram(group["pit"].to_numpy(), cfg.pit_bins)
            for i, count in enumerate(counts):
                pit_rows.append((model, i + 1, i / cfg.pit_bins, (i + 1) / cfg.pit_bins, int(count)))
            for subset, min_prob in (("all", None), (f"above_{cfg.reliability_min_prob:g}",
                                                    cfg.reliability_min_prob)):
                bins = reliability(group["exceed_prob"].to_numpy(), group["exceeded"].to_numpy(),
                                   cfg.reliability_bins, min_prob)
                for b in bins:
                    reliability_rows.append((model, subset, b.index, b.lower, b.upper, b.mean_prob,
                                             b.observed_freq, b.count, b.standard_error))
        pit_frame = pd.DataFrame(pit_rows, columns=["model", "bin", "lower", "upper", "count"])
        reliability_frame = pd.DataFrame(reliability_rows, columns=[
            "model", "subset", "bin", "lower", "upper", "mean_prob", "observed_freq", "count", "standard_error"])
        return pit_frame, reliability_frame

    def cmd_backtest(self, args: argparse.Namespace) -> int:
        """Rolling-origin backtest of the bid/ask model against both benchmarks"""
        inputs = check_inputs({"curves": args.curves, "observed": args.observed, "forecasts": args.forecasts})
        handler = OutputHandler(args.out, args.force)
        handler.reserve(BACKTEST_OUTPUTS)
        exclude = parse_exclude_dates(args.exclude_dates)
        first = parse_day(args.first_day, "--first-day")
        last = parse_day(args.last_day, "--last-day")

        cfg = self.config
        dataset = load_dataset(args.curves, args.observed, args.forecasts, not args.no_price_range_check)
        if first is None:
            first = default_first_day(dataset, cfg.model)
            if first is None:
                raise InsufficientHistoryError(
                    f"Data span {dataset.span} is shorter than the {cfg.model.tail_window_days}-day warm-up")
        if last is None:
            last = dataset.span[1]

        plan = BacktestPlan(dataset, first, last, exclude_dates=exclude, model_config=cfg.model,
                            backtest_config=cfg.backtest)
        result = run(plan)
        if not result.records:
            raise InsufficientHistoryError(f"No forecast hour between {first} and {last} could be scored")

        scores = result.scores_frame()
        pit_frame, reliability_frame = self._verification_frames(scores)
        gaps = pd.DataFrame([(g.date, g.hour, g.reason) for g in result.gaps], columns=["date", "hour", "reason"])

        handler.write_csv(scores, "scores.csv")
        handler.write_csv(result.aggregates, "aggregates.csv")
        handler.write_csv(aggregate(result.records, "model_hour"), "aggregates_by_hour.csv")
        handler.write_csv(forecasts_frame(result.forecasts, cfg.backtest.exceed_threshold), "forecasts.csv")
        handler.write_csv(pit_frame, "pit_histogram.csv")
        handler.write_csv(reliability_frame, "reliability.csv")
        handler.write_csv(sharpness(result.forecasts), "sharpness.csv")
        handler.write_csv(gaps, "gaps.csv")
        handler.write_manifest(self._manifest("backtest", args, inputs, handler.output_dir, cfg.backtest.seed))

        console.print(frame_table(result.aggregates, title=f"Mean scores {first} to {last}"))
        console.print(f"✅ Backtest wrote {len(result.records)} score rows -> {args.out}")
        return EXIT_OK

    def cmd_synth(self, args: argparse.Namespace) -> int:
        """Generate a synthetic market and write the three backtest inputs"""
        handler = OutputHandler(args.out, args.force)
        handler.reserve(SYNTH_OUTPUTS)

        synth = self.config.synth
        dataset = generate(synth)
        paths = [handler.path(name) for name in SYNTH_OUTPUTS]
        write_dataset(dataset, *paths)
        handler.written.extend(SYNTH_OUTPUTS)
        handler.write_manifest(self._manifest("synth", args, {}, handler.output_dir, synth.seed))
        console.print(f"✅ Generated {synth.n_days} days ({len(dataset)} hours) -> {args.out}")
        return EXIT_OK

    def cmd_permtest(self, args: argparse.Namespace) -> int:
        """Paired permutation test of one score column between two models"""
        inputs = check_inputs({"scores": args.scores})
        if args.metric not in SCORE_COLUMNS:
            raise UsageError(f"--metric must be one of {SCORE_COLUMNS}, got '{args.metric}'")
        handler = None
        if args.out:
            handler = OutputHandler(args.out, args.force)
            handler.reserve(["permtest.txt"])

        scores = load_scores(args.scores)
        columns = {}
        for label, model in (("a", args.model_a), ("b", args.model_b)):
            rows = scores[scores["model"] == model].set_index(["date", "hour"])[args.metric]
            if rows.empty:
                raise DataValidationError(f"Model '{model}' not found in {args.scores}")
            if rows.index.duplicated().any():
                raise DataValidationError(f"Model '{model}' has duplicate (date, hour) rows in {args.scores}")
            columns[label] = rows
        paired = pd.concat(columns, axis=1, join="inner").sort_index()
        unpaired = len(columns["a"]) + len(columns["b"]) - 2 * len(paired)
        if unpaired:
            logger.warning("%d score rows without a partner were dropped", unpaired)

        cfg = self.config.backtest
        result = permutation_test(paired["a"].to_numpy(), paired["b"].to_numpy(), cfg.n_resamples, seed=cfg.seed)
        lines = [
            f"model_a={args.model_a}",
            f"model_b={args.model_b}",
            f"metric={args.metric}",
            f"n_pairs={len(paired)}",
            f"observed={result.observed:.10g}",
            f"q025={result.q025:.10g}",
            f"q975={result.q975:.10g}",
            f"p_value={result.p_value:.10g}",
            f"n_resamples={result.n_resamples}",
            f"seed={cfg.seed}",
            f"rejects={str(result.rejects).lower()}",
        ]
        text = "\n".join(lines) + "\n"
        print(text, end="")
        if handler is not None:
            handler.write_text(text, "permtest.txt")
            handler.write_manifest(self._manifest("permtest", args, inputs, handler.output_dir, cfg.seed))
        return EXIT_OK

    def cmd_replay(self, args: argparse.Namespace) -> int:
        """Re-run a command with the arguments and effective config of its manifest"""
        manifest = RunManifest.load(args.manifest)
        if manifest.command not in self.handlers or manifest.command == "replay":
            raise UsageError(f"Manifest {args.manifest} records an unknown command '{manifest.command}'")

        replayed = argparse.Namespace(**manifest.arguments)
        replayed.force = args.force
        if args.out:
            replayed.out = args.out
        self.config = Config.from_dict(manifest.config)
        logger.info("Replaying '%s' from %s", manifest.command, args.manifest)
        return self.handlers[manifest.command](replayed)

    def run(self, args: argparse.Namespace) -> int:
        """Dispatch one command and map failures onto exit codes"""
        try:
            if args.command != "replay":
                self.config = self.load_config(args)
            return self.handlers[args.command](args)
        except InsufficientHistoryError as e:
            err_console.print(f"Insufficient history: {e}", style="red", markup=False)
            return EXIT_HISTORY
        except (DataValidationError, CurveValidationError, MalformedInputError, DisjointDomainsError,
                LengthMismatchError) as e:
            err_console.print(f"Data error: {e}", style="red", markup=False)
            return EXIT_DATA
        except (ConfigError, OutputExistsError, UsageError) as e:
            err_console.print(f"Error: {e}", style="red", markup=False)
            return EXIT_USAGE


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Config file (JSON or TOML); defaults to $PRICEDRESS_CONFIG")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="Override one config key, e.g. model.knn=200 (repeatable)")
    common.add_argument("--seed", type=int, help="Seed for every random stream of the run")
    common.add_argument("--force", action="store_true", help="Overwrite existing outputs")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug")
    return common


def _data_options() -> argparse.ArgumentParser:
    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--no-price-range-check", action="store_true",
                      help="Accept curve prices outside [-500, 3000] EUR/MWh")
    return data


def create_parser() -> argparse.ArgumentParser:
    """Create argument parser"""
    parser = CLIArgumentParser(
        prog="pricedress",
        description="Probabilistic day-ahead price forecasts by dressing point forecasts through bid/ask curves",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  pricedress synth --out data/                              # Synthetic market
  pricedress settle data/curves.csv --out settled.csv       # Curve intersections
  pricedress features data/curves.csv data/forecasts.csv --out features.csv
  pricedress backtest data/curves.csv data/observed.csv data/forecasts.csv --out run/
  pricedress permtest run/scores.csv bidask gaussian --metric crps
  pricedress replay run/manifest.json --out rerun/
        """
    )
    subparsers = parser.add_subparsers(dest="command", parser_class=CLIArgumentParser)
    common, data = _common_options(), _data_options()

    settle_parser = subparsers.add_parser("settle", parents=[common, data], help="Settle bid/ask curves")
    settle_parser.add_argument("curves", help="Curve CSV (date,hour,side,volume_mwh,price_eur)")
    settle_parser.add_argument("--out", required=True, help="Output CSV (date,hour,price_eur,volume_mwh)")

    features_parser = subparsers.add_parser("features", parents=[common, data],
                                            help="Delta features and the kNN diagnostic curve")
    features_parser.add_argument("curves", help="Curve CSV")
    features_parser.add_argument("forecasts", help="Point forecast CSV (date,hour,p_hat_eur)")
    features_parser.add_argument("--out", required=True, help="Output features CSV")

    backtest_parser = subparsers.add_parser("backtest", parents=[common, data], help="Rolling-origin backtest")
    backtest_parser.add_argument("curves", help="Curve CSV")
    backtest_parser.add_argument("observed", help="Observed CSV (date,hour,price_eur,volume_mwh)")
    backtest_parser.add_argument("forecasts", help="Point forecast CSV")
    backtest_parser.add_argument("--out", required=True, help="Output directory")
    backtest_parser.add_argument("--exclude-dates", help="Comma-separated ISO dates or a file of dates")
    backtest_parser.add_argument("--first-day", help="First forecast day (default: end of warm-up)")
    backtest_parser.add_argument("--last-day", help="Last forecast day (default: last day of data)")
    backtest_parser.add_argument("--models", help="Comma-separated subset of bidask,gaussian,empirical")

    synth_parser = subparsers.add_parser("synth", parents=[common], help="Generate a synthetic market")
    synth_parser.add_argument("--out", required=True, help="Output directory")
    synth_parser.add_argument("--days", type=int, help="Number of days (overrides synth.n_days)")

    perm_parser = subparsers.add_parser("permtest", parents=[common], help="Paired permutation test")
    perm_parser.add_argument("scores", help="Score table CSV written by backtest")
    perm_parser.add_argument("model_a")
    perm_parser.add_argument("model_b")
    perm_parser.add_argument("--metric", default="crps", help=f"One of {', '.join(SCORE_COLUMNS)}")
    perm_parser.add_argument("--n-resamples", type=int, help="Resamples (overrides backtest.n_resamples)")
    perm_parser.add_argument("--out", help="Optional output directory for the result and manifest")

    replay_parser = subparsers.add_parser("replay", help="Re-run a command from its manifest")
    replay_parser.add_argument("manifest", help="manifest.json written by a previous run")
    replay_parser.add_argument("--out", help="Write outputs here instead of the original location")
    replay_parser.add_argument("--force", action="store_true", help="Overwrite existing outputs")
    replay_parser.add_argument("-v", "--verbose", action="count", default=0)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point"""
    parser = create_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE

    setup_logging(args.verbose)
    return PriceDressCLI().run(args)


if __name__ == "__main__":
    sys.exit(main())
