"""
Rolling-origin backtest

Every forecast day is fitted on strictly earlier data only: residual tables
are filtered to days before t, the ask curve comes from the most recent
earlier day, and benchmarks pool price residuals of earlier days.
"""

import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from datetime import date, timedelta
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import BacktestConfig, ModelConfig
from .curves import delta_features
from .dataset import HOURS, MarketDataset
from .dressing import PricePredictiveDistribution, dress, empirical_benchmark, gaussian_benchmark
from .exceptions import InsufficientHistoryError, MalformedInputError
from .verification import ScoreRecord, score_forecast
from .volmodel import ResidualTable, VolumeErrorModel, compute_residuals

logger = logging.getLogger(__name__)

SCORE_COLUMNS = ["crps", "qs10", "qs90"]


@dataclass(frozen=True)
class ForecastRecord:
    date: date
    hour: int
    model: str
    quantiles: Tuple[Tuple[float, float], ...]  # (level, price) pairs
    exceed_prob: float


@dataclass(frozen=True)
class DataGap:
    date: date
    hour: int
    reason: str


@dataclass
class BacktestPlan:
    dataset: MarketDataset
    first_day: date
    last_day: date
    exclude_dates: FrozenSet[date] = frozenset()
    model_config: ModelConfig = field(default_factory=ModelConfig)
    backtest_config: BacktestConfig = field(default_factory=BacktestConfig)

    @property
    def models(self) -> List[str]:
        return list(self.backtest_config.models)

    def forecast_days(self) -> List[date]:
        return [d for d in self.dataset.days
                if self.first_day <= d <= self.last_day and d not in self.exclude_dates]


@dataclass
class BacktestResult:
    records: List[ScoreRecord]
    forecasts: List[ForecastRecord]
    gaps: List[DataGap]
    aggregates: pd.DataFrame
    metadata: Dict[str, Any]

    def scores_frame(self) -> pd.DataFrame:
        return records_frame(self.records)


def records_frame(records: Sequence[ScoreRecord]) -> pd.DataFrame:
    columns = ["date", "hour", "model", "crps", "qs10", "qs90", "pit", "exceed_prob", "exceeded"]
    return pd.DataFrame([asdict(r) for r in records], columns=columns)


def price_residual_table(dataset: MarketDataset) -> Tuple[np.ndarray, np.ndarray]:
    """Day ordinals and price residuals r = p_hat - p, sorted by day"""
    days, residuals = [], []
    for record in dataset:
        if record.price is not None and record.p_hat is not None:
            days.append(record.date.toordinal())
            residuals.append(record.p_hat - record.price)
    days = np.asarray(days, dtype=np.int64)
    residuals = np.asarray(residuals, dtype=float)
    order = np.argsort(days, kind="stable")
    return days[order], residuals[order]


def check_warmup(plan: BacktestPlan, residuals: ResidualTable) -> None:
    """Refuse plans without enough history before the first forecast day"""
    if plan.first_day > plan.last_day:
        raise MalformedInputError(f"first day {plan.first_day} is after last day {plan.last_day}")
    config = plan.model_config
    shortfall = []
    start, _ = plan.dataset.span
    history_days = (plan.first_day - start).days if start is not None else 0
    if history_days < config.tail_window_days:
        shortfall.append(f"{history_days} days of history before {plan.first_day}, "
                         f"need {config.tail_window_days}")
    available = len(residuals.before(plan.first_day))
    if available < config.knn:
        shortfall.append(f"{available} residuals before {plan.first_day}, need {config.knn}")
    if shortfall:
        raise InsufficientHistoryError("Backtest warm-up shortfall: " + "; ".join(shortfall))


def _model_seed(seed: int, day: date, hour: int, model: str) -> np.random.Generator:
    # keyed on the model name so repeated model entries score identically
    entropy = [seed, day.toordinal(), hour, zlib.crc32(model.encode("utf-8"))]
    return np.random.default_rng(np.random.SeedSequence(entropy))


class _DayForecaster:
    """Everything needed to forecast and score one day, built from data before it"""

    def __init__(self, plan: BacktestPlan, residuals: ResidualTable,
                 price_days: np.ndarray, price_residuals: np.ndarray):
        self.plan = plan
        self.residuals = residuals
        self.price_days = price_days
        self.price_residuals = price_residuals

    def _benchmark_residuals(self, day: date) -> np.ndarray:
        stop = int(np.searchsorted(self.price_days, day.toordinal(), side="left"))
        window = self.plan.backtest_config.benchmark_window_days
        start = 0
        if window is not None:
            start = int(np.searchsorted(self.price_days, day.toordinal() - window, side="left"))
        return self.price_residuals[start:stop]

    def __call__(self, day: date) -> Tuple[List[ScoreRecord], List[ForecastRecord], List[DataGap]]:
        plan = self.plan
        cfg = plan.backtest_config
        model_cfg = plan.model_config
        records, forecasts, gaps = [], [], []

        volume_model = VolumeErrorModel(model_cfg, self.residuals, day)
        history = self._benchmark_residuals(day)

        for hour in HOURS:
            record = plan.dataset.get(day, hour)
            if record is None or record.p_hat is None or record.price is None:
                gaps.append(DataGap(day, hour, "missing point forecast or realized price"))
                continue
            found = plan.dataset.most_recent_ask(day, hour, cfg.max_curve_gap_days)
            if found is None:
                gaps.append(DataGap(day, hour, f"no ask curve within {cfg.max_curve_gap_days} days"))
                continue
            ask, _ = found

            try:
                feature = delta_features(ask, record.p_hat, model_cfg.m)
                err = volume_model.error_distribution(hour, feature.delta_plus)
                built: Dict[str, PricePredictiveDistribution] = {}
                for name in dict.fromkeys(plan.models):
                    if name == "bidask":
                        built[name] = dress(ask, record.p_hat, err)
                    elif name == "gaussian":
                        built[name] = gaussian_benchmark(record.p_hat, history)
                    elif name == "empirical":
                        built[name] = empirical_benchmark(record.p_hat, history, model_cfg.empirical_flip_sign)
                    else:
                        raise MalformedInputError(f"unknown model '{name}'")
            except InsufficientHistoryError as e:
                logger.warning("Skipping %s hour %d: %s", day, hour, e)
                gaps.append(DataGap(day, hour, f"insufficient history: {e}"))
                continue

            for name in plan.models:
                dist = built[name]
                rng = _model_seed(cfg.seed, day, hour, name)
                records.append(score_forecast(dist, record.price, day, hour, name, rng, cfg.exceed_threshold))
                levels = tuple(cfg.quantile_levels)
                prices = np.atleast_1d(dist.quantile(np.asarray(levels)))
                forecasts.append(ForecastRecord(day, hour, name,
                                                tuple(zip(levels, (float(x) for x in prices))),
                                                dist.exceedance(cfg.exceed_threshold)))
        return records, forecasts, gaps


def run(plan: BacktestPlan) -> BacktestResult:
    """Rolling-origin backtest of every planned model"""
    model_cfg = plan.model_config
    cfg = plan.backtest_config

    residuals = ResidualTable.from_residuals(compute_residuals(plan.dataset, model_cfg.m))
    check_warmup(plan, residuals)
    price_days, price_residuals = price_residual_table(plan.dataset)

    days = plan.forecast_days()
    logger.info("Backtesting %d days (%s to %s) for models %s", len(days), plan.first_day,
                plan.last_day, ", ".join(plan.models))
    forecaster = _DayForecaster(plan, residuals, price_days, price_residuals)

    # Each day is a pure function of data before it, so map order does not matter
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            per_day = list(pool.map(forecaster, days))
    else:
        per_day = [forecaster(day) for day in days]

    records, forecasts, gaps = [], [], []
    for day_records, day_forecasts, day_gaps in per_day:
        records.extend(day_records)
        forecasts.extend(day_forecasts)
        gaps.extend(day_gaps)
    if gaps:
        logger.warning("%d (day, hour) slots skipped because of data gaps", len(gaps))

    start, end = plan.dataset.span
    metadata = {
        "model_config": asdict(model_cfg),
        "backtest_config": asdict(cfg),
        "seed": cfg.seed,
        "data_span": [str(start), str(end)],
        "forecast_span": [str(plan.first_day), str(plan.last_day)],
        "excluded_dates": sorted(str(d) for d in plan.exclude_dates),
        "n_records": len(records),
        "n_gaps": len(gaps),
    }
    aggregates = aggregate(records) if records else pd.DataFrame(columns=["model"] + SCORE_COLUMNS + ["count"])
    return BacktestResult(records, forecasts, gaps, aggregates, metadata)


def aggregate(records: Sequence[ScoreRecord], group_by: str = "model") -> pd.DataFrame:
    """Mean CRPS and quantile scores per model or per model and hour"""
    if not records:
        raise MalformedInputError("cannot aggregate an empty score table")
    if group_by == "model":
        keys = ["model"]
    elif group_by in ("model_hour", "model×hour"):
        keys = ["model", "hour"]
    else:
        raise MalformedInputError(f"group_by must be 'model' or 'model_hour', got '{group_by}'")

    frame = records_frame(records)
    grouped = frame.groupby(keys, sort=False)
    table = grouped[SCORE_COLUMNS].mean()
    table["count"] = grouped.size()
    return table.reset_index()


def forecasts_frame(forecasts: Sequence[ForecastRecord], threshold: float = 50.0) -> pd.DataFrame:
    """Forecast table with one column per quantile level plus the exceedance probability"""
    rows = []
    exceed_column = f"exceed_{threshold:g}"
    for f in forecasts:
        row = {"date": f.date, "hour": f.hour, "model": f.model}
        for level, price in f.quantiles:
            row[f"q{round(level * 100):02d}"] = price
        row[exceed_column] = f.exceed_prob
        rows.append(row)
    return pd.DataFrame(rows)


def sharpness(forecasts: Sequence[ForecastRecord]) -> pd.DataFrame:
    """Mean width of the central 60/80/90% intervals per model"""
    bands = {"width60": (0.20, 0.80), "width80": (0.10, 0.90), "width90": (0.05, 0.95)}
    rows = []
    for f in forecasts:
        lookup = {round(level, 6): price for level, price in f.quantiles}
        row = {"model": f.model}
        for name, (lo, hi) in bands.items():
            if round(lo, 6) in lookup and round(hi, 6) in lookup:
                row[name] = lookup[round(hi, 6)] - lookup[round(lo, 6)]
        rows.append(row)
    frame = pd.DataFrame(rows)
    if frame.empty:
        return frame
    return frame.groupby("model", sort=False).mean().reset_index()


def default_first_day(dataset: MarketDataset, config: ModelConfig) -> Optional[date]:
    """First day with a full tail window of history behind it"""
    start, end = dataset.span
    if start is None:
        return None
    first = start + timedelta(days=config.tail_window_days)
    return first if first <= end else None
