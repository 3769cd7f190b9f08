"""
CSV loaders and writers for curves, observations, point forecasts,
residual tables and score tables.

Rows are reported by their line number in the file (the header is line 1).
"""

import logging
from datetime import date
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..core.curves import Side, StepCurve
from ..core.dataset import HOURS, HourRecord, MarketDataset
from ..core.exceptions import CurveValidationError, DataValidationError
from ..core.volmodel import VolumeResidual

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

CURVE_COLUMNS = ["date", "hour", "side", "volume_mwh", "price_eur"]
OBSERVED_COLUMNS = ["date", "hour", "price_eur", "volume_mwh"]
FORECAST_COLUMNS = ["date", "hour", "p_hat_eur"]
RESIDUAL_COLUMNS = ["date", "hour", "e_mwh", "delta_plus_mwh", "p_hat_eur"]
SCORE_TABLE_COLUMNS = ["date", "hour", "model", "crps", "qs10", "qs90", "pit", "exceed_prob", "exceeded"]

CurveKey = Tuple[date, int]


def _line(index: int) -> int:
    return int(index) + 2


def read_table(path: PathLike, columns: Sequence[str], what: str) -> pd.DataFrame:
    """Read a CSV with a required header and parse its date and hour columns"""
    try:
        frame = pd.read_csv(path, dtype={"date": str, "side": str, "model": str})
    except pd.errors.EmptyDataError:
        raise DataValidationError(f"{what} file {path} is empty")
    except pd.errors.ParserError as e:
        raise DataValidationError(f"{what} file {path} is not valid CSV: {e}") from e

    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise DataValidationError(f"{what} file {path} is missing columns {missing}")
    if frame.empty:
        raise DataValidationError(f"{what} file {path} has a header but no rows")
    frame = frame[list(columns)].reset_index(drop=True)

    dates = pd.to_datetime(frame["date"], format="%Y-%m-%d", errors="coerce")
    if dates.isna().any():
        bad = int(np.flatnonzero(dates.isna().to_numpy())[0])
        raise DataValidationError(f"{what} file {path}: invalid date '{frame['date'].iloc[bad]}' on line {_line(bad)}")
    frame["date"] = dates.dt.date

    hours = pd.to_numeric(frame["hour"], errors="coerce")
    bad_hours = hours.isna() | ~hours.isin(list(HOURS))
    if bad_hours.any():
        bad = int(np.flatnonzero(bad_hours.to_numpy())[0])
        raise DataValidationError(f"{what} file {path}: hour '{frame['hour'].iloc[bad]}' on line {_line(bad)} "
                                  f"is not in 1..24")
    frame["hour"] = hours.astype(int)

    for column in columns:
        if column in ("date", "hour", "side", "model", "exceeded"):
            continue
        values = pd.to_numeric(frame[column], errors="coerce")
        if values.isna().any():
            bad = int(np.flatnonzero(values.isna().to_numpy())[0])
            raise DataValidationError(f"{what} file {path}: non-numeric {column} on line {_line(bad)}")
        infinite = np.isinf(values.to_numpy(dtype=float))
        if infinite.any():
            bad = int(np.flatnonzero(infinite)[0])
            raise DataValidationError(f"{what} file {path}: non-finite {column} '{frame[column].iloc[bad]}' "
                                      f"on line {_line(bad)}")
        frame[column] = values.astype(float)
    return frame


def load_curves(path: PathLike, enforce_price_range: bool = True) -> Dict[CurveKey, Dict[Side, StepCurve]]:
    """Bid/ask curves keyed by (date, hour), validated group by group"""
    frame = read_table(path, CURVE_COLUMNS, "curve")
    sides = frame["side"].astype(str).str.strip().str.upper()
    invalid = ~sides.isin([s.value for s in Side])
    if invalid.any():
        bad = int(np.flatnonzero(invalid.to_numpy())[0])
        raise DataValidationError(f"curve file {path}: side '{frame['side'].iloc[bad]}' on line {_line(bad)} "
                                  f"is not BID or ASK")
    frame["side"] = sides

    # Contiguous (date, hour, side) blocks
    keys = list(zip(frame["date"], frame["hour"], frame["side"]))
    block = np.cumsum([True] + [a != b for a, b in zip(keys[1:], keys[:-1])])

    curves: Dict[CurveKey, Dict[Side, StepCurve]] = {}
    for _, rows in frame.groupby(block, sort=False):
        day, hour, side = rows["date"].iloc[0], int(rows["hour"].iloc[0]), Side(rows["side"].iloc[0])
        existing = curves.setdefault((day, hour), {})
        if side in existing:
            logger.warning("Duplicate %s curve for %s hour %d (line %d), keeping the first", side.value, day,
                           hour, _line(rows.index[0]))
            continue
        try:
            existing[side] = StepCurve(side, rows["volume_mwh"].to_numpy(), rows["price_eur"].to_numpy(),
                                       enforce_price_range=enforce_price_range)
        except CurveValidationError as e:
            row = _line(rows.index[e.row]) if e.row is not None else _line(rows.index[0])
            raise CurveValidationError(e.reason, date=day, hour=hour, side=side.value, row=row) from e

    logger.info("Loaded %d curve hours from %s", len(curves), path)
    return curves


def _average_duplicates(frame: pd.DataFrame, what: str) -> pd.DataFrame:
    duplicated = frame.duplicated(["date", "hour"], keep=False)
    if duplicated.any():
        for day, hour in frame.loc[duplicated, ["date", "hour"]].drop_duplicates().itertuples(index=False):
            logger.warning("Duplicate %s rows for %s hour %d averaged into one record", what, day, hour)
        frame = frame.groupby(["date", "hour"], as_index=False, sort=True).mean()
    return frame


def load_observed(path: PathLike) -> pd.DataFrame:
    """Settled prices and volumes; duplicate hours are averaged"""
    return _average_duplicates(read_table(path, OBSERVED_COLUMNS, "observed"), "observed")


def load_forecasts(path: PathLike) -> pd.DataFrame:
    """Point price forecasts; duplicate hours are averaged"""
    return _average_duplicates(read_table(path, FORECAST_COLUMNS, "forecast"), "forecast")


def load_dataset(curves_path: Optional[PathLike] = None, observed_path: Optional[PathLike] = None,
                 forecasts_path: Optional[PathLike] = None, enforce_price_range: bool = True) -> MarketDataset:
    """Merge curve, observation and forecast files into one dataset"""
    fields: Dict[CurveKey, dict] = {}
    if curves_path is not None:
        for key, sides in load_curves(curves_path, enforce_price_range).items():
            fields.setdefault(key, {}).update(bid=sides.get(Side.BID), ask=sides.get(Side.ASK))
    if observed_path is not None:
        for row in load_observed(observed_path).itertuples(index=False):
            fields.setdefault((row.date, row.hour), {}).update(price=row.price_eur, volume=row.volume_mwh)
    if forecasts_path is not None:
        for row in load_forecasts(forecasts_path).itertuples(index=False):
            fields.setdefault((row.date, row.hour), {})["p_hat"] = row.p_hat_eur

    return MarketDataset.from_records(HourRecord(day, hour, **values) for (day, hour), values in fields.items())


def curves_frame(dataset: MarketDataset) -> pd.DataFrame:
    rows = []
    for record in dataset:
        for side, curve in ((Side.BID, record.bid), (Side.ASK, record.ask)):
            if curve is None:
                continue
            for volume, price in zip(curve.volumes, curve.prices):
                rows.append((record.date.isoformat(), record.hour, side.value, float(volume), float(price)))
    return pd.DataFrame(rows, columns=CURVE_COLUMNS)


def observed_frame(dataset: MarketDataset) -> pd.DataFrame:
    rows = [(r.date.isoformat(), r.hour, r.price, r.volume) for r in dataset
            if r.price is not None and r.volume is not None]
    return pd.DataFrame(rows, columns=OBSERVED_COLUMNS)


def forecasts_input_frame(dataset: MarketDataset) -> pd.DataFrame:
    rows = [(r.date.isoformat(), r.hour, r.p_hat) for r in dataset if r.p_hat is not None]
    return pd.DataFrame(rows, columns=FORECAST_COLUMNS)


def write_dataset(dataset: MarketDataset, curves_path: PathLike, observed_path: PathLike,
                  forecasts_path: PathLike) -> None:
    """Write the three input files consumed by the backtest"""
    write_frame(curves_frame(dataset), curves_path)
    write_frame(observed_frame(dataset), observed_path)
    write_frame(forecasts_input_frame(dataset), forecasts_path)


def residuals_frame(residuals: Iterable[VolumeResidual]) -> pd.DataFrame:
    rows = [(r.date.isoformat(), r.hour, r.e, r.delta_plus, r.p_hat) for r in residuals]
    return pd.DataFrame(rows, columns=RESIDUAL_COLUMNS)


def load_residuals(path: PathLike) -> List[VolumeResidual]:
    frame = read_table(path, RESIDUAL_COLUMNS, "residual")
    return [VolumeResidual(row.date, row.hour, row.e_mwh, row.delta_plus_mwh, row.p_hat_eur)
            for row in frame.itertuples(index=False)]


def load_scores(path: PathLike) -> pd.DataFrame:
    """Score table as written by the backtest"""
    frame = read_table(path, SCORE_TABLE_COLUMNS, "score")
    frame["model"] = frame["model"].astype(str)
    return frame


def write_frame(frame: pd.DataFrame, path: PathLike) -> Path:
    """Write a table as UTF-8 CSV without the index"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, encoding="utf-8")
    logger.debug("Wrote %d rows to %s", len(frame), path)
    return path
