"""
Volume residuals and the regime-switched Gaussian volume-error model

Residuals are e = v_hat - v with v_hat the ask-curve inverse of the point
forecast. Their spread is modeled per hour over a trailing window when the
delta+ feature is large (tail regime) and through a k-nearest-neighbor window
in sorted delta+ order when it is small (kink regime).
"""

import logging
from dataclasses import dataclass
from datetime import date, timedelta
from enum import Enum
from typing import Iterable, List, Optional, Tuple

import numpy as np
from scipy import stats

from .config import ModelConfig
from .curves import delta_features, inverse
from .dataset import HourRecord
from .exceptions import InsufficientHistoryError, MalformedInputError

logger = logging.getLogger(__name__)


class Regime(str, Enum):
    KINK = "Kink"
    TAIL = "Tail"


@dataclass(frozen=True)
class VolumeResidual:
    date: date
    hour: int
    e: float  # MWh, v_hat - v
    delta_plus: float  # MWh
    p_hat: float  # EUR/MWh


@dataclass(frozen=True)
class ErrorDistribution:
    """Gaussian law of the volume residual e = v_hat - v"""
    mu: float
    sigma: float
    regime: Regime

    def __post_init__(self):
        if not (np.isfinite(self.mu) and np.isfinite(self.sigma) and self.sigma > 0):
            raise MalformedInputError(
                f"error distribution needs finite mu and sigma > 0, got ({self.mu}, {self.sigma})")

    def cdf(self, x):
        return stats.norm.cdf(x, loc=self.mu, scale=self.sigma)

    def ppf(self, q):
        return stats.norm.ppf(q, loc=self.mu, scale=self.sigma)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.normal(self.mu, self.sigma, size=n)


class ResidualTable:
    """Immutable columnar residual table sorted by (date, hour)"""

    def __init__(self, days, hours, e, delta_plus, p_hat):
        days = np.asarray(days, dtype=np.int64)
        hours = np.asarray(hours, dtype=np.int64)
        order = np.lexsort((hours, days))
        self.days = days[order]
        self.hours = hours[order]
        self.e = np.asarray(e, dtype=float)[order]
        self.delta_plus = np.asarray(delta_plus, dtype=float)[order]
        self.p_hat = np.asarray(p_hat, dtype=float)[order]
        for column in (self.days, self.hours, self.e, self.delta_plus, self.p_hat):
            column.setflags(write=False)

    @classmethod
    def from_residuals(cls, residuals: Iterable[VolumeResidual]) -> "ResidualTable":
        rows = list(residuals)
        return cls(
            [r.date.toordinal() for r in rows],
            [r.hour for r in rows],
            [r.e for r in rows],
            [r.delta_plus for r in rows],
            [r.p_hat for r in rows],
        )

    def __len__(self) -> int:
        return len(self.e)

    def _subset(self, mask_or_slice) -> "ResidualTable":
        return ResidualTable(self.days[mask_or_slice], self.hours[mask_or_slice], self.e[mask_or_slice],
                             self.delta_plus[mask_or_slice], self.p_hat[mask_or_slice])

    def before(self, asof_day: date) -> "ResidualTable":
        """Residuals dated strictly before asof_day"""
        stop = int(np.searchsorted(self.days, asof_day.toordinal(), side="left"))
        return self._subset(slice(0, stop))

    def window(self, asof_day: date, window_days: int) -> "ResidualTable":
        """Residuals dated in [asof_day - window_days, asof_day)"""
        start = int(np.searchsorted(self.days, asof_day.toordinal() - window_days, side="left"))
        stop = int(np.searchsorted(self.days, asof_day.toordinal(), side="left"))
        return self._subset(slice(start, stop))

    def for_hour(self, hour: int) -> "ResidualTable":
        return self._subset(self.hours == hour)

    def rows(self) -> List[VolumeResidual]:
        return [
            VolumeResidual(date.fromordinal(int(d)), int(h), float(e), float(dp), float(p))
            for d, h, e, dp, p in zip(self.days, self.hours, self.e, self.delta_plus, self.p_hat)
        ]


def compute_residuals(history: Iterable[HourRecord], m: float = 50.0) -> List[VolumeResidual]:
    """Historical residuals against each record's same-day ask curve"""
    residuals = []
    skipped = 0
    for record in history:
        if record.ask is None or record.volume is None or record.p_hat is None:
            skipped += 1
            logger.warning("Skipping residual for %s hour %d: missing %s", record.date, record.hour,
                           "ask curve" if record.ask is None else
                           "settled volume" if record.volume is None else "point forecast")
            continue
        v_hat = inverse(record.ask, record.p_hat).volume
        feature = delta_features(record.ask, record.p_hat, m)
        residuals.append(VolumeResidual(record.date, record.hour, v_hat - record.volume,
                                        feature.delta_plus, float(record.p_hat)))
    if skipped:
        logger.info("Computed %d residuals, skipped %d incomplete records", len(residuals), skipped)
    return residuals


def _as_table(residuals) -> ResidualTable:
    if isinstance(residuals, ResidualTable):
        return residuals
    return ResidualTable.from_residuals(residuals)


def _sample_moments(values: np.ndarray) -> Tuple[float, float]:
    return float(np.mean(values)), float(np.std(values, ddof=1))


def fit_tail_moments(residuals, hour: int, asof_day: date, window_days: int = 120,
                     min_count: int = 2) -> Tuple[float, float]:
    """Sample mean and std of one hour's residuals over the trailing window"""
    table = _as_table(residuals).window(asof_day, window_days).for_hour(hour)
    if len(table) < min_count:
        raise InsufficientHistoryError(
            f"tail moments for hour {hour} before {asof_day} over {window_days} days",
            required=min_count, available=len(table),
        )
    return _sample_moments(table.e)


class DeltaPlusIndex:
    """Residuals in stable (delta+, date, hour) order for neighbor-window lookups"""

    def __init__(self, table: ResidualTable):
        order = np.lexsort((table.hours, table.days, table.delta_plus))
        self.delta_plus = table.delta_plus[order]
        self.e = table.e[order]

    def __len__(self) -> int:
        return len(self.e)

    def window_start(self, position: int, k: int) -> int:
        """Start of the k-window centered on position, shifted inward at the ends"""
        return int(np.clip(position - k // 2, 0, len(self) - k))

    def moments(self, query_delta_plus: float, k: int) -> Tuple[float, float]:
        if k < 2:
            raise MalformedInputError(f"k must be at least 2, got {k}")
        if len(self) < k:
            raise InsufficientHistoryError("kNN moments", required=k, available=len(self))
        position = int(np.searchsorted(self.delta_plus, query_delta_plus, side="left"))
        start = self.window_start(position, k)
        return _sample_moments(self.e[start:start + k])


def fit_knn_moments(residuals, query_delta_plus: float, k: int = 100,
                    asof_day: Optional[date] = None) -> Tuple[float, float]:
    """Sample mean and std of the k residuals nearest to the query in delta+ rank"""
    table = _as_table(residuals)
    if asof_day is not None:
        table = table.before(asof_day)
    return DeltaPlusIndex(table).moments(query_delta_plus, k)


class VolumeErrorModel:
    """Regime-switched volume-error model fitted as of one forecast day"""

    def __init__(self, config: ModelConfig, residuals, asof_day: date):
        self.config = config
        self.asof_day = asof_day
        self.past = _as_table(residuals).before(asof_day)
        pool = self.past
        if config.knn_kink_only:
            pool = pool._subset(pool.delta_plus <= config.delta0)
        self.index = DeltaPlusIndex(pool)

    def error_distribution(self, hour: int, delta_plus_pred: float) -> ErrorDistribution:
        if delta_plus_pred > self.config.delta0:
            regime = Regime.TAIL
            mu, sigma = fit_tail_moments(self.past, hour, self.asof_day,
                                         self.config.tail_window_days, self.config.min_tail_count)
        else:
            regime = Regime.KINK
            mu, sigma = self.index.moments(delta_plus_pred, self.config.knn)

        if sigma < self.config.sigma_floor:
            logger.warning("Volume error sigma %.3g below floor for %s hour %d (%s regime), using %.3g",
                           sigma, self.asof_day, hour, regime.value, self.config.sigma_floor)
            sigma = self.config.sigma_floor
        return ErrorDistribution(mu=mu, sigma=sigma, regime=regime)


def error_distribution(config: ModelConfig, residuals, asof_day: date, hour: int,
                       delta_plus_pred: float) -> ErrorDistribution:
    """Tail moments when delta+ exceeds delta0, kNN moments otherwise"""
    return VolumeErrorModel(config, residuals, asof_day).error_distribution(hour, delta_plus_pred)


def knn_diagnostic_curve(residuals, k: int = 500) -> List[Tuple[float, float, float]]:
    """Moving k-neighbor mean and std of residuals along sorted delta+"""
    index = DeltaPlusIndex(_as_table(residuals))
    n = len(index)
    if k < 2:
        raise MalformedInputError(f"k must be at least 2, got {k}")
    if n < k:
        raise InsufficientHistoryError("kNN diagnostic curve", required=k, available=n)

    windows = np.lib.stride_tricks.sliding_window_view(index.e, k)
    means = windows.mean(axis=1)
    stds = windows.std(axis=1, ddof=1)
    starts = np.clip(np.arange(n) - k // 2, 0, n - k)
    return [(float(dp), float(means[s]), float(stds[s])) for dp, s in zip(index.delta_plus, starts)]
