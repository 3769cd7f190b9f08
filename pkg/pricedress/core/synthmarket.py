"""
Synthetic day-ahead market

Generates ask curves that are flat with a steep end, near-vertical bid curves
around a stochastic demand level, settlements through `curves.settle`, and
point forecasts whose implied volume errors follow a known Gaussian law that
depends on the delta+ feature. `truth_moments` exposes that law so estimator
and calibration tests have an exact oracle.
"""

import logging
from datetime import date, timedelta
from typing import List, Tuple

import numpy as np

from .config import SynthConfig
from .curves import PRICE_FLOOR, Side, StepCurve, delta_features, evaluate, inverse, settle
from .dataset import HOURS, HourRecord, MarketDataset

logger = logging.getLogger(__name__)


def truth_moments(config: SynthConfig, delta_plus: float) -> Tuple[float, float]:
    """True mean and std of the residual e = v_hat - v at a given delta+"""
    if delta_plus > config.delta0:
        return 0.0, config.tail_sigma
    ratio = max(delta_plus, 0.0) / config.delta0
    sigma = config.kink_sigma + (config.tail_sigma - config.kink_sigma) * ratio
    mu = config.kink_mean * (1.0 - ratio)
    return mu, sigma


def ask_shape(config: SynthConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Breakpoints of the base ask curve: linear flat region, power-law steep tail"""
    volumes = np.linspace(config.volume_start, config.volume_end, config.n_steps + 1)
    flat_share = (np.minimum(volumes, config.kink_volume) - config.volume_start) / (
        config.kink_volume - config.volume_start)
    tail_share = np.clip((volumes - config.kink_volume) / (config.volume_end - config.kink_volume), 0.0, 1.0)
    prices = np.where(
        volumes <= config.kink_volume,
        config.price_start + (config.flat_price - config.price_start) * flat_share,
        config.flat_price + (config.price_cap - config.flat_price) * tail_share ** config.tail_exponent,
    )
    # Exchange prices are quoted in cents
    prices = np.maximum.accumulate(np.round(prices, 2))
    return volumes, prices


def demand_profile(config: SynthConfig, day: date, ar_level: float) -> np.ndarray:
    """Seasonal plus autoregressive demand for the 24 hours of one day"""
    hours = np.arange(1, 25)
    daily = config.daily_amplitude * np.cos(2 * np.pi * (hours - 18) / 24)
    weekly = config.weekly_amplitude * np.cos(2 * np.pi * day.weekday() / 7)
    annual = config.annual_amplitude * np.cos(2 * np.pi * (day.timetuple().tm_yday - 15) / 365.25)
    return config.demand_level + daily + weekly + annual + ar_level


def _ar_path(config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    phi = config.ar_coefficient
    shocks = rng.normal(0.0, config.ar_innovation_sd, size=config.n_days)
    path = np.empty(config.n_days)
    level = shocks[0] / np.sqrt(1 - phi ** 2) if config.n_days else 0.0
    for i in range(config.n_days):
        if i > 0:
            level = phi * level + shocks[i]
        path[i] = level
    return path


def _generate_day(config: SynthConfig, day: date, ar_level: float, seq: np.random.SeedSequence,
                  base_volumes: np.ndarray, base_prices: np.ndarray) -> List[HourRecord]:
    rng = np.random.default_rng(seq)
    demand = demand_profile(config, day, ar_level)
    spikes = rng.random(24) < config.spike_probability
    shifts = rng.normal(0.0, config.curve_shift_sd, size=24) if config.curve_shift_sd > 0 else np.zeros(24)
    noise = rng.standard_normal(24)

    records = []
    for i, hour in enumerate(HOURS):
        ask = StepCurve(Side.ASK, base_volumes + shifts[i], base_prices)
        lo, hi = ask.volume_start + 1.0, ask.domain_end - 2.0

        forecast_volume = float(np.clip(demand[i] + (config.spike_magnitude if spikes[i] else 0.0), lo, hi))
        p_hat = evaluate(ask, forecast_volume)
        v_hat = inverse(ask, p_hat).volume
        mu, sigma = truth_moments(config, delta_features(ask, p_hat, config.m).delta_plus)
        true_volume = float(np.clip(v_hat - (mu + sigma * noise[i]), lo, hi))

        # Near-vertical demand crossing the ask curve exactly at the true volume
        bid = StepCurve(
            Side.BID,
            [ask.volume_start, true_volume, true_volume + 1.0],
            [config.price_cap, evaluate(ask, true_volume), PRICE_FLOOR],
            domain_end=ask.domain_end,
        )
        settlement = settle(bid, ask)
        records.append(HourRecord(day, hour, bid=bid, ask=ask, price=settlement.price,
                                  volume=settlement.volume, p_hat=p_hat))
    return records


def generate(config: SynthConfig) -> MarketDataset:
    """Deterministic synthetic dataset of curves, settlements and point forecasts"""
    start = date.fromisoformat(config.start_date)
    base_volumes, base_prices = ask_shape(config)

    # One child seed for the demand path, one per day for everything else
    ar_seq, *day_seqs = np.random.SeedSequence(config.seed).spawn(config.n_days + 1)
    ar_levels = _ar_path(config, np.random.default_rng(ar_seq))

    records = []
    for i in range(config.n_days):
        day = start + timedelta(days=i)
        records.extend(_generate_day(config, day, ar_levels[i], day_seqs[i], base_volumes, base_prices))
    logger.info("Generated %d synthetic days (%d hour records) from seed %d", config.n_days, len(records),
                config.seed)
    return MarketDataset.from_records(records)
