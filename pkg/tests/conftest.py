"""
Shared fixtures: toy curves, random curve factories and synthetic markets.
"""

from datetime import timedelta

import numpy as np
import pytest

from pricedress.core.backtest import BacktestPlan, default_first_day, run
from pricedress.core.config import BacktestConfig, ModelConfig, SynthConfig
from pricedress.core.curves import Side, StepCurve
from pricedress.core.synthmarket import generate


@pytest.fixture(autouse=True)
def isolated_config(tmp_path, monkeypatch):
    """Keep the user's ~/.pricedress out of every test"""
    path = tmp_path / "no-such-config.json"
    monkeypatch.setenv("PRICEDRESS_CONFIG", str(path))
    return path


@pytest.fixture
def toy_ask():
    """Ask {(0,10),(100,20),(200,100)} on [0, 250]"""
    return StepCurve.from_points(Side.ASK, [(0, 10), (100, 20), (200, 100)], domain_end=250)


def random_curve(rng: np.random.Generator, side: Side, n: int = 8, start: float = 0.0,
                 domain_pad: float = 50.0) -> StepCurve:
    volumes = start + np.concatenate(([0.0], np.cumsum(rng.uniform(5, 100, size=n - 1))))
    prices = np.sort(rng.choice(np.arange(-50, 300, 5.0), size=n))
    if side is Side.BID:
        prices = prices[::-1]
    return StepCurve(side, volumes, prices, domain_end=volumes[-1] + domain_pad)


@pytest.fixture
def curve_factory():
    return random_curve


@pytest.fixture(scope="session")
def small_market():
    """150 synthetic days: 120 days of warm-up plus 30 forecast days"""
    return generate(SynthConfig(n_days=150, seed=11))


@pytest.fixture(scope="session")
def small_plan_factory(small_market):
    def make(**changes):
        model = ModelConfig()
        first = default_first_day(small_market, model)
        values = dict(dataset=small_market, first_day=first, last_day=first + timedelta(days=9),
                      model_config=model, backtest_config=BacktestConfig())
        values.update(changes)
        return BacktestPlan(**values)
    return make


@pytest.fixture(scope="session")
def calibration_market():
    """600 days of the default heteroscedastic market: kink-regime errors, curve drift and spikes"""
    return generate(SynthConfig(n_days=600, seed=2016))


@pytest.fixture(scope="session")
def calibration_backtest(calibration_market):
    model = ModelConfig()
    start, end = calibration_market.span
    plan = BacktestPlan(calibration_market, default_first_day(calibration_market, model), end,
                        model_config=model, backtest_config=BacktestConfig())
    return run(plan)


@pytest.fixture(scope="session")
def spiky_backtest():
    """Default heteroscedastic market with a 5% spike regime"""
    market = generate(SynthConfig(n_days=600, seed=99, spike_probability=0.05))
    model = ModelConfig()
    start, end = market.span
    plan = BacktestPlan(market, default_first_day(market, model), end, model_config=model,
                        backtest_config=BacktestConfig())
    return run(plan)
