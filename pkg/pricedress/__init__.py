"""
pricedress - probabilistic day-ahead electricity price forecasts

Point price forecasts are dressed in volume space and pushed through the
published bid/ask step curves:
- Step-curve evaluation, inversion, settlement and delta features
- Regime-switched Gaussian volume-error model (tail window and kNN)
- Exact atomic predictive distributions plus Gaussian and empirical benchmarks
- CRPS, quantile scores, PIT, reliability and permutation tests
- Rolling-origin backtest and a synthetic market for reproducible runs
"""

__version__ = "1.0.0"
__author__ = "pricedress developers"

from .core.config import Config
from .core.curves import StepCurve, Side, evaluate, inverse, settle, delta_features
from .core.dressing import dress, gaussian_benchmark, empirical_benchmark
from .core.backtest import BacktestPlan, run

__all__ = [
    "Config", "StepCurve", "Side", "evaluate", "inverse", "settle", "delta_features",
    "dress", "gaussian_benchmark", "empirical_benchmark", "BacktestPlan", "run",
]
