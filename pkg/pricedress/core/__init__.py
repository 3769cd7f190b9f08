"""
Core modules for pricedress

Contains the step-curve algebra, the volume-error model, predictive
distributions, verification scores, the backtest and the synthetic market.
"""

from .config import Config
from .curves import StepCurve, Side
from .dataset import HourRecord, MarketDataset
from .volmodel import VolumeErrorModel, ErrorDistribution

__all__ = ["Config", "StepCurve", "Side", "HourRecord", "MarketDataset", "VolumeErrorModel", "ErrorDistribution"]
