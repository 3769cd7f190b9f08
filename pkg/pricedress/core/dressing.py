"""
Predictive price distributions

The bid/ask model pushes a Gaussian volume residual through the ask curve,
which yields an atomic distribution on the curve's price levels. The two
benchmarks dress the point forecast with pooled historical price residuals,
either through a Gaussian or through the empirical residual set.
"""

import logging
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .curves import Side, StepCurve, evaluate, inverse
from .exceptions import InsufficientHistoryError, MalformedInputError
from .volmodel import ErrorDistribution

logger = logging.getLogger(__name__)

MASS_TOLERANCE = 1e-12
# sigma above this many MWh with all mass on one level is reported as degenerate
DEGENERATE_SIGMA = 1.0


class DistributionKind(str, Enum):
    PUSHFORWARD = "Pushforward"
    GAUSSIAN = "Gaussian"
    EMPIRICAL = "Empirical"


class PricePredictiveDistribution:
    """Common interface of every predictive price distribution"""

    kind: DistributionKind

    def cdf(self, x):
        raise NotImplementedError

    def cdf_left(self, x):
        """P(X < x)"""
        raise NotImplementedError

    def quantile(self, tau):
        raise NotImplementedError

    def sample(self, n: int, seed=None) -> np.ndarray:
        raise NotImplementedError

    def exceedance(self, threshold: float) -> float:
        """Strict exceedance probability Pr{X > threshold}"""
        return float(1.0 - self.cdf(threshold))


def _check_tau(tau):
    arr = np.asarray(tau, dtype=float)
    if np.any(~((arr > 0) & (arr < 1))):
        raise MalformedInputError(f"quantile level must lie in (0, 1), got {tau}")
    return arr


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


class AtomicDistribution(PricePredictiveDistribution):
    """Finite distribution on sorted, distinct price levels"""

    def __init__(self, kind: DistributionKind, levels: np.ndarray, masses: np.ndarray):
        levels = np.asarray(levels, dtype=float)
        masses = np.clip(np.asarray(masses, dtype=float), 0.0, None)
        total = masses.sum()
        if len(levels) == 0 or len(levels) != len(masses) or not total > 0:
            raise MalformedInputError("atomic distribution needs matching levels and positive total mass")
        if np.any(np.diff(levels) <= 0):
            raise MalformedInputError("atomic distribution levels must be strictly increasing")
        self.kind = DistributionKind(kind)
        self.levels = levels
        self.masses = masses / total
        self.cumulative = np.cumsum(self.masses)
        self.cumulative[-1] = 1.0
        for array in (self.levels, self.masses, self.cumulative):
            array.setflags(write=False)

    def cdf(self, x):
        idx = np.searchsorted(self.levels, np.asarray(x, dtype=float), side="right")
        out = np.where(idx > 0, self.cumulative[np.maximum(idx - 1, 0)], 0.0)
        return float(out) if np.ndim(out) == 0 else out

    def cdf_left(self, x):
        idx = np.searchsorted(self.levels, np.asarray(x, dtype=float), side="left")
        out = np.where(idx > 0, self.cumulative[np.maximum(idx - 1, 0)], 0.0)
        return float(out) if np.ndim(out) == 0 else out

    def quantile(self, tau):
        """Generalized inverse inf{x : F(x) >= tau}"""
        arr = _check_tau(tau)
        # tolerance stays below tau so leading zero-mass levels are never returned
        idx = np.searchsorted(self.cumulative, arr - np.minimum(MASS_TOLERANCE, arr / 2), side="left")
        out = self.levels[np.minimum(idx, len(self.levels) - 1)]
        return float(out) if np.ndim(out) == 0 else out

    def sample(self, n: int, seed=None) -> np.ndarray:
        if n < 1:
            raise MalformedInputError(f"sample size must be >= 1, got {n}")
        return _rng(seed).choice(self.levels, size=n, p=self.masses)

    def __repr__(self):
        return f"{type(self).__name__}(kind={self.kind.value}, atoms={len(self.levels)})"


class PushforwardDistribution(AtomicDistribution):
    """Law of s(v_hat - e) for a fitted residual law e ~ G"""

    def __init__(self, curve: StepCurve, v_hat: float, error: ErrorDistribution,
                 clamped: bool = False):
        starts, levels = curve.price_runs()
        # Run j covers volumes [starts[j], starts[j+1]); mass outside the domain joins the end levels
        upper = np.append(starts[1:], np.inf)
        lower = np.concatenate(([-np.inf], starts[1:]))
        masses = error.cdf(v_hat - lower) - error.cdf(v_hat - upper)
        super().__init__(DistributionKind.PUSHFORWARD, levels, masses)
        self.curve = curve
        self.v_hat = float(v_hat)
        self.error = error
        self.clamped = clamped
        self.degenerate = bool(self.masses.max() >= 1.0 - MASS_TOLERANCE and error.sigma > DEGENERATE_SIGMA)
        if self.degenerate:
            logger.warning("Degenerate pushforward: one price level carries all mass (sigma=%.1f MWh)",
                           error.sigma)

    def sample(self, n: int, seed=None) -> np.ndarray:
        if n < 1:
            raise MalformedInputError(f"sample size must be >= 1, got {n}")
        residuals = self.error.sample(_rng(seed), n)
        return evaluate(self.curve, self.v_hat - residuals)


class GaussianDistribution(PricePredictiveDistribution):
    """Normal price distribution; sd == 0 is a flagged point mass"""

    kind = DistributionKind.GAUSSIAN

    def __init__(self, mean: float, sd: float):
        if not (np.isfinite(mean) and np.isfinite(sd) and sd >= 0):
            raise MalformedInputError(f"Gaussian needs finite mean and sd >= 0, got ({mean}, {sd})")
        self.mean = float(mean)
        self.sd = float(sd)
        self.degenerate = self.sd == 0.0

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.degenerate:
            out = (x >= self.mean).astype(float)
        else:
            out = stats.norm.cdf(x, loc=self.mean, scale=self.sd)
        return float(out) if np.ndim(out) == 0 else out

    def cdf_left(self, x):
        if self.degenerate:
            out = (np.asarray(x, dtype=float) > self.mean).astype(float)
            return float(out) if np.ndim(out) == 0 else out
        return self.cdf(x)

    def quantile(self, tau):
        arr = _check_tau(tau)
        out = np.full(arr.shape, self.mean) if self.degenerate else stats.norm.ppf(arr, self.mean, self.sd)
        return float(out) if np.ndim(out) == 0 else out

    def sample(self, n: int, seed=None) -> np.ndarray:
        if n < 1:
            raise MalformedInputError(f"sample size must be >= 1, got {n}")
        return _rng(seed).normal(self.mean, self.sd, size=n)

    def __repr__(self):
        return f"GaussianDistribution(mean={self.mean:.3f}, sd={self.sd:.3f})"


def pushforward(ask: StepCurve, v_hat: float, err: ErrorDistribution, clamped: bool = False) -> PushforwardDistribution:
    """Exact price law of ask(v_hat - e), e ~ err"""
    if ask.side is not Side.ASK:
        raise MalformedInputError("the pushforward needs an ask curve")
    if not np.isfinite(v_hat):
        raise MalformedInputError(f"v_hat must be finite, got {v_hat}")
    return PushforwardDistribution(ask, v_hat, err, clamped)


def dress(ask_prev_day: StepCurve, p_hat: float, err: ErrorDistribution) -> PushforwardDistribution:
    """Bid/ask predictive distribution around the point forecast p_hat"""
    v_hat, clamped = inverse(ask_prev_day, p_hat)
    if clamped:
        logger.debug("Forecast %.2f outside the ask curve's price range, v_hat clamped to %.1f", p_hat, v_hat)
    return pushforward(ask_prev_day, v_hat, err, clamped)


def _residual_array(price_residuals: Sequence[float]) -> np.ndarray:
    arr = np.asarray(price_residuals, dtype=float).ravel()
    if np.any(~np.isfinite(arr)):
        raise MalformedInputError("price residuals must be finite")
    return arr


def gaussian_benchmark(p_hat: float, price_residuals: Sequence[float]) -> GaussianDistribution:
    """Gaussian around p_hat with the pooled root-mean-square residual"""
    r = _residual_array(price_residuals)
    if len(r) < 2:
        raise InsufficientHistoryError("Gaussian benchmark", required=2, available=len(r))
    sd = float(np.sqrt(np.sum(r ** 2) / (len(r) - 1)))
    if sd == 0.0:
        logger.warning("Gaussian benchmark spread is zero; forecast degenerates to a point mass")
    return GaussianDistribution(p_hat, sd)


def empirical_benchmark(p_hat: float, price_residuals: Sequence[float],
                        flip_sign: bool = False) -> AtomicDistribution:
    """Uniform atoms at p_hat + r over the residual history (p_hat - r with flip_sign)"""
    r = _residual_array(price_residuals)
    if len(r) < 1:
        raise InsufficientHistoryError("Empirical benchmark", required=1, available=0)
    atoms = p_hat - r if flip_sign else p_hat + r
    levels, counts = np.unique(atoms, return_counts=True)
    return AtomicDistribution(DistributionKind.EMPIRICAL, levels, counts.astype(float))


def cdf(dist: PricePredictiveDistribution, x):
    return dist.cdf(x)


def quantile(dist: PricePredictiveDistribution, tau):
    return dist.quantile(tau)


def sample(dist: PricePredictiveDistribution, n: int, seed=None) -> np.ndarray:
    return dist.sample(n, seed)


def exceedance(dist: PricePredictiveDistribution, threshold: float) -> float:
    return dist.exceedance(threshold)
