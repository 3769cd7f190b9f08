"""
Forecast verification: CRPS, quantile score, randomized PIT, PIT histograms,
reliability diagrams for exceedance events and the paired permutation test.
"""

import logging
from dataclasses import dataclass
from datetime import date
from typing import List, Optional, Sequence

import numpy as np
import properscoring as ps

from .dressing import AtomicDistribution, GaussianDistribution, PricePredictiveDistribution
from .exceptions import LengthMismatchError, MalformedInputError

logger = logging.getLogger(__name__)

# sign flips drawn per batch in the permutation test (resamples x pairs)
PERMUTATION_BATCH_ELEMENTS = 2_000_000


@dataclass(frozen=True)
class ScoreRecord:
    date: date
    hour: int
    model: str
    crps: float
    qs10: float
    qs90: float
    pit: float
    exceed_prob: float
    exceeded: bool


@dataclass(frozen=True)
class ReliabilityBin:
    index: int  # 1-based
    lower: float
    upper: float
    mean_prob: float  # NaN for empty bins
    observed_freq: float  # NaN for empty bins
    count: int

    @property
    def standard_error(self) -> float:
        """Binomial standard error of the observed frequency under calibration"""
        if self.count == 0:
            return float("nan")
        return float(np.sqrt(self.mean_prob * (1.0 - self.mean_prob) / self.count))


@dataclass(frozen=True)
class PermutationResult:
    observed: float
    q025: float
    q975: float
    p_value: float
    n_resamples: int

    @property
    def rejects(self) -> bool:
        return not self.q025 <= self.observed <= self.q975


def crps(dist: PricePredictiveDistribution, p: float) -> float:
    """Exact CRPS of a predictive distribution at the observed price"""
    p = float(p)
    if isinstance(dist, GaussianDistribution):
        if dist.degenerate:
            return abs(p - dist.mean)
        return float(ps.crps_gaussian(p, mu=dist.mean, sig=dist.sd))
    if isinstance(dist, AtomicDistribution):
        # weighted ensemble on the sorted levels integrates the step CDF exactly
        value = ps.crps_ensemble(p, dist.levels, weights=dist.masses, issorted=True)
        return float(max(value, 0.0))
    raise TypeError(f"no CRPS for {type(dist).__name__}")


def crps_piecewise(dist: AtomicDistribution, p: float) -> float:
    """CRPS of an atomic distribution by exact piecewise integration of (F(x) - 1{p < x})^2"""
    knots = np.union1d(dist.levels, [float(p)])
    left = knots[:-1]
    step = np.where(left >= p, 1.0, 0.0)
    heights = dist.cdf(left) - step
    return float(np.sum(heights ** 2 * np.diff(knots)))


def quantile_score(dist: PricePredictiveDistribution, p: float, tau: float) -> float:
    """Pinball loss (p - q)(tau - 1{p <= q}) at the tau-quantile q"""
    if not 0.0 < tau < 1.0:
        raise MalformedInputError(f"tau must lie in (0, 1), got {tau}")
    q = float(dist.quantile(tau))
    return float((p - q) * (tau - (1.0 if p <= q else 0.0)))


def pit(dist: PricePredictiveDistribution, p: float, rng: np.random.Generator) -> float:
    """Randomized PIT, uniform on [F(p-), F(p)]"""
    lo = float(dist.cdf_left(p))
    hi = float(dist.cdf(p))
    if hi <= lo:
        return hi
    return float(lo + rng.uniform() * (hi - lo))


def pit_histogram(pits: Sequence[float], bins: int = 10) -> np.ndarray:
    """Equal-width PIT bin counts on [0, 1]"""
    if bins < 2:
        raise MalformedInputError(f"a PIT histogram needs at least 2 bins, got {bins}")
    counts, _ = np.histogram(np.asarray(pits, dtype=float), bins=bins, range=(0.0, 1.0))
    return counts


def reliability(exceed_probs: Sequence[float], exceeded: Sequence[bool], bins: int = 10,
                min_prob: Optional[float] = None) -> List[ReliabilityBin]:
    """Equal-width reliability bins of forecast exceedance probabilities"""
    probs = np.asarray(exceed_probs, dtype=float)
    hits = np.asarray(exceeded, dtype=bool)
    if probs.shape != hits.shape:
        raise LengthMismatchError("exceedance probabilities and outcomes differ in length")
    if bins < 1:
        raise MalformedInputError(f"bins must be >= 1, got {bins}")
    if min_prob is not None:
        keep = probs > min_prob
        probs, hits = probs[keep], hits[keep]
    if len(probs) == 0:
        return []

    which = np.clip(np.floor(probs * bins).astype(int), 0, bins - 1)
    result = []
    for b in range(bins):
        in_bin = which == b
        count = int(in_bin.sum())
        result.append(ReliabilityBin(
            index=b + 1,
            lower=b / bins,
            upper=(b + 1) / bins,
            mean_prob=float(probs[in_bin].mean()) if count else float("nan"),
            observed_freq=float(hits[in_bin].mean()) if count else float("nan"),
            count=count,
        ))
    return result


def permutation_test(scores_a: Sequence[float], scores_b: Sequence[float], n_resamples: int = 10000,
                     seed=None) -> PermutationResult:
    """Paired permutation test on the mean score difference A - B"""
    a = np.asarray(scores_a, dtype=float)
    b = np.asarray(scores_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatchError(f"paired scores differ in shape: {a.shape} vs {b.shape}")
    if len(a) < 2:
        raise LengthMismatchError(f"need at least 2 paired scores, got {len(a)}")
    if n_resamples < 1:
        raise MalformedInputError(f"n_resamples must be >= 1, got {n_resamples}")

    diff = a - b
    observed = float(diff.mean())
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    # Swapping a pair flips the sign of its difference
    null = np.empty(n_resamples)
    batch = max(1, min(1000, PERMUTATION_BATCH_ELEMENTS // len(diff)))
    for start in range(0, n_resamples, batch):
        size = min(batch, n_resamples - start)
        swapped = rng.random((size, len(diff))) < 0.5
        null[start:start + size] = np.where(swapped, -diff, diff).mean(axis=1)

    q025, q975 = np.quantile(null, [0.025, 0.975])
    tolerance = 1e-12 * max(1.0, float(np.abs(diff).max()))
    p_value = float(np.mean(np.abs(null) >= abs(observed) - tolerance))
    logger.debug("Permutation test: observed %.5f, null [%.5f, %.5f], p=%.4f", observed, q025, q975, p_value)
    return PermutationResult(observed, float(q025), float(q975), p_value, n_resamples)


def score_forecast(dist: PricePredictiveDistribution, p: float, day: date, hour: int, model: str,
                   rng: np.random.Generator, threshold: float = 50.0) -> ScoreRecord:
    """All verification scores of one forecast against its realized price"""
    exceed_prob = dist.exceedance(threshold)
    return ScoreRecord(
        date=day,
        hour=hour,
        model=model,
        crps=crps(dist, p),
        qs10=quantile_score(dist, p, 0.1),
        qs90=quantile_score(dist, p, 0.9),
        pit=pit(dist, p, rng),
        exceed_prob=min(max(exceed_prob, 0.0), 1.0),
        exceeded=bool(p > threshold),
    )
