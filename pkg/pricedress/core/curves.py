"""
Bid/ask step curves

Curves are right-continuous, piecewise-constant maps from cumulative volume
(MWh) to price (EUR/MWh). For v in [volume_i, volume_{i+1}) the curve value
is price_i, and the curve is defined on [volume_0, domain_end].
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import CurveValidationError, DisjointDomainsError, MalformedInputError

PRICE_FLOOR = -500.0
PRICE_CAP = 3000.0

ArrayLike = Union[float, Sequence[float], np.ndarray]


class Side(str, Enum):
    BID = "BID"
    ASK = "ASK"


class Inverse(NamedTuple):
    volume: float
    clamped: bool


@dataclass(frozen=True)
class Settlement:
    volume: float
    price: float
    gap: float


@dataclass(frozen=True)
class CurveFeature:
    delta_plus: float
    delta_minus: float
    m: float
    clamped: bool


@dataclass(frozen=True, eq=False)
class StepCurve:
    """Monotone step curve for one market side and one delivery hour"""
    side: Side
    volumes: np.ndarray
    prices: np.ndarray
    domain_end: Optional[float] = None
    enforce_price_range: bool = field(default=True, repr=False)

    def __post_init__(self):
        side = Side(self.side)
        volumes = np.array(self.volumes, dtype=float)
        prices = np.array(self.prices, dtype=float)
        object.__setattr__(self, "side", side)

        if volumes.ndim != 1 or volumes.shape != prices.shape:
            raise CurveValidationError("volumes and prices must be 1-d arrays of equal length")
        if len(volumes) < 2:
            raise CurveValidationError("a step curve needs at least 2 breakpoints")
        if not (np.all(np.isfinite(volumes)) and np.all(np.isfinite(prices))):
            raise CurveValidationError("curve breakpoints must be finite")
        steps = np.diff(volumes)
        if np.any(steps <= 0):
            row = int(np.argmax(steps <= 0)) + 1
            raise CurveValidationError("volumes must be strictly increasing", side=side.value, row=row)
        if volumes[0] < 0:
            raise CurveValidationError("volumes must be non-negative", side=side.value, row=0)
        if self.enforce_price_range:
            outside = (prices < PRICE_FLOOR) | (prices > PRICE_CAP)
            if np.any(outside):
                row = int(np.argmax(outside))
                raise CurveValidationError(
                    f"price {prices[row]} outside [{PRICE_FLOOR}, {PRICE_CAP}]", side=side.value, row=row
                )
        moves = np.diff(prices)
        wrong_way = moves < 0 if side is Side.ASK else moves > 0
        if np.any(wrong_way):
            row = int(np.argmax(wrong_way)) + 1
            direction = "nondecreasing" if side is Side.ASK else "nonincreasing"
            raise CurveValidationError(f"{side.value.lower()} prices must be {direction}", side=side.value, row=row)

        end = volumes[-1] if self.domain_end is None else float(self.domain_end)
        if not np.isfinite(end) or end < volumes[-1]:
            raise CurveValidationError("domain_end must be finite and not below the last breakpoint")

        volumes.setflags(write=False)
        prices.setflags(write=False)
        object.__setattr__(self, "volumes", volumes)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "domain_end", float(end))

    @classmethod
    def from_points(cls, side: Union[Side, str], points: Sequence[Tuple[float, float]],
                    domain_end: Optional[float] = None, enforce_price_range: bool = True) -> "StepCurve":
        """Build a curve from (volume, price) breakpoints"""
        arr = np.asarray(points, dtype=float).reshape(-1, 2)
        return cls(Side(side), arr[:, 0], arr[:, 1], domain_end, enforce_price_range)

    @property
    def volume_start(self) -> float:
        return float(self.volumes[0])

    @property
    def min_price(self) -> float:
        return float(self.prices.min())

    @property
    def max_price(self) -> float:
        return float(self.prices.max())

    def price_runs(self) -> Tuple[np.ndarray, np.ndarray]:
        """Maximal constant runs: (run start volumes, run price levels)"""
        keep = np.ones(len(self.prices), dtype=bool)
        keep[1:] = self.prices[1:] != self.prices[:-1]
        return self.volumes[keep], self.prices[keep]

    def __call__(self, v: ArrayLike):
        return evaluate(self, v)


def evaluate(curve: StepCurve, v: ArrayLike):
    """Right-continuous step value, clamped outside the volume domain"""
    arr = np.asarray(v, dtype=float)
    if np.any(np.isnan(arr)):
        raise MalformedInputError("cannot evaluate a curve at NaN volume")
    idx = np.searchsorted(curve.volumes, arr, side="right") - 1
    idx = np.clip(idx, 0, len(curve.prices) - 1)
    out = curve.prices[idx]
    if np.ndim(out) == 0:
        return float(out)
    return out


def inverse(curve: StepCurve, p: float) -> Inverse:
    """
    Generalized sup-inverse of a step curve.

    Ask: sup{v : s(v) <= p}; Bid: sup{v : b(v) >= p}. Prices outside the
    curve's range clamp to the domain endpoints and set the clamp flag.
    """
    p = float(p)
    if math.isnan(p):
        raise MalformedInputError("cannot invert a curve at NaN price")

    if curve.side is Side.ASK:
        last = int(np.searchsorted(curve.prices, p, side="right")) - 1
    else:
        last = int(np.searchsorted(-curve.prices, -p, side="right")) - 1

    if last < 0:
        return Inverse(curve.volume_start, True)
    if last >= len(curve.prices) - 1:
        return Inverse(curve.domain_end, True)
    return Inverse(float(curve.volumes[last + 1]), False)


def settle(bid: StepCurve, ask: StepCurve) -> Settlement:
    """Volume minimizing |b(v) - s(v)| over the common domain, smallest on ties"""
    if bid.side is not Side.BID or ask.side is not Side.ASK:
        raise MalformedInputError("settle expects a bid curve and an ask curve")

    lo = max(bid.volume_start, ask.volume_start)
    hi = min(bid.domain_end, ask.domain_end)
    if lo >= hi:
        raise DisjointDomainsError(
            f"bid domain [{bid.volume_start}, {bid.domain_end}] and ask domain "
            f"[{ask.volume_start}, {ask.domain_end}] do not overlap"
        )

    # Both curves are constant between consecutive merged breakpoints
    candidates = np.concatenate(([lo, hi], bid.volumes, ask.volumes))
    candidates = np.unique(candidates[(candidates >= lo) & (candidates <= hi)])
    gaps = np.abs(evaluate(bid, candidates) - evaluate(ask, candidates))
    best = int(np.argmin(gaps))
    volume = float(candidates[best])
    return Settlement(volume=volume, price=evaluate(ask, volume), gap=float(gaps[best]))


def delta_features(ask: StepCurve, p_hat: float, m: float) -> CurveFeature:
    """Volume traversed on the ask curve when the forecast moves by +m and -m"""
    if not m > 0:
        raise MalformedInputError(f"m must be strictly positive, got {m}")
    if ask.side is not Side.ASK:
        raise MalformedInputError("delta features are defined on the ask curve")

    center = inverse(ask, p_hat)
    up = inverse(ask, p_hat + m)
    down = inverse(ask, p_hat - m)
    return CurveFeature(
        delta_plus=abs(up.volume - center.volume),
        delta_minus=abs(down.volume - center.volume),
        m=float(m),
        clamped=center.clamped or up.clamped or down.clamped,
    )
