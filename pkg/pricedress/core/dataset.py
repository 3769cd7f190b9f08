import logging
from dataclasses import dataclass, replace
from datetime import date, timedelta
from typing import Dict, Iterator, List, Optional, Tuple

from .curves import StepCurve
from .exceptions import MalformedInputError

logger = logging.getLogger(__name__)

HOURS = range(1, 25)


@dataclass(frozen=True)
class HourRecord:
    """Everything known about one (day, delivery hour)"""
    date: date
    hour: int
    bid: Optional[StepCurve] = None
    ask: Optional[StepCurve] = None
    price: Optional[float] = None  # settled EUR/MWh
    volume: Optional[float] = None  # settled MWh
    p_hat: Optional[float] = None  # point forecast EUR/MWh

    def __post_init__(self):
        if self.hour not in HOURS:
            raise MalformedInputError(f"hour must be in 1..24, got {self.hour}")


class MarketDataset:
    """Immutable collection of hour records keyed by (date, hour)"""

    def __init__(self, records: Dict[Tuple[date, int], HourRecord]):
        self._records = dict(records)
        self._days = sorted({day for day, _ in self._records})

    @classmethod
    def from_records(cls, records) -> "MarketDataset":
        return cls({(r.date, r.hour): r for r in records})

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[HourRecord]:
        for key in sorted(self._records):
            yield self._records[key]

    def __contains__(self, key) -> bool:
        return key in self._records

    @property
    def days(self) -> List[date]:
        return list(self._days)

    @property
    def span(self) -> Tuple[Optional[date], Optional[date]]:
        if not self._days:
            return None, None
        return self._days[0], self._days[-1]

    def get(self, day: date, hour: int) -> Optional[HourRecord]:
        return self._records.get((day, hour))

    def most_recent_ask(self, day: date, hour: int, max_gap_days: int = 7) -> Optional[Tuple[StepCurve, date]]:
        """Latest ask curve for this hour strictly before day, at most max_gap_days back"""
        for lag in range(1, max_gap_days + 1):
            source_day = day - timedelta(days=lag)
            record = self._records.get((source_day, hour))
            if record is not None and record.ask is not None:
                if lag > 1:
                    logger.warning("No ask curve on %s hour %d, using %s (%d days back)",
                                   day - timedelta(days=1), hour, source_day, lag)
                return record.ask, source_day
        logger.warning("No ask curve within %d days before %s hour %d", max_gap_days, day, hour)
        return None

    def with_record(self, record: HourRecord) -> "MarketDataset":
        """Copy of the dataset with one record replaced or added"""
        records = dict(self._records)
        records[(record.date, record.hour)] = record
        return MarketDataset(records)

    def replace_fields(self, day: date, hour: int, **changes) -> "MarketDataset":
        return self.with_record(replace(self._records[(day, hour)], **changes))
