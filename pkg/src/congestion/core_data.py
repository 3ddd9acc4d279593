"""Record schema, compass headings and the dataset container."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

PERCENTILES = (20, 40, 50, 60, 80)
METRIC_FAMILIES = ("total_time_stopped", "time_from_first_stop", "distance_to_first_stop")
# families measured in time units (converted when the source is in seconds)
TIME_FAMILIES = ("total_time_stopped", "time_from_first_stop")


class CompassHeading(enum.Enum):
    N = 0
    NE = 1
    E = 2
    SE = 3
    S = 4
    SW = 5
    W = 6
    NW = 7

    @property
    def code(self) -> int:
        return self.value

    @classmethod
    def parse(cls, text: str) -> "CompassHeading":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown compass heading {text!r}") from None


def numeric_code(heading: CompassHeading) -> int:
    """Clockwise code, N=0 .. NW=7."""
    return heading.value


def circular_difference(a: CompassHeading, b: CompassHeading) -> int:
    """Clockwise eighth-turns from heading ``a`` to heading ``b``."""
    return (b.value - a.value) % 8


def metric_field(family: str, pct: int) -> str:
    return f"{family}_p{pct}"


@dataclass(frozen=True)
class TripRecord:
    row_id: int
    intersection_id: int
    city: int
    latitude: float
    longitude: float
    entry_street: Optional[str]
    exit_street: Optional[str]
    entry_heading: CompassHeading
    exit_heading: CompassHeading
    hour: int
    weekend: bool
    month: int
    total_time_stopped_p20: float
    total_time_stopped_p40: float
    total_time_stopped_p50: float
    total_time_stopped_p60: float
    total_time_stopped_p80: float
    time_from_first_stop_p20: float
    time_from_first_stop_p40: float
    time_from_first_stop_p50: float
    time_from_first_stop_p60: float
    time_from_first_stop_p80: float
    distance_to_first_stop_p20: float
    distance_to_first_stop_p40: float
    distance_to_first_stop_p50: float
    distance_to_first_stop_p60: float
    distance_to_first_stop_p80: float

    def metric(self, family: str, pct: int) -> float:
        return getattr(self, metric_field(family, pct))


RECORD_FIELDS = tuple(f.name for f in fields(TripRecord))
assert len(RECORD_FIELDS) == 27


def validate_record(record: TripRecord) -> list[str]:
    """Return the names of every invariant ``record`` violates.

    An empty list means the record is valid. Violations are data, so this
    never raises on a structurally well-formed record.
    """
    problems = []
    if record.row_id < 0:
        problems.append("row_id negative")
    if record.intersection_id < 0:
        problems.append("intersection_id negative")
    if not 0 <= record.city <= 3:
        problems.append("city out of range")
    if not (np.isfinite(record.latitude) and -90.0 <= record.latitude <= 90.0):
        problems.append("latitude out of range")
    if not (np.isfinite(record.longitude) and -180.0 <= record.longitude <= 180.0):
        problems.append("longitude out of range")
    if not 0 <= record.hour <= 23:
        problems.append("hour out of range")
    if not 1 <= record.month <= 12:
        problems.append("month out of range")
    for name in ("entry_street", "exit_street"):
        value = getattr(record, name)
        if value is not None and not value.strip():
            problems.append(f"{name} blank")
    for family in METRIC_FAMILIES:
        values = [record.metric(family, p) for p in PERCENTILES]
        if any(not np.isfinite(v) or v < 0 for v in values):
            problems.append(f"{family} negative or non-finite")
        elif any(a > b for a, b in zip(values, values[1:])):
            problems.append(f"percentile monotonicity ({family})")
    return problems


@dataclass(frozen=True)
class Dataset:
    """Ordered trip records plus where they came from.

    Column views (``column``) are computed once and cached; the records
    themselves are never modified.
    """

    records: tuple[TripRecord, ...]
    provenance: str = ""
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not isinstance(self.records, tuple):
            object.__setattr__(self, "records", tuple(self.records))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i: int) -> TripRecord:
        return self.records[i]

    @cached_property
    def _columns(self) -> dict:
        return {}

    def column(self, name: str) -> np.ndarray:
        """Column ``name`` as a numpy array (object dtype for text/enums)."""
        cache = self._columns
        if name not in cache:
            values = [getattr(r, name) for r in self.records]
            if name in ("entry_street", "exit_street", "entry_heading", "exit_heading"):
                arr = np.empty(len(values), dtype=object)
                arr[:] = values
            elif name in ("row_id", "intersection_id", "city", "hour", "month"):
                arr = np.asarray(values, dtype=np.int64)
            elif name == "weekend":
                arr = np.asarray(values, dtype=bool)
            elif name in RECORD_FIELDS:
                arr = np.asarray(values, dtype=np.float64)
            else:
                raise KeyError(f"unknown record column {name!r}")
            arr.setflags(write=False)
            cache[name] = arr
        return cache[name]

    def take(self, indices: Iterable[int]) -> "Dataset":
        """Subset in the given order; row ids keep their original values."""
        recs = self.records
        return Dataset(tuple(recs[int(i)] for i in indices), provenance=f"subset of {self.provenance}")

    def intersections(self) -> dict[int, tuple[int, float, float]]:
        """intersection_id -> (city, latitude, longitude), first occurrence wins."""
        out: dict[int, tuple[int, float, float]] = {}
        for r in self.records:
            if r.intersection_id not in out:
                out[r.intersection_id] = (r.city, r.latitude, r.longitude)
        return out


def validate_dataset(dataset: Dataset) -> list[str]:
    """Dataset-level invariants: contiguous row ids, consistent intersections."""
    problems = []
    ids = [r.row_id for r in dataset.records]
    if ids != list(range(len(ids))):
        problems.append("row_id not contiguous from 0")
    seen: dict[int, tuple[int, float, float]] = {}
    for r in dataset.records:
        key = (r.city, r.latitude, r.longitude)
        prev = seen.setdefault(r.intersection_id, key)
        if prev != key:
            problems.append(f"intersection {r.intersection_id} has inconsistent city/location")
            seen[r.intersection_id] = key
    return problems


def target_vector(dataset: Dataset, target: str = "total_time_stopped_p50") -> np.ndarray:
    return np.array(dataset.column(target), dtype=np.float64)


def summarize_violations(records: Sequence[TripRecord]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for r in records:
        for v in validate_record(r):
            counts[v] = counts.get(v, 0) + 1
    return dict(sorted(counts.items()))
