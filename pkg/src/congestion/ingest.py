"""Reading/writing the 27-column trip CSV and the synthetic data generator."""
from __future__ import annotations

import csv
import io
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import BinaryIO, Iterator, Sequence

import numpy as np

from .core_data import (
    METRIC_FAMILIES,
    PERCENTILES,
    TIME_FAMILIES,
    CompassHeading,
    Dataset,
    TripRecord,
    metric_field,
    validate_record,
)
from .errors import ConfigError, RowError, SchemaError

_FAMILY_HEADERS = {
    "total_time_stopped": "TotalTimeStopped",
    "time_from_first_stop": "TimeFromFirstStop",
    "distance_to_first_stop": "DistanceToFirstStop",
}

# (csv header, record field) in canonical order
COLUMNS: tuple[tuple[str, str], ...] = (
    ("RowId", "row_id"),
    ("IntersectionId", "intersection_id"),
    ("City", "city"),
    ("Latitude", "latitude"),
    ("Longitude", "longitude"),
    ("EntryStreetName", "entry_street"),
    ("ExitStreetName", "exit_street"),
    ("EntryHeading", "entry_heading"),
    ("ExitHeading", "exit_heading"),
    ("Hour", "hour"),
    ("Weekend", "weekend"),
    ("Month", "month"),
) + tuple(
    (f"{_FAMILY_HEADERS[fam]}_p{p}", metric_field(fam, p))
    for fam in METRIC_FAMILIES
    for p in PERCENTILES
)
HEADER = tuple(h for h, _ in COLUMNS)
assert len(HEADER) == 27

_INT_FIELDS = {"row_id", "intersection_id", "city", "hour", "month"}
_STREET_FIELDS = {"entry_street", "exit_street"}
_HEADING_FIELDS = {"entry_heading", "exit_heading"}
_TIME_FIELDS = {metric_field(f, p) for f in TIME_FAMILIES for p in PERCENTILES}
UNITS = ("minutes", "seconds")


@contextmanager
def _text_reader(source) -> Iterator[io.TextIOBase]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            yield fh
    elif isinstance(source, io.TextIOBase):
        yield source
    else:
        wrapper = io.TextIOWrapper(source, encoding="utf-8", newline="")
        try:
            yield wrapper
        finally:
            wrapper.detach()


def _parse_cell(name: str, text: str, unit: str):
    if name in _STREET_FIELDS:
        return text if text != "" else None
    if text == "":
        raise ValueError("missing value")
    if name in _INT_FIELDS:
        return int(text)
    if name in _HEADING_FIELDS:
        return CompassHeading.parse(text)
    if name == "weekend":
        lowered = text.strip().lower()
        if lowered in ("1", "true"):
            return True
        if lowered in ("0", "false"):
            return False
        raise ValueError(f"expected 0/1, got {text!r}")
    value = float(text)
    if unit == "seconds" and name in _TIME_FIELDS:
        value = value / 60.0
    return value


def parse_csv(source, unit: str = "minutes") -> Dataset:
    """Parse a trip CSV into a :class:`Dataset`.

    ``source`` may be a path, a binary stream or a text stream. Time metrics
    are stored in minutes; pass ``unit="seconds"`` for data recorded in
    seconds. Invariant violations become warnings on the returned dataset,
    while unparseable cells raise :class:`RowError`.
    """
    if unit not in UNITS:
        raise ConfigError(f"unit must be one of {UNITS}, got {unit!r}")
    name_of = dict(COLUMNS)
    with _text_reader(source) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file: header row missing") from None
        header = [h.strip() for h in header]
        if header and header[0].startswith("﻿"):
            header[0] = header[0][1:]
        for h in header:
            if h not in name_of:
                raise SchemaError(f"unknown column: {h}", column=h)
        for h in HEADER:
            if h not in header:
                raise SchemaError(f"missing column: {h}", column=h)
        if len(set(header)) != len(header):
            dup = next(h for h in header if header.count(h) > 1)
            raise SchemaError(f"duplicate column: {dup}", column=dup)
        positions = [(header.index(h), h, name_of[h]) for h in HEADER]

        records = []
        warnings = []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise RowError(row_no, "*", f"expected {len(header)} cells, got {len(row)}")
            values = {}
            for pos, head, name in positions:
                try:
                    values[name] = _parse_cell(name, row[pos], unit)
                except ValueError as exc:
                    raise RowError(row_no, head, str(exc)) from None
            rec = TripRecord(**values)
            for v in validate_record(rec):
                warnings.append(f"row {row_no}: {v}")
            records.append(rec)
    provenance = str(source) if isinstance(source, (str, os.PathLike)) else "stream"
    return Dataset(tuple(records), provenance=provenance, warnings=tuple(warnings))


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, CompassHeading):
        return value.name
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(dataset: Dataset, sink) -> int:
    """Write ``dataset`` in the canonical layout; returns data rows written."""
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            return write_csv(dataset, fh)
    if not isinstance(sink, io.TextIOBase):
        wrapper = io.TextIOWrapper(sink, encoding="utf-8", newline="")
        try:
            return write_csv(dataset, wrapper)
        finally:
            wrapper.flush()
            wrapper.detach()
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(HEADER)
    names = [name for _, name in COLUMNS]
    n = 0
    for rec in dataset.records:
        writer.writerow([_format(getattr(rec, name)) for name in names])
        n += 1
    return n


# ---------------------------------------------------------------------------
# synthetic data

DEFAULT_CENTERS = (
    (33.7490, -84.3880),
    (42.3601, -71.0589),
    (41.8781, -87.6298),
    (39.9526, -75.1652),
)

_BASE_NAMES = (
    "Peachtree", "Oak", "Maple", "Main", "Washington", "Lincoln", "Market", "Park",
    "Elm", "Cedar", "Pine", "Lake", "Hill", "Spring", "Church", "Franklin",
    "Madison", "Jefferson", "Monroe", "Adams", "Jackson", "Walnut", "Chestnut", "Spruce",
    "River", "Bridge", "Mill", "Union", "Center", "Highland", "Ridge", "Forest",
    "Harbor", "Summer", "Winter", "Grand", "Liberty", "College", "School", "Railroad",
)
_SUFFIXES = (
    "Street", "St", "Lane", "Ln", "Boulevard", "Blvd", "Broad", "Drive", "Dr",
    "Avenue", "Ave", "Road", "Rd", "Way", "Place", "Pl", "Court", "Ct", "Parkway", "Pkwy",
)

# fixed ordered multipliers applied to the p50 draw, one tuple per metric family
PERCENTILE_FACTORS = {
    "total_time_stopped": (0.3, 0.7, 1.0, 1.3, 2.0),
    "time_from_first_stop": (0.45, 1.05, 1.5, 1.95, 3.0),
    "distance_to_first_stop": (3.0, 7.0, 10.0, 13.0, 20.0),
}

DEFAULT_SIGNAL = {"intercept": 4.0, "hour": 6.0, "weekend": -3.0, "month": 2.0, "downtown": 5.0}


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for :func:`generate_synthetic`.

    The p50 stopped time of a non-zero row is
    ``intercept + hour*h/23 + weekend*w + month*m/12 + downtown*(1 - r/R)``
    plus lognormal noise ``exp(N(noise_log_mean, noise_log_sigma))``, where
    ``r/R`` is the intersection's fractional distance from its city center.
    """

    n_cities: int = 4
    intersections_per_city: tuple[int, ...] = (973, 377, 1800, 1650)
    rows: int = 50_000
    street_missing_rate: float = 0.01
    zero_inflation: float = 0.7
    city_centers: tuple[tuple[float, float], ...] = DEFAULT_CENTERS
    city_radius_deg: float = 0.15
    seed: int = 42
    signal: dict = field(default_factory=lambda: dict(DEFAULT_SIGNAL))
    noise_log_mean: float = 1.5
    noise_log_sigma: float = 1.0
    streets_per_city: int = 120

    def check(self) -> None:
        if self.n_cities < 1:
            raise ConfigError("n_cities must be >= 1")
        if len(self.intersections_per_city) != self.n_cities:
            raise ConfigError("len(intersections_per_city) must equal n_cities")
        if len(self.city_centers) < self.n_cities:
            raise ConfigError("need one city center per city")
        if any(n < 1 for n in self.intersections_per_city):
            raise ConfigError("every city needs at least one intersection")
        for name in ("street_missing_rate", "zero_inflation"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.city_radius_deg <= 0:
            raise ConfigError("city_radius_deg must be positive")
        if self.rows < sum(self.intersections_per_city):
            raise ConfigError("rows must be >= total intersection count (each intersection appears once)")
        if self.streets_per_city < 4:
            raise ConfigError("streets_per_city must be >= 4")
        unknown = set(self.signal) - set(DEFAULT_SIGNAL)
        if unknown:
            raise ConfigError(f"unknown signal terms: {sorted(unknown)}")
        if self.noise_log_sigma < 0:
            raise ConfigError("noise_log_sigma must be >= 0")


def _street_pools(rng: np.random.Generator, n_cities: int, size: int) -> list[list[str]]:
    catalog = [f"{b} {s}" for b in _BASE_NAMES for s in _SUFFIXES]
    size = min(size, len(catalog))
    return [[catalog[i] for i in rng.choice(len(catalog), size=size, replace=False)] for _ in range(n_cities)]


def generate_synthetic(config: SynthConfig = SynthConfig()) -> Dataset:
    """Deterministic synthetic trip data shaped like the four-city dataset."""
    config.check()
    rng = np.random.default_rng(config.seed)
    counts = np.asarray(config.intersections_per_city, dtype=np.int64)
    m = int(counts.sum())
    inter_city = np.repeat(np.arange(config.n_cities), counts)

    centers = np.asarray(config.city_centers[: config.n_cities], dtype=np.float64)
    theta = rng.uniform(0.0, 2.0 * np.pi, m)
    frac = np.sqrt(rng.uniform(0.0, 1.0, m))
    radius = config.city_radius_deg * frac
    lat = centers[inter_city, 0] + radius * np.sin(theta)
    lon = centers[inter_city, 1] + radius * np.cos(theta)

    pools = _street_pools(rng, config.n_cities, config.streets_per_city)
    n_streets = rng.integers(2, 5, m)
    inter_streets = [
        [pools[c][j] for j in rng.choice(len(pools[c]), size=k, replace=False)]
        for c, k in zip(inter_city, n_streets)
    ]

    n = config.rows
    which = np.concatenate([np.arange(m), rng.integers(0, m, n - m)])
    which = rng.permutation(which)
    entry_pick = rng.integers(0, 1 << 30, n) % n_streets[which]
    exit_pick = rng.integers(0, 1 << 30, n) % n_streets[which]
    entry_heading = rng.integers(0, 8, n)
    exit_heading = rng.integers(0, 8, n)
    hour = rng.integers(0, 24, n)
    weekend = rng.random(n) < 2.0 / 7.0
    month = rng.integers(1, 13, n)
    entry_missing = rng.random(n) < config.street_missing_rate
    exit_missing = rng.random(n) < config.street_missing_rate
    is_zero = rng.random(n) < config.zero_inflation
    noise = np.exp(rng.normal(config.noise_log_mean, config.noise_log_sigma, n))

    sig = {**{k: 0.0 for k in DEFAULT_SIGNAL}, **config.signal}
    signal = (
        sig["intercept"]
        + sig["hour"] * hour / 23.0
        + sig["weekend"] * weekend
        + sig["month"] * month / 12.0
        + sig["downtown"] * (1.0 - frac[which])
    )
    p50 = np.where(is_zero, 0.0, np.maximum(signal + noise, 0.0))

    metrics = {}
    for fam in METRIC_FAMILIES:
        for p, factor in zip(PERCENTILES, PERCENTILE_FACTORS[fam]):
            metrics[metric_field(fam, p)] = np.round(p50 * factor, 3)

    for fam in METRIC_FAMILIES:
        stacked = np.stack([metrics[metric_field(fam, p)] for p in PERCENTILES])
        if np.any(np.diff(stacked, axis=0) < 0) or np.any(stacked < 0):
            raise AssertionError(f"generator violated percentile monotonicity in {fam}")

    headings = list(CompassHeading)
    records = []
    for i in range(n):
        ix = int(which[i])
        streets = inter_streets[ix]
        records.append(
            TripRecord(
                row_id=i,
                intersection_id=ix,
                city=int(inter_city[ix]),
                latitude=float(lat[ix]),
                longitude=float(lon[ix]),
                entry_street=None if entry_missing[i] else streets[entry_pick[i]],
                exit_street=None if exit_missing[i] else streets[exit_pick[i]],
                entry_heading=headings[entry_heading[i]],
                exit_heading=headings[exit_heading[i]],
                hour=int(hour[i]),
                weekend=bool(weekend[i]),
                month=int(month[i]),
                **{k: float(v[i]) for k, v in metrics.items()},
            )
        )
    return Dataset(tuple(records), provenance=f"synthetic seed={config.seed}")


def synthetic_weather(config: SynthConfig = SynthConfig()) -> list[tuple[int, int, float, float]]:
    """A (city, month, rain_pct, snow_pct) table independent of the trip target."""
    rng = np.random.default_rng([config.seed, 1])
    rows = []
    for city in range(config.n_cities):
        for month in range(1, 13):
            winter = month in (12, 1, 2, 3)
            rain = round(float(rng.uniform(5.0, 45.0)), 2)
            snow = round(float(rng.uniform(0.0, 30.0)), 2) if winter else 0.0
            rows.append((city, month, rain, snow))
    return rows


def synthetic_geo(config: SynthConfig = SynthConfig()):
    from .features import CityGeo

    return [
        CityGeo(city=c, downtown=tuple(config.city_centers[c]), outskirts_radius_km=None)
        for c in range(config.n_cities)
    ]


def write_weather_csv(rows: Sequence[tuple[int, int, float, float]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["city", "month", "rain_pct", "snow_pct"])
        for city, month, rain, snow in rows:
            w.writerow([city, month, repr(float(rain)), repr(float(snow))])


def read_weather_csv(path) -> list[tuple[int, int, float, float]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"city", "month", "rain_pct", "snow_pct"}
        if reader.fieldnames is None or set(reader.fieldnames) != need:
            raise SchemaError(f"weather header must be {sorted(need)}, got {reader.fieldnames}")
        out = []
        for i, row in enumerate(reader, start=1):
            try:
                out.append((int(row["city"]), int(row["month"]), float(row["rain_pct"]), float(row["snow_pct"])))
            except ValueError as exc:
                raise RowError(i, "?", str(exc)) from None
        return out


def write_geo_csv(geo, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["city", "downtown_lat", "downtown_lon", "outskirts_radius_km"])
        for g in geo:
            radius = "" if g.outskirts_radius_km is None else repr(float(g.outskirts_radius_km))
            w.writerow([g.city, repr(float(g.downtown[0])), repr(float(g.downtown[1])), radius])


def read_geo_csv(path):
    from .features import CityGeo

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"city", "downtown_lat", "downtown_lon", "outskirts_radius_km"}
        if reader.fieldnames is None or set(reader.fieldnames) != need:
            raise SchemaError(f"geo header must be {sorted(need)}, got {reader.fieldnames}")
        out = []
        for i, row in enumerate(reader, start=1):
            try:
                radius = row["outskirts_radius_km"].strip()
                out.append(
                    CityGeo(
                        city=int(row["city"]),
                        downtown=(float(row["downtown_lat"]), float(row["downtown_lon"])),
                        outskirts_radius_km=float(radius) if radius else None,
                    )
                )
            except ValueError as exc:
                raise RowError(i, "?", str(exc)) from None
        return out
