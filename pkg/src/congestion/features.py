"""Engineered features and the fitted column transform.

Derived sources (besides the raw record columns):

    entry_count, exit_count, exit_minus_entry   distinct streets per intersection
    entry_code, exit_code, turn                 compass codes and clockwise turn
    entry_road_type, exit_road_type             street-suffix category
    downtown_km, outskirts_km                   haversine distances
    rain_pct, snow_pct                          (city, month) weather lookup
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .core_data import RECORD_FIELDS, CompassHeading, Dataset, TripRecord, circular_difference
from .errors import ConfigError

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0
UNKNOWN = "Unknown"
KINDS = ("continuous", "one_hot", "label")

ROAD_VOCABULARY: dict[str, str] = {
    "street": "Street", "st": "Street",
    "lane": "Lane", "ln": "Lane",
    "boulevard": "Boulevard", "blvd": "Boulevard",
    "broad": "Broad",
    "drive": "Drive", "dr": "Drive",
    "avenue": "Avenue", "ave": "Avenue",
    "road": "Road", "rd": "Road",
    "way": "Way",
    "place": "Place", "pl": "Place",
    "court": "Court", "ct": "Court",
    "parkway": "Parkway", "pkwy": "Parkway",
}

DERIVED_SOURCES = (
    "entry_count", "exit_count", "exit_minus_entry",
    "entry_code", "exit_code", "turn",
    "entry_road_type", "exit_road_type",
    "downtown_km", "outskirts_km",
    "rain_pct", "snow_pct",
)
WEATHER_SOURCES = ("rain_pct", "snow_pct")
_TEXT_SOURCES = {"entry_street", "exit_street", "entry_road_type", "exit_road_type"}


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    source: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"column {self.name!r}: kind must be one of {KINDS}, got {self.kind!r}")
        if self.source is None:
            object.__setattr__(self, "source", self.name)


@dataclass(frozen=True)
class CityGeo:
    city: int
    downtown: tuple[float, float]
    outskirts_radius_km: Optional[float] = None

    def __post_init__(self):
        if self.outskirts_radius_km is not None and not self.outskirts_radius_km > 0:
            raise ConfigError(f"city {self.city}: outskirts_radius_km must be positive")


@dataclass(frozen=True)
class StreetCounts:
    entry_count: int
    exit_count: int

    @property
    def exit_minus_entry(self) -> int:
        return self.exit_count - self.entry_count


def default_spec(weather: bool = True) -> list[ColumnSpec]:
    """Modeling columns: scaled continuous features plus one-hot categoricals."""
    spec = [
        ColumnSpec("hour", "continuous"),
        ColumnSpec("weekend", "continuous"),
        ColumnSpec("month", "continuous"),
        ColumnSpec("city", "one_hot"),
        ColumnSpec("entry_code", "continuous"),
        ColumnSpec("exit_code", "continuous"),
        ColumnSpec("turn", "continuous"),
        ColumnSpec("entry_count", "continuous"),
        ColumnSpec("exit_count", "continuous"),
        ColumnSpec("exit_minus_entry", "continuous"),
        ColumnSpec("entry_road_type", "one_hot"),
        ColumnSpec("exit_road_type", "one_hot"),
        ColumnSpec("downtown_km", "continuous"),
        ColumnSpec("outskirts_km", "continuous"),
    ]
    if weather:
        spec += [ColumnSpec("rain_pct", "continuous"), ColumnSpec("snow_pct", "continuous")]
    return spec


# ---------------------------------------------------------------------------
# individual features


def count_streets(dataset: Dataset) -> dict[int, StreetCounts]:
    """Distinct entry/exit street names seen at each intersection."""
    entries: dict[int, set] = {}
    exits: dict[int, set] = {}
    for r in dataset.records:
        e = entries.setdefault(r.intersection_id, set())
        x = exits.setdefault(r.intersection_id, set())
        if r.entry_street is not None:
            e.add(r.entry_street)
        if r.exit_street is not None:
            x.add(r.exit_street)
    table = {i: StreetCounts(len(entries[i]), len(exits[i])) for i in sorted(entries)}
    degenerate = [i for i, c in table.items() if c.entry_count == 0 or c.exit_count == 0]
    if degenerate:
        shown = ", ".join(map(str, degenerate[:10]))
        logger.warning(
            "%d intersection(s) without an observed entry or exit street: %s%s",
            len(degenerate), shown, " ..." if len(degenerate) > 10 else "",
        )
    return table


def encode_directions(record: TripRecord) -> tuple[int, int, int]:
    """(entry code, exit code, clockwise turn), each in 0..7."""
    return (
        record.entry_heading.value,
        record.exit_heading.value,
        circular_difference(record.entry_heading, record.exit_heading),
    )


def road_type(street_name: Optional[str], vocabulary: Mapping[str, str] = ROAD_VOCABULARY) -> str:
    if not street_name:
        return UNKNOWN
    tokens = street_name.split()
    if not tokens:
        return UNKNOWN
    return vocabulary.get(tokens[-1].lower().rstrip("."), UNKNOWN)


def haversine_km(lat1, lon1, lat2, lon2, radius: float = EARTH_RADIUS_KM):
    """Great-circle distance; works elementwise on numpy arrays."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlam = np.radians(lon2) - np.radians(lon1)
    a = np.sin(dphi / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlam / 2.0) ** 2
    return 2.0 * radius * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def resolve_geo(dataset: Dataset, geo: Sequence[CityGeo]) -> dict[int, CityGeo]:
    """Index ``geo`` by city and fill unset radii with the 95th percentile of
    downtown distances over that city's intersections."""
    by_city: dict[int, CityGeo] = {}
    for g in geo:
        if g.city in by_city:
            raise ConfigError(f"duplicate geo entry for city {g.city}")
        by_city[g.city] = g
    inters = dataset.intersections()
    missing = sorted({c for c, _, _ in inters.values()} - set(by_city))
    if missing:
        raise ConfigError(f"no geo entry for city label(s) {missing}")
    resolved = {}
    for city, g in sorted(by_city.items()):
        if g.outskirts_radius_km is None:
            pts = np.array([(la, lo) for c, la, lo in inters.values() if c == city], dtype=np.float64)
            if len(pts) == 0:
                raise ConfigError(f"city {city}: radius unset and no intersections to derive it from")
            d = haversine_km(pts[:, 0], pts[:, 1], g.downtown[0], g.downtown[1])
            radius = float(np.percentile(d, 95))
            if radius <= 0:
                radius = float(np.finfo(float).tiny)
            g = replace(g, outskirts_radius_km=radius)
        resolved[city] = g
    return resolved


def distance_features(dataset: Dataset, geo: Sequence[CityGeo]) -> dict[int, tuple[float, float]]:
    """intersection_id -> (downtown_km, outskirts_km)."""
    resolved = resolve_geo(dataset, geo)
    out = {}
    for iid, (city, lat, lon) in sorted(dataset.intersections().items()):
        g = resolved[city]
        d = float(haversine_km(lat, lon, g.downtown[0], g.downtown[1]))
        out[iid] = (d, max(0.0, g.outskirts_radius_km - d))
    return out


def _weather_index(weather_table) -> dict[tuple[int, int], tuple[float, float]]:
    index = {}
    for city, month, rain, snow in weather_table:
        key = (int(city), int(month))
        if key in index:
            raise ConfigError(f"duplicate weather entry for (city={key[0]}, month={key[1]})")
        for name, v in (("rain_pct", rain), ("snow_pct", snow)):
            if not 0.0 <= float(v) <= 100.0:
                raise ConfigError(f"{name} out of [0, 100] for {key}: {v}")
        index[key] = (float(rain), float(snow))
    return index


def join_weather(dataset: Dataset, weather_table) -> tuple[np.ndarray, np.ndarray]:
    """Per-record (rain_pct, snow_pct) by exact (city, month) lookup."""
    index = _weather_index(weather_table)
    rain = np.zeros(len(dataset))
    snow = np.zeros(len(dataset))
    missing: dict[tuple[int, int], int] = {}
    for i, r in enumerate(dataset.records):
        hit = index.get((r.city, r.month))
        if hit is None:
            missing[(r.city, r.month)] = missing.get((r.city, r.month), 0) + 1
        else:
            rain[i], snow[i] = hit
    for (city, month), n in sorted(missing.items()):
        logger.warning("no weather for city=%d month=%d (%d records); using 0", city, month, n)
    return rain, snow


# ---------------------------------------------------------------------------
# feature matrix


@dataclass
class _Context:
    dataset: Dataset
    street_counts: dict
    geo: Optional[dict]
    weather: Optional[list]
    cache: dict = field(default_factory=dict)


def _raw_values(ctx: _Context, source: str) -> np.ndarray:
    if source in ctx.cache:
        return ctx.cache[source]
    ds = ctx.dataset
    if source in ("entry_count", "exit_count", "exit_minus_entry"):
        counts = dict(ctx.street_counts)
        unseen = {r.intersection_id for r in ds.records} - set(counts)
        if unseen:
            fresh = count_streets(Dataset(tuple(r for r in ds.records if r.intersection_id in unseen)))
            counts.update(fresh)
        vals = np.array([getattr(counts[r.intersection_id], source) for r in ds.records], dtype=np.float64)
    elif source in ("entry_code", "exit_code", "turn"):
        pos = ("entry_code", "exit_code", "turn").index(source)
        vals = np.array([encode_directions(r)[pos] for r in ds.records], dtype=np.float64)
    elif source in ("entry_road_type", "exit_road_type"):
        street = ds.column("entry_street" if source == "entry_road_type" else "exit_street")
        vals = np.array([road_type(s) for s in street], dtype=object)
    elif source in ("downtown_km", "outskirts_km"):
        if ctx.geo is None:
            raise ConfigError(f"feature {source!r} needs a geo table")
        table = {}
        for iid, (city, lat, lon) in ds.intersections().items():
            g = ctx.geo.get(city)
            if g is None:
                raise ConfigError(f"no geo entry for city label {city}")
            d = float(haversine_km(lat, lon, g.downtown[0], g.downtown[1]))
            table[iid] = (d, max(0.0, g.outskirts_radius_km - d))
        pos = 0 if source == "downtown_km" else 1
        vals = np.array([table[r.intersection_id][pos] for r in ds.records], dtype=np.float64)
    elif source in WEATHER_SOURCES:
        if ctx.weather is None:
            raise ConfigError(f"feature {source!r} needs a weather table")
        rain, snow = join_weather(ds, ctx.weather)
        ctx.cache["rain_pct"], ctx.cache["snow_pct"] = rain, snow
        return ctx.cache[source]
    elif source in RECORD_FIELDS:
        col = ds.column(source)
        if source in ("entry_heading", "exit_heading"):
            vals = np.array([h.value for h in col], dtype=np.float64)
        elif col.dtype == object:
            vals = col
        else:
            vals = col.astype(np.float64)
    else:
        raise ConfigError(f"unknown feature source {source!r}")
    ctx.cache[source] = vals
    return vals


def _categories(ctx: _Context, source: str) -> list[str]:
    ds = ctx.dataset
    if source in ("entry_heading", "exit_heading"):
        return [h.name for h in ds.column(source)]
    if source in ("city", "hour", "month", "intersection_id"):
        return [str(v) for v in ds.column(source)]
    if source == "weekend":
        return ["1" if v else "0" for v in ds.column(source)]
    vals = _raw_values(ctx, source)
    return [UNKNOWN if v is None else str(v) for v in vals]


def _minmax(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if not hi > lo:
        return np.zeros_like(x, dtype=np.float64)
    return np.clip((x - lo) / (hi - lo), 0.0, 1.0)


@dataclass
class FeatureTransform:
    """Fitted parameters needed to build the same columns for new data."""

    specs: list[ColumnSpec]
    scaling_params: dict[str, tuple[float, float]]
    encoders: dict[str, dict[str, int]]
    street_counts: dict[int, StreetCounts]
    geo: Optional[dict[int, CityGeo]]
    weather: Optional[list]

    @property
    def column_names(self) -> list[str]:
        names = []
        for s in self.specs:
            if s.kind == "one_hot":
                cats = sorted(self.encoders[s.name], key=self.encoders[s.name].get)
                names += [f"{s.name}={c}" for c in cats]
            else:
                names.append(s.name)
        return names

    def apply(self, dataset: Dataset) -> "FeatureMatrix":
        """Transform ``dataset`` with the stored parameters (no refitting)."""
        if len(dataset) == 0:
            raise ConfigError("cannot build features for an empty dataset")
        ctx = _Context(dataset, self.street_counts, self.geo, self.weather)
        blocks = []
        for s in self.specs:
            if s.kind == "continuous":
                x = _continuous(ctx, s)
                lo, hi = self.scaling_params[s.name]
                blocks.append(_minmax(x, lo, hi)[:, None])
            elif s.kind == "label":
                enc = self.encoders[s.name]
                cats = _categories(ctx, s.source)
                blocks.append(np.array([enc.get(c, 0) for c in cats], dtype=np.float64)[:, None])
            else:
                enc = self.encoders[s.name]
                cats = _categories(ctx, s.source)
                block = np.zeros((len(dataset), len(enc)))
                for i, c in enumerate(cats):
                    j = enc.get(c)
                    if j is not None:
                        block[i, j] = 1.0
                blocks.append(block)
        values = np.hstack(blocks) if blocks else np.zeros((len(dataset), 0))
        return FeatureMatrix(values, self)

    def to_dict(self) -> dict:
        return {
            "specs": [{"name": s.name, "kind": s.kind, "source": s.source} for s in self.specs],
            "scaling_params": {k: list(v) for k, v in self.scaling_params.items()},
            "encoders": self.encoders,
            "street_counts": {str(k): [v.entry_count, v.exit_count] for k, v in self.street_counts.items()},
            "geo": None if self.geo is None else [
                {"city": g.city, "downtown": list(g.downtown), "outskirts_radius_km": g.outskirts_radius_km}
                for g in self.geo.values()
            ],
            "weather": None if self.weather is None else [list(r) for r in self.weather],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureTransform":
        geo = None
        if d["geo"] is not None:
            geo = {
                g["city"]: CityGeo(g["city"], tuple(g["downtown"]), g["outskirts_radius_km"]) for g in d["geo"]
            }
        return cls(
            specs=[ColumnSpec(**s) for s in d["specs"]],
            scaling_params={k: (float(v[0]), float(v[1])) for k, v in d["scaling_params"].items()},
            encoders={k: {c: int(i) for c, i in v.items()} for k, v in d["encoders"].items()},
            street_counts={int(k): StreetCounts(*v) for k, v in d["street_counts"].items()},
            geo=geo,
            weather=None if d["weather"] is None else [tuple(r) for r in d["weather"]],
        )


def _continuous(ctx: _Context, s: ColumnSpec) -> np.ndarray:
    if s.source in _TEXT_SOURCES:
        raise ConfigError(f"column {s.name!r}: text source {s.source!r} cannot be continuous")
    x = np.asarray(_raw_values(ctx, s.source), dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ConfigError(f"column {s.name!r} has non-finite values")
    return x


@dataclass
class FeatureMatrix:
    values: np.ndarray
    transform: FeatureTransform

    @property
    def columns(self) -> list[ColumnSpec]:
        return self.transform.specs

    @property
    def column_names(self) -> list[str]:
        return self.transform.column_names

    @property
    def scaling_params(self) -> dict:
        return self.transform.scaling_params

    @property
    def encoders(self) -> dict:
        return self.transform.encoders

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def apply(self, dataset: Dataset) -> "FeatureMatrix":
        return self.transform.apply(dataset)

    def select(self, names: Sequence[str]) -> np.ndarray:
        idx = [self.column_names.index(n) for n in names]
        return self.values[:, idx]


def build_feature_matrix(
    dataset: Dataset,
    spec: Sequence[ColumnSpec],
    weather_table=None,
    geo: Optional[Sequence[CityGeo]] = None,
) -> FeatureMatrix:
    """Fit scaling/encoding parameters on ``dataset`` and return its matrix."""
    if len(dataset) == 0:
        raise ConfigError("cannot build features for an empty dataset")
    names = [s.name for s in spec]
    if len(set(names)) != len(names):
        raise ConfigError("column names must be unique")
    for s in spec:
        if s.source not in RECORD_FIELDS and s.source not in DERIVED_SOURCES:
            raise ConfigError(f"column {s.name!r}: unknown source {s.source!r}")
    sources = {s.source for s in spec}
    resolved_geo = None
    if geo is not None:
        resolved_geo = resolve_geo(dataset, geo)
    elif sources & {"downtown_km", "outskirts_km"}:
        raise ConfigError("distance features requested but no geo table given")
    weather = None
    if weather_table is not None:
        _weather_index(weather_table)
        weather = [tuple(r) for r in weather_table]
    elif sources & set(WEATHER_SOURCES):
        raise ConfigError("weather features requested but no weather table given")
    street_counts = count_streets(dataset) if sources & {"entry_count", "exit_count", "exit_minus_entry"} else {}

    ctx = _Context(dataset, street_counts, resolved_geo, weather)
    scaling, encoders = {}, {}
    for s in spec:
        if s.kind == "continuous":
            x = _continuous(ctx, s)
            scaling[s.name] = (float(x.min()), float(x.max()))
        else:
            cats = sorted(set(_categories(ctx, s.source)))
            if s.kind == "label":
                enc = {UNKNOWN: 0}
                for c in cats:
                    if c != UNKNOWN:
                        enc[c] = len(enc)
            else:
                enc = {c: j for j, c in enumerate(cats)}
            encoders[s.name] = enc
    transform = FeatureTransform(list(spec), scaling, encoders, street_counts, resolved_geo, weather)
    return transform.apply(dataset)


def inverse_scale(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return lo + np.asarray(values) * (hi - lo)
