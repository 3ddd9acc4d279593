"""Busy-intersection counts by hour and CSV exports for plotting."""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cluster import KMeansResult, intersection_points
from .core_data import Dataset

HOURS = 24


@dataclass(frozen=True)
class BusyRow:
    city: int
    hour: int
    busy_count: int
    total_intersections: int


@dataclass
class BusyTable:
    rows: list[BusyRow]
    threshold_minutes: float
    busy: dict = field(default_factory=dict)  # intersection_id -> sorted busy hours

    def counts(self, city: int) -> np.ndarray:
        out = np.zeros(HOURS, dtype=np.int64)
        for r in self.rows:
            if r.city == city:
                out[r.hour] = r.busy_count
        return out

    def cities(self) -> list[int]:
        return sorted({r.city for r in self.rows})


def mean_wait_by_hour(dataset: Dataset, metric: str = "total_time_stopped_p50"):
    """Mean of ``metric`` per (intersection, hour): returns (ids, hours, means)."""
    iid = dataset.column("intersection_id").astype(np.int64)
    hour = dataset.column("hour").astype(np.int64)
    y = dataset.column(metric).astype(np.float64)
    key = iid * HOURS + hour
    uniq, inv = np.unique(key, return_inverse=True)
    sums = np.bincount(inv, weights=y)
    counts = np.bincount(inv)
    return uniq // HOURS, uniq % HOURS, sums / counts


def busy_table(dataset: Dataset, threshold_minutes: float = 30.0) -> BusyTable:
    """An intersection is busy at hour h when its mean p50 stopped time over
    the records at hour h is at least ``threshold_minutes``."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if not threshold_minutes > 0:
        raise ValueError("threshold_minutes must be positive")
    inter = dataset.intersections()
    ids, hours, means = mean_wait_by_hour(dataset)
    hit = means >= threshold_minutes
    city_of = np.array([inter[int(i)][0] for i in ids], dtype=np.int64)
    cities = sorted({c for c, _, _ in inter.values()})
    totals = {c: 0 for c in cities}
    for c, _, _ in inter.values():
        totals[c] += 1
    rows = []
    for c in cities:
        sel = hit & (city_of == c)
        per_hour = np.bincount(hours[sel], minlength=HOURS)
        rows.extend(BusyRow(int(c), h, int(per_hour[h]), totals[c]) for h in range(HOURS))
    busy: dict[int, list[int]] = {}
    for i, h in zip(ids[hit].tolist(), hours[hit].tolist()):
        busy.setdefault(i, []).append(h)
    return BusyTable(rows, float(threshold_minutes), busy)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def export_plot_data(what: str, result: Optional[KMeansResult] = None, dataset: Optional[Dataset] = None,
                     busy: Optional[BusyTable] = None, city: Optional[int] = None) -> str:
    """CSV text for one figure-style export.

    ``clusters`` needs ``result`` and ``dataset`` (the dataset the clustering
    ran on); ``busy_curve`` needs ``busy``; ``city_map`` needs ``dataset``,
    ``busy`` and optionally ``city`` to restrict the rows.
    """
    if what == "clusters":
        if result is None or dataset is None:
            raise ValueError("clusters export needs a KMeansResult and the dataset")
        ids, pts, cities = intersection_points(dataset)
        if len(ids) != len(result.assignments):
            raise ValueError("KMeansResult does not match the dataset's intersections")
        rows = sorted(
            (float(pts[i, 0]), float(pts[i, 1]), int(result.assignments[i]), int(cities[i])) for i in range(len(ids))
        )
        return _csv(["lat", "lon", "cluster", "city"], [[repr(a), repr(b), c, d] for a, b, c, d in rows])
    if what == "busy_curve":
        if busy is None:
            raise ValueError("busy_curve export needs a BusyTable")
        rows = sorted((r.city, r.hour, r.busy_count) for r in busy.rows)
        return _csv(["city", "hour", "busy_count"], rows)
    if what == "city_map":
        if dataset is None or busy is None:
            raise ValueError("city_map export needs the dataset and a BusyTable")
        inter = dataset.intersections()
        rows = sorted(
            (c, i, lat, lon, int(i in busy.busy))
            for i, (c, lat, lon) in inter.items()
            if city is None or c == city
        )
        return _csv(["city", "intersection_id", "lat", "lon", "busy_any_hour"],
                    [[c, i, repr(float(lat)), repr(float(lon)), b] for c, i, lat, lon, b in rows])
    raise ValueError(f"unknown export {what!r}; choose clusters, busy_curve or city_map")


def write_plot_data(out_dir, result: Optional[KMeansResult] = None, dataset: Optional[Dataset] = None,
                    busy: Optional[BusyTable] = None) -> list[str]:
    """Write every export the inputs allow; returns the file paths written."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def put(name, text):
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        written.append(path)

    if result is not None and dataset is not None:
        put("clusters.csv", export_plot_data("clusters", result=result, dataset=dataset))
    if busy is not None:
        put("busy_curve.csv", export_plot_data("busy_curve", busy=busy))
        if dataset is not None:
            for c in busy.cities():
                put(f"city_map_{c}.csv", export_plot_data("city_map", dataset=dataset, busy=busy, city=c))
    return written
