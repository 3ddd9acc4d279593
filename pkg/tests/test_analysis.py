import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from congestion.analysis import busy_table, export_plot_data, mean_wait_by_hour, write_plot_data
from congestion.cluster import cluster_intersections

from conftest import make_dataset


def waits(v):
    return {f"total_time_stopped_p{p}": float(v) for p in (20, 40, 50, 60, 80)}


def test_zero_waits_never_busy():
    ds = make_dataset([dict(hour=h, **waits(0)) for h in range(24)])
    table = busy_table(ds, 1.0)
    assert all(r.busy_count == 0 for r in table.rows) and table.busy == {}


def test_threshold_is_inclusive():
    ds = make_dataset([dict(hour=8, **waits(30)), dict(hour=9, **waits(29.999))])
    counts = busy_table(ds, 30.0).counts(0)
    assert counts[8] == 1 and counts[9] == 0 and counts.sum() == 1


def test_mean_over_records_decides():
    ds = make_dataset([dict(hour=8, **waits(20)), dict(hour=8, **waits(40))])
    assert busy_table(ds, 30.0).counts(0)[8] == 1
    assert busy_table(ds, 31.0).counts(0)[8] == 0


def test_input_errors():
    with pytest.raises(ValueError):
        busy_table(make_dataset([]))
    with pytest.raises(ValueError):
        busy_table(make_dataset([{}]), 0.0)


def test_groupby_oracle(small_dataset):
    ids, hours, means = mean_wait_by_hour(small_dataset)
    groups = {}
    for r in small_dataset.records:
        groups.setdefault((r.intersection_id, r.hour), []).append(r.total_time_stopped_p50)
    assert len(groups) == len(ids)
    for i, h, m in zip(ids, hours, means):
        assert m == pytest.approx(np.mean(groups[(int(i), int(h))]), rel=1e-12)
    table = busy_table(small_dataset, 20.0)
    inter = small_dataset.intersections()
    for city in table.cities():
        want = np.zeros(24, dtype=int)
        for (i, h), v in groups.items():
            if inter[i][0] == city and np.mean(v) >= 20.0:
                want[h] += 1
        assert np.array_equal(table.counts(city), want)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.5, 80.0), st.floats(0.5, 80.0))
def test_antitone_in_threshold(small_dataset, t1, t2):
    lo, hi = sorted((t1, t2))
    a, b = busy_table(small_dataset, lo), busy_table(small_dataset, hi)
    for c in a.cities():
        assert np.all(a.counts(c) >= b.counts(c))


def test_counts_bounded_by_intersections(small_dataset):
    for r in busy_table(small_dataset, 5.0).rows:
        assert 0 <= r.busy_count <= r.total_intersections


def test_exports(small_dataset, tmp_path):
    table = busy_table(small_dataset)
    curve = export_plot_data("busy_curve", busy=table).strip().split("\n")
    assert curve[0] == "city,hour,busy_count" and len(curve) == 1 + 96
    *_, res, _ = cluster_intersections(small_dataset)
    clusters = export_plot_data("clusters", result=res, dataset=small_dataset).strip().split("\n")
    assert clusters[0] == "lat,lon,cluster,city" and len(clusters) == 1 + 170
    assert export_plot_data("clusters", result=res, dataset=small_dataset) == \
        export_plot_data("clusters", result=res, dataset=small_dataset)
    cmap = export_plot_data("city_map", dataset=small_dataset, busy=table, city=1).strip().split("\n")
    assert len(cmap) == 1 + 20
    assert {line.rsplit(",", 1)[1] for line in cmap[1:]} <= {"0", "1"}
    with pytest.raises(ValueError):
        export_plot_data("histogram")
    written = write_plot_data(tmp_path, res, small_dataset, table)
    assert len(written) == 2 + 4
    assert (tmp_path / "busy_curve.csv").read_text() == export_plot_data("busy_curve", busy=table)
