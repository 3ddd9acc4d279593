import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from congestion.core_data import CompassHeading
from congestion.errors import ConfigError
from congestion.features import (
    CityGeo, ColumnSpec, FeatureTransform, build_feature_matrix, count_streets, default_spec, distance_features,
    encode_directions, haversine_km, join_weather, road_type,
)

from conftest import make_dataset, make_record

H = CompassHeading


def street_oracle(ds):
    """Distinct (intersection, street) pairs counted via np.unique."""
    iid = ds.column("intersection_id")
    out = {}
    for col in ("entry_street", "exit_street"):
        names = ds.column(col)
        seen = np.array([n is not None for n in names])
        pairs = np.unique(np.array([f"{i}\x00{n}" for i, n, s in zip(iid, names, seen) if s]))
        ids, counts = np.unique([int(p.split("\x00")[0]) for p in pairs], return_counts=True)
        out[col] = dict(zip(ids.tolist(), counts.tolist()))
    return out


def test_count_streets_example():
    ds = make_dataset([
        {"intersection_id": 1, "entry_street": "A", "exit_street": "A"},
        {"intersection_id": 1, "entry_street": "B", "exit_street": "A"},
    ])
    c = count_streets(ds)[1]
    assert (c.entry_count, c.exit_count, c.exit_minus_entry) == (2, 1, -1)


def test_count_streets_degenerate_warns(caplog):
    caplog.set_level(logging.WARNING, logger="congestion")
    ds = make_dataset([{"intersection_id": 4, "entry_street": None, "exit_street": None}])
    c = count_streets(ds)[4]
    assert (c.entry_count, c.exit_count, c.exit_minus_entry) == (0, 0, 0)
    assert any("without an observed" in r.message for r in caplog.records)


def test_count_streets_matches_oracle(small_dataset):
    got = count_streets(small_dataset)
    oracle = street_oracle(small_dataset)
    for iid, c in got.items():
        assert c.entry_count == oracle["entry_street"].get(iid, 0)
        assert c.exit_count == oracle["exit_street"].get(iid, 0)


@pytest.mark.parametrize("entry,exit_,want", [(H.N, H.N, (0, 0, 0)), (H.N, H.E, (0, 2, 2)), (H.NW, H.N, (7, 0, 1))])
def test_encode_directions(entry, exit_, want):
    assert encode_directions(make_record(entry_heading=entry, exit_heading=exit_)) == want


@given(st.sampled_from(list(H)), st.sampled_from(list(H)), st.integers(0, 7))
def test_turn_rotation_invariant(a, b, rot):
    ra, rb = H((a.value + rot) % 8), H((b.value + rot) % 8)
    t1 = encode_directions(make_record(entry_heading=a, exit_heading=b))[2]
    t2 = encode_directions(make_record(entry_heading=ra, exit_heading=rb))[2]
    assert t1 == t2 and 0 <= t1 <= 7


@pytest.mark.parametrize("name,want", [
    ("Peachtree St", "Street"), (None, "Unknown"), ("BROADWAY BLVD", "Boulevard"), ("Market", "Unknown"),
    ("Elm Ln", "Lane"), ("Spring Garden Broad", "Broad"), ("Oak Dr", "Drive"), ("", "Unknown"),
])
def test_road_type(name, want):
    assert road_type(name) == want


def test_haversine_equator_degree():
    assert haversine_km(0.0, 0.0, 0.0, 1.0) == pytest.approx(6371.0 * np.pi / 180.0, rel=1e-12)
    assert haversine_km(0.0, 0.0, 0.0, 1.0) == pytest.approx(111.19, abs=0.01)


def test_distance_features_cases():
    ds = make_dataset([
        {"intersection_id": 0, "latitude": 10.0, "longitude": 20.0},
        {"intersection_id": 1, "latitude": 10.0, "longitude": 25.0},
    ])
    table = distance_features(ds, [CityGeo(0, (10.0, 20.0), 50.0)])
    assert table[0] == (0.0, 50.0)
    assert table[1][0] > 50.0 and table[1][1] == 0.0


def test_distance_radius_default_is_p95():
    ds = make_dataset([{"intersection_id": i, "latitude": 0.0, "longitude": 0.01 * i} for i in range(21)])
    table = distance_features(ds, [CityGeo(0, (0.0, 0.0))])
    d = np.array([table[i][0] for i in range(21)])
    radius = np.percentile(d, 95)
    assert all(table[i][1] == pytest.approx(max(0.0, radius - d[i]), abs=1e-12) for i in range(21))


def test_distance_unknown_city():
    with pytest.raises(ConfigError):
        distance_features(make_dataset([{"city": 1}]), [CityGeo(0, (0.0, 0.0), 1.0)])


def test_join_weather_cases(caplog):
    caplog.set_level(logging.WARNING, logger="congestion")
    ds = make_dataset([{"city": 1, "month": 7}, {"city": 2, "month": 7}])
    rain, snow = join_weather(ds, [(1, 7, 40.0, 0.0)])
    assert rain.tolist() == [40.0, 0.0] and snow.tolist() == [0.0, 0.0]
    assert any("no weather" in r.message for r in caplog.records)
    with pytest.raises(ConfigError):
        join_weather(ds, [(1, 7, 40.0, 0.0), (1, 7, 10.0, 0.0)])
    with pytest.raises(ConfigError):
        join_weather(ds, [(1, 7, 140.0, 0.0)])


def test_minmax_and_onehot_examples():
    ds = make_dataset([{"hour": 2, "entry_street": "a"}, {"hour": 4, "entry_street": "b"},
                       {"hour": 6, "entry_street": "a"}])
    spec = [ColumnSpec("hour", "continuous"), ColumnSpec("street", "one_hot", "entry_street")]
    fm = build_feature_matrix(ds, spec)
    assert fm.column_names == ["hour", "street=a", "street=b"]
    assert fm.values[:, 0].tolist() == [0.0, 0.5, 1.0]
    assert fm.values[:, 1].tolist() == [1, 0, 1] and fm.values[:, 2].tolist() == [0, 1, 0]
    new = make_dataset([{"hour": 9, "entry_street": "z"}])
    applied = fm.apply(new).values
    assert applied[0, 0] == 1.0  # clipped
    assert applied[0, 1:].tolist() == [0.0, 0.0]  # unseen category


def test_constant_column_is_zero():
    ds = make_dataset([{"hour": 5}, {"hour": 5}])
    fm = build_feature_matrix(ds, [ColumnSpec("hour", "continuous")])
    assert fm.values[:, 0].tolist() == [0.0, 0.0]


def test_label_encoder_reserves_unknown():
    ds = make_dataset([{"entry_street": "B St"}, {"entry_street": None}, {"entry_street": "A St"}])
    fm = build_feature_matrix(ds, [ColumnSpec("s", "label", "entry_street")])
    enc = fm.encoders["s"]
    assert enc["Unknown"] == 0 and sorted(enc.values()) == [0, 1, 2]
    codes = fm.values[:, 0]
    assert codes[1] == 0  # absent street


def test_spec_errors(small_dataset):
    from congestion.core_data import Dataset

    with pytest.raises(ConfigError):
        build_feature_matrix(Dataset(()), [ColumnSpec("hour", "continuous")])
    with pytest.raises(ConfigError):
        build_feature_matrix(small_dataset, [ColumnSpec("x", "continuous", "no_such_column")])
    with pytest.raises(ConfigError):
        build_feature_matrix(small_dataset, default_spec(weather=True))  # no tables


def test_full_spec_properties(small_dataset, small_tables):
    weather, geo = small_tables
    fm = build_feature_matrix(small_dataset, default_spec(True), weather, geo)
    X = fm.values
    assert np.all(np.isfinite(X))
    cont = [j for j, n in enumerate(fm.column_names) if "=" not in n]
    assert X[:, cont].min() >= 0.0 and X[:, cont].max() <= 1.0
    for prefix in ("city=", "entry_road_type=", "exit_road_type="):
        block = [j for j, n in enumerate(fm.column_names) if n.startswith(prefix)]
        assert np.all(X[:, block].sum(axis=1) == 1.0)
    # apply on the fitted data is the identity (idempotent scaling)
    assert np.array_equal(fm.apply(small_dataset).values, X)


def test_transform_roundtrip(small_dataset, small_tables):
    import json

    weather, geo = small_tables
    fm = build_feature_matrix(small_dataset, default_spec(True), weather, geo)
    back = FeatureTransform.from_dict(json.loads(json.dumps(fm.transform.to_dict())))
    assert np.array_equal(back.apply(small_dataset).values, fm.values)
    assert back.column_names == fm.column_names


def test_inverse_scale_on_fitted_data(small_dataset):
    from congestion.features import inverse_scale

    fm = build_feature_matrix(small_dataset, [ColumnSpec("lat", "continuous", "latitude")])
    lo, hi = fm.scaling_params["lat"]
    assert np.allclose(inverse_scale(fm.values[:, 0], lo, hi), small_dataset.column("latitude"), atol=1e-9)
