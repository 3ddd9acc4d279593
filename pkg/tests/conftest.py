import logging

import numpy as np
import pytest

from congestion import _kernels
from congestion.core_data import CompassHeading, Dataset, TripRecord
from congestion.ingest import SynthConfig, generate_synthetic, synthetic_geo, synthetic_weather

SMALL = SynthConfig(intersections_per_city=(40, 20, 60, 50), rows=1500, streets_per_city=30, seed=3)


@pytest.fixture(autouse=True)
def _quiet_warnings(caplog):
    caplog.set_level(logging.ERROR, logger="congestion")


@pytest.fixture(scope="session")
def small_config():
    return SMALL


@pytest.fixture(scope="session")
def small_dataset():
    return generate_synthetic(SMALL)


@pytest.fixture(scope="session")
def small_tables():
    return synthetic_weather(SMALL), synthetic_geo(SMALL)


@pytest.fixture(params=_kernels.available_backends())
def backend(request):
    before = _kernels.backend_name()
    _kernels.set_backend(request.param)
    yield request.param
    _kernels.set_backend(before)


def make_record(**overrides):
    base = dict(
        row_id=0, intersection_id=0, city=0, latitude=33.75, longitude=-84.39,
        entry_street="Peachtree St", exit_street="Peachtree St",
        entry_heading=CompassHeading.N, exit_heading=CompassHeading.N,
        hour=8, weekend=False, month=6,
    )
    for fam in ("total_time_stopped", "time_from_first_stop", "distance_to_first_stop"):
        for p, v in zip((20, 40, 50, 60, 80), (1.0, 2.0, 3.0, 4.0, 5.0)):
            base[f"{fam}_p{p}"] = v
    base.update(overrides)
    return TripRecord(**base)


def make_dataset(rows):
    return Dataset(tuple(make_record(row_id=i, **r) for i, r in enumerate(rows)))


def rng(seed=0):
    return np.random.default_rng(seed)


# --- acceptance summary ------------------------------------------------------

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"ACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}")
