import numpy as np
import pytest

from travmap.feature_map import map_cloud
from travmap.grid import GridSpec
from travmap.scenes import load_scene

ACCEPTANCE_RESULTS = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def room_cloud():
    return load_scene("room_50k")


@pytest.fixture(scope="session")
def room_map(room_cloud):
    return map_cloud(room_cloud, GridSpec.covering(room_cloud, 0.1))


@pytest.fixture(scope="session")
def toy_cloud():
    return load_scene("toy_10k")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}")
