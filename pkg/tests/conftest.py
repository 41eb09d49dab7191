import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tapcodec.core import Plane, WeightSet, WeightTable
from tapcodec.trainer import default_init_weights

# numba compiles lazily, so the first example of a property test can be slow
settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_CRITERIA = pytest.StashKey[list]()


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(name): acceptance criterion, reported in the terminal summary")
    config.stash[_CRITERIA] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (report.when == "call" or report.failed):
        return
    status = "PASS" if report.passed and not hasattr(report, "wasxfail") else "FAIL"
    detail = dict(item.user_properties).get("detail", "")
    item.config.stash[_CRITERIA].append((status, marker.args[0], detail))


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for status, name, detail in lines:
            terminalreporter.write_line(f"{status}  {name}" + (f"  ({detail})" if detail else ""))


@pytest.fixture(scope="session")
def default_table():
    return default_init_weights()


@pytest.fixture(scope="session")
def flat_table():
    return WeightTable([WeightSet(22, 21, 21)] * 35)


def random_plane(rng, width, height, kind="noise"):
    """Test image of the given content kind."""
    if kind == "noise":
        arr = rng.integers(0, 256, (height, width))
    elif kind == "flat":
        arr = np.full((height, width), rng.integers(0, 256))
    elif kind == "gradient":
        yy, xx = np.mgrid[0:height, 0:width]
        gx, gy = rng.uniform(-4, 4, 2)
        arr = np.clip(128 + gx * (xx - width / 2) + gy * (yy - height / 2)
                      + rng.normal(0, 2, (height, width)), 0, 255)
    elif kind == "edges":
        arr = np.where(rng.random((height, width)) < 0.5, 0, 255)
        arr = np.cumsum(arr, axis=1) % 256
    elif kind == "extreme":
        arr = rng.choice([0, 255], (height, width))
    else:
        raise ValueError(kind)
    return Plane.from_array(arr.astype(np.uint8))


def ar_plane(rng, width, height, weights=(48, 8, 8), noise=2):
    """Image driven by a causal 3-tap filter on (left, above-left, above) plus uniform noise."""
    img = np.zeros((height + 1, width + 1), dtype=np.int64)
    img[0, :] = np.clip(128 + np.cumsum(rng.integers(-3, 4, width + 1)), 0, 255)
    img[:, 0] = np.clip(128 + np.cumsum(rng.integers(-3, 4, height + 1)), 0, 255)
    wa, wb, wc = weights
    jitter = rng.integers(-noise, noise + 1, (height + 1, width + 1))
    for y in range(1, height + 1):
        for x in range(1, width + 1):
            p = (wa * img[y, x - 1] + wb * img[y - 1, x - 1] + wc * img[y - 1, x] + 32) >> 6
            img[y, x] = min(255, max(0, p + jitter[y, x]))
    return Plane.from_array(img[1:, 1:].astype(np.uint8))
