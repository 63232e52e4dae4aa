import contextlib
from importlib import resources

import pytest

from shutter_sim import bench


def data_path(name: str) -> str:
    return str(resources.files("shutter_sim") / "data" / name)


@pytest.fixture(scope="session")
def default_bench_path() -> str:
    return data_path("paper_default.bench")


@pytest.fixture(scope="session")
def calibrated_bench_path() -> str:
    return data_path("paper_calibrated.bench")


@pytest.fixture(scope="session")
def calibrated_setup(calibrated_bench_path) -> bench.Setup:
    return bench.build(bench.load(calibrated_bench_path))


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line for an acceptance criterion, even under capture."""

    @contextlib.contextmanager
    def run(label: str):
        try:
            yield
        except BaseException:
            with capsys.disabled():
                print(f"\nFAIL  {label}")
            raise
        with capsys.disabled():
            print(f"\nPASS  {label}")

    return run
