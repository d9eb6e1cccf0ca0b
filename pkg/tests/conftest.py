import pytest

from adlcss.sim.mixture import simulate_dataset
from helpers import tiny_config

ACCEPTANCE = []


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    rc = tiny_config()
    out = tmp_path_factory.mktemp("tiny")
    return simulate_dataset(out, 4, 3, seed=5, cfg=rc.sim(), num_sources=2)


@pytest.fixture
def criterion(request):
    """Result slot for an acceptance test marked ``@pytest.mark.criterion(n, title)``."""
    number, title = request.node.get_closest_marker("criterion").args
    slot = {"ok": False, "detail": "did not complete"}
    yield slot
    ACCEPTANCE.append((number, title, slot["ok"], slot["detail"]))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {number:2d}. {title}: {detail}")
