from __future__ import annotations

from importlib import resources
from pathlib import Path

import pytest

from quoteremix.config import Config, load_roster
from quoteremix.gateway import Gateway, load_mock_fixtures

FIXTURES = Path(__file__).parent / "fixtures"
TRANSCRIPTS = FIXTURES / "transcripts"
PACKAGED_MOCK = resources.files("quoteremix.data") / "mock_fixtures.json"


@pytest.fixture(scope="session")
def roster():
    return load_roster()


@pytest.fixture
def config():
    return Config()


def transcript(name: str) -> str:
    return (TRANSCRIPTS / name).read_text(encoding="utf-8")


def no_sleep(_seconds: float) -> None:
    pass


def mock_gateway(backend=None, **kw) -> Gateway:
    backend = backend if backend is not None else load_mock_fixtures(PACKAGED_MOCK)
    kw.setdefault("sleep", no_sleep)
    return Gateway(backend, **kw)


# --- acceptance summary -------------------------------------------------------

_criteria: dict[str, bool] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    label = marker.args[0]
    ok = _criteria.get(label, True) and not report.failed
    if report.when == "call" or report.failed:
        _criteria[label] = ok


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance")
    for label, ok in _criteria.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}")
