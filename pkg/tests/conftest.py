import os
import re

import pytest

from carbonsched.carbon import CachedCarbonSource, Constant, SyntheticProvider
from carbonsched.model import reference_topology

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIXTURES = os.path.join(ROOT, "fixtures")
CONFIGS = os.path.join(FIXTURES, "configs")

REFERENCE_MOER = {"spain": 150.0, "france": 200.0, "belgium": 250.0, "netherlands": 300.0}

_criteria = {}


def record_criterion(number, name, passed, detail=""):
    _criteria[(number, name)] = (passed, detail)


@pytest.fixture
def criterion():
    """Usage: ``with criterion(3, "sci oracle") as note: ...; note("detail")``."""

    class _Ctx:
        def __init__(self, number, name):
            self.number, self.name, self.detail = number, name, ""

        def __call__(self, detail):
            self.detail = detail

        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            record_criterion(self.number, self.name, exc_type is None,
                             self.detail if exc_type is None else f"{self.detail} {exc}".strip())
            return False

    return _Ctx


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    def key(item):
        m = re.match(r"(\d+)(.*)", str(item[0][0]))
        return int(m.group(1)), m.group(2), item[0][1]

    for (number, name), (passed, detail) in sorted(_criteria.items(), key=key):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {str(number):>3} {name}: {detail}")


@pytest.fixture
def topology():
    return reference_topology()


@pytest.fixture
def reference_source():
    return CachedCarbonSource(SyntheticProvider({k: Constant(v) for k, v in REFERENCE_MOER.items()}))


@pytest.fixture
def config_path():
    def _path(name):
        return os.path.join(CONFIGS, name)
    return _path
