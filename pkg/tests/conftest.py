import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "configs")

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = _criteria.get(report.nodeid)
    if marker is None:
        return
    number, title, outcomes = marker
    outcomes.append(report.outcome)


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            number, title = mark.args
            _criteria[item.nodeid] = (number, title, [])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    by_number = {}
    for number, title, outcomes in _criteria.values():
        entry = by_number.setdefault(number, [title, []])
        entry[1].extend(outcomes or ["not run"])
    terminalreporter.section("acceptance criteria")
    for number in sorted(by_number):
        title, outcomes = by_number[number]
        status = "PASS" if outcomes and all(o == "passed" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2} {status}  {title}")


@pytest.fixture
def config_dir():
    return CONFIG_DIR


@pytest.fixture
def mu4():
    from earlystop.measures import load_measure_csv

    return load_measure_csv(os.path.join(CONFIG_DIR, "mu4.csv"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
