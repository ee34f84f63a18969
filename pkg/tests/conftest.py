import numpy as np
import pytest
from hypothesis import settings

from hesitator.catalog import AttributeSchema, AttributeSpec, Item, synthesize_catalog

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture(scope="session")
def catalog():
    return synthesize_catalog(3, 300, 10, coherence=0.5)


@pytest.fixture
def tiny_schema():
    return AttributeSchema(
        (
            AttributeSpec("battery", "numeric", 0.0, 100.0),
            AttributeSpec("comfort", "numeric", 0.0, 10.0),
            AttributeSpec("wireless", "binary", 0.0, 1.0),
        )
    )


def make_item(item_id, price=100.0, title=None, category="headphones", **attrs):
    return Item(item_id, title or f"Item {item_id}", category, price, attrs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance report: one line per criterion --------------------------------

_CRITERIA: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    if report.when == "setup" and report.passed:
        return
    n = marker.args[0]
    if hasattr(report, "wasxfail"):
        status = "PASS" if report.passed else "KNOWN-FAIL"
    else:
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    _CRITERIA.setdefault(n, []).append((status, item.name))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        results = _CRITERIA[n]
        bad = [(s, name) for s, name in results if s != "PASS"]
        if not bad:
            line = f"PASS  ({len(results)} check{'s' * (len(results) > 1)})"
        else:
            worst = "FAIL" if any(s == "FAIL" for s, _ in bad) else bad[0][0]
            line = f"{worst}  " + ", ".join(name for _, name in bad)
            if worst == "KNOWN-FAIL":
                line += "  (unattainable as stated; analysis in the decisions ledger)"
        terminalreporter.write_line(f"criterion {n:>2}: {line}")
