import os
from pathlib import Path

import numpy as np
import pytest

from ifeast.linalg import HermitianOperator

REPO = Path(__file__).resolve().parents[1]

_criteria = {}


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow reproduction tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="slow; use --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = "SKIP" if rep.skipped else ("PASS" if rep.passed else "FAIL")
        prev = _criteria.get(num, (title, "PASS"))[1]
        # a criterion passes only if every test for it passes
        rank = {"PASS": 0, "SKIP": 1, "FAIL": 2}
        _criteria[num] = (title, status if rank[status] > rank[prev] else prev)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        title, status = _criteria[num]
        terminalreporter.write_line(f"criterion {num:>2}: {status}  {title}")


def random_symmetric(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    return 0.5 * (a + a.T)


def random_hermitian(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (a + a.conj().T)


@pytest.fixture
def diag10():
    return HermitianOperator.from_dense(np.diag(np.arange(1.0, 11.0)))


def find_matrix(name):
    """Locate a Matrix Market file in ``$IFEAST_DATA`` or ``<repo>/data``."""
    dirs = [os.environ.get("IFEAST_DATA"), REPO / "data"]
    for d in dirs:
        if not d:
            continue
        for cand in (f"{name}.mtx", f"{name.lower()}.mtx", f"{name}/{name}.mtx"):
            p = Path(d) / cand
            if p.is_file():
                return p
    return None
