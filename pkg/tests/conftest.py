import numpy as np
import pytest

from coreassoc.ingest import GridMeta
from coreassoc.synthetic import lattice_grids, write_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def grid3x3():
    return lattice_grids(3, 3, lat0=1, lon0=1, zones=1)


@pytest.fixture(scope="session")
def dataset(tmp_path_factory):
    return write_dataset(tmp_path_factory.mktemp("data"), seed=3, regime_year=1992)


def path_grids(k):
    """``k`` grids on one row, 1 degree apart."""
    return [GridMeta(f"p{i}", 10.0, 70.0 + i, 1) for i in range(k)]


_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(number, name, ok, detail=""):
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        line = f"criterion {number:>2} {status}: {name}" + (f" ({detail})" if detail else "")
        _CRITERIA.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
