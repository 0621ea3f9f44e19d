from pathlib import Path

import pytest

from waveguide_carleman.admissibility import AdmissibilityParams
from waveguide_carleman.carleman import select_params
from waveguide_carleman.config import load_config
from waveguide_carleman.grid import CrossSection

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


@pytest.fixture(scope="session")
def unit_interval():
    return CrossSection.interval(0.0, 1.0)


@pytest.fixture(scope="session")
def reference_config():
    return load_config(CONFIGS / "reference.ini")


@pytest.fixture(scope="session")
def reference_selection(unit_interval):
    """Weight parameters for c = 0.95 + 2x' on (0, 1)."""
    return select_params(unit_interval, 1.0, (1.0,), 1.8, 0.9, 3.2, gamma=2e-4)


@pytest.fixture(scope="session")
def reference_params(reference_selection):
    return reference_selection.params


@pytest.fixture(scope="session")
def reference_adm():
    return AdmissibilityParams(0.9, 3.2, 1.8, (1.0,), 1e12, 5e-6, 0.3)


# acceptance lines, printed once at the end of the session
_CRITERIA: dict = {}


@pytest.fixture
def record_criterion():
    def record(number: int, checks: dict, detail: str = "") -> None:
        failed = [k for k, ok in checks.items() if not ok]
        status = "PASS" if not failed else "FAIL (" + ", ".join(failed) + ")"
        line = f"criterion {number}: {status}" + (f" | {detail}" if detail else "")
        _CRITERIA[number] = line
        print(line)
        assert not failed, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
