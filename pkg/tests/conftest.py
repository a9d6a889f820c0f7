import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

REPO = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def configs_dir():
    return REPO / "configs"


@pytest.fixture(scope="session")
def radial_fp():
    """Radial fixed point through order 6 on [0, 1]; shared because it takes several seconds."""
    from loewner_lab.radial import radial_fixed_point
    return radial_fixed_point(6, 1.0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
