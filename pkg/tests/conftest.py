import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from paretune.param_space import Interfacial, SystemDescription  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

CONFIG_DIR = Path(__file__).resolve().parents[1] / "src" / "paretune" / "configs"


@pytest.fixture
def si_system():
    """Small interface analog: 1:1:16 domain, 4000 particles in a centered box."""
    return SystemDescription(11.01, 11.01, 176.16, 4000, n_procs=8, dispersion_coeff=1000.0,
                             geometry=Interfacial(11.01, 11.01, 44.04))


@pytest.fixture
def sb_system():
    return SystemDescription(11.01, 11.01, 66.06, 6000, n_procs=8, dispersion_coeff=1000.0)


@pytest.fixture
def lc_system():
    return SystemDescription(88.08, 88.08, 88.08, 512000, n_procs=96, dispersion_coeff=1000.0)


@pytest.fixture
def config_dir():
    return CONFIG_DIR


# acceptance results, filled by tests/test_acceptance.py and printed at the end of the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, line = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {line}")
