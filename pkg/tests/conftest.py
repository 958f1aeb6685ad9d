import os

import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(20240601)


def pytest_configure(config):
    # keep worker count fixed for the unit tests; the acceptance suite varies it
    os.environ.setdefault("LPK_THREADS", "2")


_ACCEPTANCE: list[tuple[tuple, str]] = []


@pytest.fixture
def acceptance():
    """Record one ``criterion N: PASS/FAIL`` line for the terminal summary."""

    def record(key, passed: bool, detail: str) -> bool:
        label = f"criterion {key:>2}" if isinstance(key, int) else key
        order = (0, key) if isinstance(key, int) else (1, 0)
        _ACCEPTANCE.append((order, f"{label}: {'PASS' if passed else 'FAIL'}  {detail}"))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE, key=lambda item: item[0]):
        terminalreporter.write_line(line)
