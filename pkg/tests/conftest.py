import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("lab", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("lab")


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240611))


# one line per acceptance criterion, printed in the terminal summary
_CRITERIA: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    def record(name: str, passed: bool, detail: str) -> None:
        _CRITERIA.append((name, passed, detail))
        assert passed, f"{name}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
