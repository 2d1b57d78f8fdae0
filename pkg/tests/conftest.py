import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("effhyp", deadline=None, max_examples=60)
settings.load_profile("effhyp")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record a one-line PASS/FAIL verdict, printed again at the end of the session."""
    def record(number, name, checks):
        ok = all(passed for passed, _ in checks)
        detail = "; ".join(f"{'ok' if passed else 'FAILED'} {text}" for passed, text in checks)
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {name} [{detail}]"
        print(line)
        _VERDICTS.append(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
