import numpy as np
import pytest

from lilypond.geometry import Config


@pytest.fixture
def chain4():
    return Config(np.array([[0.0], [1.0], [3.0], [7.0]]))


def pytest_terminal_summary(terminalreporter):
    from .helpers import ACCEPTANCE_LINES

    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        ok, detail = ACCEPTANCE_LINES[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
