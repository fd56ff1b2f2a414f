import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from cwscaler.model_core import ModelParams, solve_cw_roots  # noqa: E402


@pytest.fixture(scope="session")
def sub_params():
    """The reference subcritical point beta = 1.5, h = 0.2."""
    return ModelParams(1.5, 0.2)


@pytest.fixture(scope="session")
def m0_ref(sub_params):
    return solve_cw_roots(sub_params).m0


# one line per acceptance criterion, collected by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
