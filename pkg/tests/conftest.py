import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from eonplan.feasibility import build_feasibility  # noqa: E402
from eonplan.netmodel import Mode, worked_example  # noqa: E402
from eonplan.pathing import pairs_for_instance  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def table_for(instance):
    return build_feasibility(instance, pairs_for_instance(instance))


@pytest.fixture
def example_table():
    def make(mode=Mode.FULL, **kw):
        return table_for(worked_example(mode, **kw))
    return make


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
