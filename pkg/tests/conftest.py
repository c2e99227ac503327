import pytest

from btsynth.benchmarks import load_suite, stack3_demos
from btsynth.core import Status

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


class FixedSink:
    """Sink answering every leaf from a fixed status table and logging calls."""

    def __init__(self, statuses=None):
        self.statuses = dict(statuses or {})
        self.calls: list[tuple[str, str]] = []

    def evaluate_condition(self, atom):
        self.calls.append(("cond", str(atom)))
        return self.statuses[atom]

    def tick_action(self, atom):
        self.calls.append(("act", str(atom)))
        return self.statuses[atom]

    def halt_action(self, atom):
        self.calls.append(("halt", str(atom)))

    @property
    def halted(self):
        return [a for kind, a in self.calls if kind == "halt"]


@pytest.fixture(scope="session")
def fetch():
    return load_suite("fetch")


@pytest.fixture(scope="session")
def stack3():
    return load_suite("stack3")


@pytest.fixture(scope="session")
def demos():
    return stack3_demos()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {k}: {detail}")


__all__ = ["ACCEPTANCE", "FixedSink", "Status"]
