import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: list[tuple[str, bool, str]] = []


class _Recorder:
    def __init__(self, label):
        self.label = label
        self.parts: list[tuple[bool, str]] = []

    def check(self, ok, detail):
        self.parts.append((bool(ok), detail))

    def finish(self):
        ok = all(p[0] for p in self.parts) and bool(self.parts)
        detail = "; ".join(("" if p[0] else "[x] ") + p[1] for p in self.parts)
        _CRITERIA.append((self.label, ok, detail))
        line = f"{'PASS' if ok else 'FAIL'}  {self.label}: {detail}"
        print(line)
        assert ok, line


@pytest.fixture
def criterion(request):
    label = request.node.get_closest_marker("criterion").args[0]
    rec = _Recorder(label)
    yield rec


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion with a summary line")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
    n_ok = sum(ok for _, ok, _ in _CRITERIA)
    terminalreporter.write_line(f"{n_ok}/{len(_CRITERIA)} criteria passed")
