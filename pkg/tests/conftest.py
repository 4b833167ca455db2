from __future__ import annotations

import pytest

_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_KEY] = {}


@pytest.fixture
def criterion(request):
    """Recorder for one acceptance criterion: ``criterion(num, ok, detail)``."""
    log = request.config.stash[_KEY]

    def record(num: int, ok: bool, detail: str) -> None:
        log.setdefault(num, []).append((bool(ok), detail))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_KEY, {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(log):
        checks = log[num]
        status = "PASS" if all(ok for ok, _ in checks) else "FAIL"
        detail = "; ".join(d for _, d in checks)
        terminalreporter.write_line(f"criterion {num}: {status}  {detail}")
