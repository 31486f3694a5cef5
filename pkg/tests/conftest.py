import numpy as np
import pytest

# one line per acceptance criterion, printed at the end of the session
VERDICTS = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    crit = item.get_closest_marker("criterion")
    if crit is None or rep.when != "call":
        return
    num, text = crit.args
    detail = getattr(item, "criterion_detail", "")
    ok = rep.passed
    prev = VERDICTS.get(num)
    if prev is not None:
        ok = ok and prev[0]
        detail = "; ".join(d for d in (prev[2], detail) if d)
    VERDICTS[num] = (ok, text, detail)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, text): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(VERDICTS):
        ok, text, detail = VERDICTS[num]
        line = f"criterion {num:2d} {'PASS' if ok else 'FAIL'}: {text}"
        terminalreporter.write_line(line + (f" [{detail}]" if detail else ""))
