import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# criterion name -> "PASS" / "FAIL", filled through the `criterion` fixture
VERDICTS: dict[str, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    name = getattr(item, "criterion_name", None)
    if name and rep.when == "call":
        VERDICTS[name] = "PASS" if rep.passed else "FAIL"
        print(f"\n{VERDICTS[name]} {name}")


@pytest.fixture
def criterion(request):
    def mark(name):
        request.node.criterion_name = name
        VERDICTS[name] = "FAIL"
    return mark


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(VERDICTS):
        terminalreporter.write_line(f"{VERDICTS[name]} {name}")
