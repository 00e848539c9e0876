import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_verdicts = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_runtest_logreport(report):
    crit = _CRIT.get(report.nodeid)
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        word = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        _verdicts[crit] = word


_CRIT = {}


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _CRIT[item.nodeid] = m.args


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for (n, title), word in sorted(_verdicts.items()):
        terminalreporter.write_line(f"criterion {n:>2}: {word}  {title}")
