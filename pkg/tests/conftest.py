import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import SUMMARY
    except ImportError:
        return
    if not SUMMARY:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(SUMMARY):
        terminalreporter.write_line(SUMMARY[n])
