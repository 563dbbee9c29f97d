import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# acceptance tests append (number, status, detail); printed once at the end of the run
CRITERIA: list = []


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n, status, detail in sorted(CRITERIA):
        terminalreporter.write_line(f"CRITERION {n:>2} {status}: {detail}")
