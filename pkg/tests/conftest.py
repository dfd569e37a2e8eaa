import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import acceptance_log  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if not acceptance_log.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in acceptance_log.EXPECTED:
        if name not in acceptance_log.RESULTS:
            terminalreporter.write_line(f"{name} NOT RUN")
            continue
        passed, detail = acceptance_log.RESULTS[name]
        terminalreporter.write_line(f"{name} {'PASS' if passed else 'FAIL'}: {detail}")
