import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_LINES = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    prev = ACCEPTANCE_LINES.get(criterion)
    ok = passed and (prev is None or prev[0])
    text = detail if prev is None else f"{prev[1]}; {detail}"
    ACCEPTANCE_LINES[criterion] = (ok, text)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        ok, text = ACCEPTANCE_LINES[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} | {text}")
