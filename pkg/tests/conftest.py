import re

from _acceptance_log import NAMES, RESULTS


def pytest_terminal_summary(terminalreporter):
    ran = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            m = re.search(r"test_acceptance\.py::test_criterion_(\d)_", getattr(rep, "nodeid", ""))
            if m:
                ran[int(m.group(1))] = outcome
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for n, name in NAMES.items():
        if n in RESULTS:
            _, ok, detail = RESULTS[n]
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {n}. {name}: {detail}")
        elif n in ran:
            terminalreporter.write_line(f"FAIL  {n}. {name}: errored before measuring")
        else:
            terminalreporter.write_line(f"----  {n}. {name}: not selected")
