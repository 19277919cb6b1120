"""Collects the acceptance verdicts and prints them after the run."""

import time
from contextlib import contextmanager

VERDICTS: dict[int, str] = {}


@contextmanager
def criterion(number: int, title: str, limit_s: float):
    """Time the block; record PASS only if it succeeds within ``limit_s`` seconds."""
    t0 = time.perf_counter()
    try:
        yield
    except BaseException as exc:
        dt = time.perf_counter() - t0
        VERDICTS[number] = f"FAIL criterion {number:2d} {title} ({dt:.2f}s): {type(exc).__name__}: {exc}".splitlines()[0]
        print(VERDICTS[number])
        raise
    dt = time.perf_counter() - t0
    ok = dt < limit_s
    VERDICTS[number] = f"{'PASS' if ok else 'FAIL'} criterion {number:2d} {title} ({dt:.2f}s, limit {limit_s:g}s)"
    print(VERDICTS[number])
    assert ok, f"criterion {number} took {dt:.1f}s, limit {limit_s}s"


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[n])
