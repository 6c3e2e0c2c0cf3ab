import random
from contextlib import contextmanager

import pytest

ACCEPTANCE_LINES = []


def record_acceptance(name, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


@contextmanager
def criterion(name):
    """Record PASS if the block finishes, FAIL (with the reason) if it raises."""
    try:
        yield
    except BaseException as exc:
        record_acceptance(name, False, f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
        raise
    record_acceptance(name, True)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return random.Random(20240611)


def random_key(rng, length=None):
    if length is None:
        length = rng.choice([1, 5, 16, 40, 256])
    return bytes(rng.randrange(256) for _ in range(length))
