import pytest


ACCEPTANCE_LINES = []


def scalar_matmul(a, b, acc_bits=32):
    """Triple-loop reference on Python ints; shares no code with the kernel."""
    n, k = len(a), len(a[0])
    m = len(b[0])
    out = [[0] * m for _ in range(n)]
    for i in range(n):
        row = [int(x) for x in a[i]]
        for j in range(m):
            s = 0
            for t in range(k):
                s += row[t] * int(b[t][j])
            out[i][j] = s
    half = 1 << (acc_bits - 1)
    return [[((v + half) % (1 << acc_bits)) - half for v in r] for r in out]


@pytest.fixture
def oracle():
    return scalar_matmul


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
