import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from marglik import MarginPair, PermutationPair, enumerate_tables  # noqa: E402

# Permutation pairs for these margins with their staircase tables in permuted order.
STAIRCASE_MARGINS = MarginPair((44, 37, 57, 62), (57, 58, 42, 43))
STAIRCASES = [
    (
        ((3, 4, 1, 2), (2, 1, 3, 4)),
        [[57, 0, 0, 0], [1, 57, 4, 0], [0, 0, 38, 6], [0, 0, 0, 37]],
    ),
    (
        ((1, 3, 2, 4), (2, 4, 1, 3)),
        [[42, 2, 0, 0], [0, 55, 2, 0], [0, 0, 37, 0], [0, 0, 4, 58]],
    ),
    (
        ((3, 2, 1, 4), (2, 3, 4, 1)),
        [[43, 14, 0, 0], [0, 37, 0, 0], [0, 6, 38, 0], [0, 0, 20, 42]],
    ),
]

# Extreme tables for margins of size 100,000.
LARGE_EXTREMES = [
    [[33193, 0, 0], [125, 33233, 48], [0, 0, 33401]],
    [[0, 0, 33193], [173, 33233, 0], [33145, 0, 256]],
    [[33193, 0, 0], [125, 0, 33281], [0, 33233, 168]],
]

MARGINS_3X3 = MarginPair((8, 20, 12), (12, 7, 21))


@pytest.fixture(scope="session")
def margins33():
    return MARGINS_3X3


@pytest.fixture(scope="session")
def tables33():
    return enumerate_tables(MARGINS_3X3)


@pytest.fixture(scope="session")
def staircases():
    return [
        (PermutationPair.from_one_based(pr, pc), np.array(z)) for (pr, pc), z in STAIRCASES
    ]


def random_margins(rng, R, C, n):
    """Strictly positive random margins summing to ``n``."""
    while True:
        rows = rng.multinomial(n, np.full(R, 1 / R))
        cols = rng.multinomial(n, np.full(C, 1 / C))
        if rows.min() > 0 and cols.min() > 0:
            return MarginPair(tuple(rows), tuple(cols))


# criterion id -> (passed, detail); filled by test_acceptance
ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")
