"""Synthetic ecological data: multinomial rows, row-wise multinomial transitions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_tables import MarginPair
from .likelihood import EIDataset, check_cond_probs

TRUE_PI = np.array(
    [
        [0.490, 0.280, 0.230],
        [0.300, 0.480, 0.220],
        [0.210, 0.320, 0.470],
    ]
)


@dataclass(frozen=True)
class SimulatedData:
    data: EIDataset
    truth: np.ndarray
    seed: int | None
    rejections: int
    tables: np.ndarray  # the (s, R, C) joint tables behind the margins


def simulate_units(
    s: int = 60,
    n: int = 40,
    truth: np.ndarray = TRUE_PI,
    seed: int | None = None,
    row_probs: np.ndarray | None = None,
    max_tables: int | None = None,
) -> SimulatedData:
    """Draw ``s`` units of size ``n``.

    Row totals come from a multinomial with ``row_probs`` (uniform by
    default); each row is then split over columns by a multinomial with the
    matching row of ``truth``. Units with a zero row or column total are
    drawn again.
    """
    pi = check_cond_probs(truth, atol=1e-9)
    R, C = pi.shape
    if s < 1 or n < 1:
        raise ValueError("s and n must be positive")
    if n < max(R, C):
        raise ValueError(f"n = {n} cannot give positive totals for a {R}x{C} table")
    rp = np.full(R, 1.0 / R) if row_probs is None else np.asarray(row_probs, dtype=float)
    rng = np.random.default_rng(seed)
    units, tables = [], []
    rejections = 0
    while len(units) < s:
        rows = rng.multinomial(n, rp)
        table = np.array([rng.multinomial(r, pi[i]) for i, r in enumerate(rows)])
        cols = table.sum(axis=0)
        if (rows == 0).any() or (cols == 0).any():
            rejections += 1
            continue
        units.append(MarginPair(tuple(rows), tuple(cols)))
        tables.append(table)
    kwargs = {} if max_tables is None else {"max_tables": max_tables}
    return SimulatedData(EIDataset(tuple(units), **kwargs), pi, seed, rejections, np.array(tables))
