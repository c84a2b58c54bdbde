"""Margins, frequency tables and exact enumeration of fixed-margin tables.

Two enumerators share one visiting order (row-major lexicographic over the
free cells, cell (1, 1) varying slowest):

* :func:`enumerate_tables` expands all partial assignments cell by cell with
  numpy and stores the result as one ``(T, R, C)`` integer array.
* :func:`fold_tables` walks the same tree depth-first and hands each table to
  a visitor without keeping it.

The last column of every row and the whole last row are forced by the
margins. Admissible values for a free cell come from the remaining row total
and the remaining capacity of the columns to its right, so every partial
assignment extends to at least one complete table.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Iterator, Sequence

import numpy as np

DEFAULT_TABLE_LIMIT = 5_000_000


class InvalidMarginsError(ValueError):
    """Row and column totals that cannot describe a table."""


class TableLimitError(RuntimeError):
    """Raised when a collection would exceed the configured table budget.

    ``partial_count`` is the number of (partial) tables reached when the
    budget tripped; since no branch of the enumeration dies, it is a lower
    bound on the final count.
    """

    def __init__(self, limit: int, partial_count: int):
        super().__init__(
            f"table collection exceeds limit of {limit} "
            f"(reached {partial_count} before aborting)"
        )
        self.limit = limit
        self.partial_count = partial_count


def _as_int_vector(values: Sequence[int], name: str) -> tuple[int, ...]:
    out = []
    for v in values:
        if isinstance(v, (bool, np.bool_)):
            raise InvalidMarginsError(f"{name} must be integers, got {v!r}")
        if isinstance(v, (float, np.floating)):
            if not float(v).is_integer():
                raise InvalidMarginsError(f"{name} must be integers, got {v!r}")
        out.append(int(v))
    return tuple(out)


@dataclass(frozen=True)
class MarginPair:
    """Row totals ``n_i0`` and column totals ``n_0j`` of one table."""

    row_totals: tuple[int, ...]
    col_totals: tuple[int, ...]

    def __post_init__(self):
        rows = _as_int_vector(self.row_totals, "row totals")
        cols = _as_int_vector(self.col_totals, "column totals")
        if not rows or not cols:
            raise InvalidMarginsError("need at least one row and one column")
        if min(rows) <= 0 or min(cols) <= 0:
            raise InvalidMarginsError(
                f"margins must be strictly positive: {rows} / {cols}"
            )
        if sum(rows) != sum(cols):
            raise InvalidMarginsError(
                f"row totals sum to {sum(rows)} but column totals sum to {sum(cols)}"
            )
        object.__setattr__(self, "row_totals", rows)
        object.__setattr__(self, "col_totals", cols)

    @property
    def n(self) -> int:
        return sum(self.row_totals)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.row_totals), len(self.col_totals)

    @property
    def rows(self) -> np.ndarray:
        return np.array(self.row_totals, dtype=np.int64)

    @property
    def cols(self) -> np.ndarray:
        return np.array(self.col_totals, dtype=np.int64)

    def permuted(self, pi_r: Sequence[int], pi_c: Sequence[int]) -> "MarginPair":
        """Margins after sending category ``k`` to position ``pi[k]`` (0-based)."""
        rows = [0] * len(self.row_totals)
        cols = [0] * len(self.col_totals)
        for k, pos in enumerate(pi_r):
            rows[pos] = self.row_totals[k]
        for k, pos in enumerate(pi_c):
            cols[pos] = self.col_totals[k]
        return MarginPair(tuple(rows), tuple(cols))

    def __str__(self) -> str:
        return format_margins(self)


def parse_margins(text: str) -> MarginPair:
    """Parse the ``"r1,r2,.../c1,c2,..."`` literal used on the command line."""
    parts = text.strip().split("/")
    if len(parts) != 2:
        raise InvalidMarginsError(f"expected 'rows/cols', got {text!r}")
    try:
        rows = [int(x) for x in parts[0].split(",")]
        cols = [int(x) for x in parts[1].split(",")]
    except ValueError as exc:
        raise InvalidMarginsError(f"non-integer total in {text!r}") from exc
    return MarginPair(tuple(rows), tuple(cols))


def format_margins(margins: MarginPair) -> str:
    return (
        ",".join(map(str, margins.row_totals))
        + "/"
        + ",".join(map(str, margins.col_totals))
    )


@dataclass(frozen=True)
class FreqTable:
    """An R x C table of nonnegative counts together with its margins."""

    entries: np.ndarray
    margins: MarginPair

    def __post_init__(self):
        arr = np.array(self.entries, dtype=np.int64)
        if arr.ndim != 2 or arr.shape != self.margins.shape:
            raise ValueError(
                f"table shape {arr.shape} does not match margins {self.margins.shape}"
            )
        if (arr < 0).any():
            raise ValueError("table entries must be nonnegative")
        if tuple(arr.sum(axis=1)) != self.margins.row_totals or tuple(
            arr.sum(axis=0)
        ) != self.margins.col_totals:
            raise ValueError("table entries do not reproduce the margins")
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)

    @classmethod
    def from_entries(cls, entries) -> "FreqTable":
        arr = np.asarray(entries, dtype=np.int64)
        margins = MarginPair(tuple(arr.sum(axis=1)), tuple(arr.sum(axis=0)))
        return cls(arr, margins)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def __eq__(self, other):
        if not isinstance(other, FreqTable):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())

    def key(self) -> tuple[int, ...]:
        """Row-major entry sequence; used for deduplication and membership."""
        return tuple(int(x) for x in self.entries.ravel())


@lru_cache(maxsize=32)
def _log_factorial_cache(n: int) -> np.ndarray:
    out = np.zeros(n + 1)
    if n:
        out[1:] = np.cumsum(np.log(np.arange(1, n + 1, dtype=float)))
    out.flags.writeable = False
    return out


def log_factorials(n: int) -> np.ndarray:
    """``log k!`` for ``k = 0..n``, cached."""
    return _log_factorial_cache(max(int(n), 1))


def log_factorial_sum(table) -> float:
    """Sum of ``log n_ij!`` over all cells of a table.

    Accepts a :class:`FreqTable` or anything array-like of counts.
    """
    entries = table.entries if isinstance(table, FreqTable) else np.asarray(table)
    entries = entries.astype(np.int64)
    lf = log_factorials(int(entries.max()) if entries.size else 0)
    return float(lf[entries].sum())


@dataclass(frozen=True)
class TableCollection:
    """All tables with the given margins, in enumeration order.

    ``tables`` is a read-only ``(count, R, C)`` integer array;
    ``log_fact`` holds :func:`log_factorial_sum` for each member.
    """

    margins: MarginPair
    tables: np.ndarray
    log_fact: np.ndarray

    @property
    def count(self) -> int:
        return int(self.tables.shape[0])

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, idx: int) -> FreqTable:
        return FreqTable(self.tables[idx], self.margins)

    def __iter__(self) -> Iterator[FreqTable]:
        for k in range(self.count):
            yield self[k]

    def flat(self) -> np.ndarray:
        """Tables as a ``(count, R*C)`` array, row-major within a table."""
        return self.tables.reshape(self.count, -1)

    def index_of(self, entries) -> int:
        """Position of a table in the collection, or -1 if absent."""
        target = np.asarray(entries, dtype=np.int64).ravel()
        hits = np.flatnonzero((self.flat() == target).all(axis=1))
        return int(hits[0]) if hits.size else -1


def _forced_completion(free: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Fill the last column and last row of each partial table in ``free``."""
    k = free.shape[0]
    R, C = rows.size, cols.size
    out = np.empty((k, R, C), dtype=np.int64)
    out[:, : R - 1, : C - 1] = free
    out[:, : R - 1, C - 1] = rows[: R - 1] - free.sum(axis=2)
    out[:, R - 1, :] = cols - out[:, : R - 1, :].sum(axis=1)
    return out


def enumerate_tables(margins: MarginPair, limit: int | None = DEFAULT_TABLE_LIMIT) -> TableCollection:
    """Enumerate every nonnegative integer table with the given margins.

    Parameters
    ----------
    margins : MarginPair
    limit : int or None
        Abort with :class:`TableLimitError` once the collection (or any
        intermediate frontier, which never exceeds it) grows past ``limit``.
        ``None`` disables the check.
    """
    if not isinstance(margins, MarginPair):
        raise InvalidMarginsError(f"expected MarginPair, got {type(margins).__name__}")
    rows, cols = margins.rows, margins.cols
    R, C = rows.size, cols.size
    fr, fc = R - 1, C - 1

    # frontier of partial assignments to the free (R-1) x (C-1) block
    free = np.zeros((1, fr, fc), dtype=np.int64)
    row_rem = np.tile(rows[:fr], (1, 1))
    col_rem = np.tile(cols, (1, 1))
    for i in range(fr):
        for j in range(fc):
            rr = row_rem[:, i]
            cap_right = col_rem[:, j + 1 :].sum(axis=1)
            lo = np.maximum(0, rr - cap_right)
            hi = np.minimum(rr, col_rem[:, j])
            width = hi - lo + 1
            total = int(width.sum())
            if limit is not None and total > limit:
                raise TableLimitError(limit, total)
            parent = np.repeat(np.arange(free.shape[0]), width)
            starts = np.cumsum(width) - width
            values = lo[parent] + np.arange(total) - starts[parent]
            free = free[parent]
            free[:, i, j] = values
            row_rem = row_rem[parent]
            row_rem[:, i] -= values
            col_rem = col_rem[parent]
            col_rem[:, j] -= values
        if fc == 0:
            continue
        # the last column of row i takes whatever the row has left
        col_rem[:, C - 1] -= row_rem[:, i]

    if limit is not None and free.shape[0] > limit:
        raise TableLimitError(limit, free.shape[0])
    tables = _forced_completion(free, rows, cols)
    lf = log_factorials(margins.n)
    log_fact = lf[tables].sum(axis=(1, 2))
    tables.flags.writeable = False
    log_fact.flags.writeable = False
    return TableCollection(margins, tables, log_fact)


def iter_tables(margins: MarginPair) -> Iterator[np.ndarray]:
    """Yield tables one at a time, in the order of :func:`enumerate_tables`.

    The yielded array is reused between iterations; copy it to keep it.
    """
    rows, cols = margins.rows, margins.cols
    R, C = rows.size, cols.size
    table = np.zeros((R, C), dtype=np.int64)
    col_rem = cols.copy()

    def fill(i: int, j: int, row_left: int) -> Iterator[np.ndarray]:
        if i == R - 1:
            table[i, :] = col_rem
            yield table
            return
        if j == C - 1:
            table[i, j] = row_left
            col_rem[j] -= row_left
            yield from fill(i + 1, 0, int(rows[i + 1]))
            col_rem[j] += row_left
            return
        cap_right = int(col_rem[j + 1 :].sum())
        lo = max(0, row_left - cap_right)
        hi = min(row_left, int(col_rem[j]))
        for v in range(lo, hi + 1):
            table[i, j] = v
            col_rem[j] -= v
            yield from fill(i, j + 1, row_left - v)
            col_rem[j] += v

    yield from fill(0, 0, int(rows[0]))


def fold_tables(
    margins: MarginPair,
    visitor: Callable[[FreqTable, Any], Any],
    initial: Any = None,
) -> Any:
    """Thread an accumulator through every table with the given margins.

    ``visitor(table, acc)`` returns the new accumulator. Tables are visited in
    the same order as :func:`enumerate_tables` and are not retained.
    """
    acc = initial
    for entries in iter_tables(margins):
        acc = visitor(FreqTable(entries.copy(), margins), acc)
    return acc


def count_tables(margins: MarginPair) -> int:
    return fold_tables(margins, lambda _t, acc: acc + 1, 0)
