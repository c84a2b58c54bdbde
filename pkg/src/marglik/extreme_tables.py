"""Extreme (Fréchet upper-bound) tables and their epsilon-completions.

Permutations follow the convention "category ``k`` is moved to position
``pi[k]``": with row totals ``m`` the permuted totals satisfy
``t[pi[k]] = m[k]``. Internally permutations are 0-based; the 1-based form
``(3 4 1 2)`` is accepted by :meth:`PermutationPair.from_one_based`.

Quantities that depend on ``eps`` are never formed in linear scale. A cell
of the completed table ``Z(eps)`` is carried as ``coef * eps**power``, and a
log-odds ratio as ``order * xi + offset`` with ``xi = -log(eps)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core_tables import FreqTable, MarginPair

DEFAULT_PERMUTATION_BUDGET = math.factorial(5) ** 2


class PermutationBudgetError(RuntimeError):
    pass


class NotExtremeError(ValueError):
    """The zero pattern of a table does not match any extreme configuration."""


def _check_perm(p: Sequence[int], size: int, name: str) -> tuple[int, ...]:
    p = tuple(int(x) for x in p)
    if sorted(p) != list(range(size)):
        raise ValueError(f"{name} is not a permutation of 0..{size - 1}: {p}")
    return p


@dataclass(frozen=True)
class PermutationPair:
    pi_r: tuple[int, ...]
    pi_c: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "pi_r", _check_perm(self.pi_r, len(self.pi_r), "pi_r"))
        object.__setattr__(self, "pi_c", _check_perm(self.pi_c, len(self.pi_c), "pi_c"))

    @classmethod
    def identity(cls, R: int, C: int) -> "PermutationPair":
        return cls(tuple(range(R)), tuple(range(C)))

    @classmethod
    def from_one_based(cls, pi_r: Sequence[int], pi_c: Sequence[int]) -> "PermutationPair":
        return cls(tuple(int(x) - 1 for x in pi_r), tuple(int(x) - 1 for x in pi_c))

    @classmethod
    def parse(cls, text: str) -> "PermutationPair":
        """Parse a 1-based ``"3,4,1,2/2,1,3,4"`` literal."""
        parts = text.strip().split("/")
        if len(parts) != 2:
            raise ValueError(f"expected 'rowperm/colperm', got {text!r}")
        try:
            r = [int(x) for x in parts[0].split(",")]
            c = [int(x) for x in parts[1].split(",")]
        except ValueError as exc:
            raise ValueError(f"non-integer entry in permutation {text!r}") from exc
        return cls.from_one_based(r, c)

    def one_based(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return tuple(p + 1 for p in self.pi_r), tuple(p + 1 for p in self.pi_c)

    def to_permuted(self, matrix: np.ndarray) -> np.ndarray:
        """Rearrange original-order matrices (last two axes) into permuted order."""
        inv_r, inv_c = np.argsort(self.pi_r), np.argsort(self.pi_c)
        return np.asarray(matrix)[..., inv_r, :][..., inv_c]

    def to_original(self, matrix: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`to_permuted`."""
        return np.asarray(matrix)[..., self.pi_r, :][..., self.pi_c]

    def __str__(self) -> str:
        r, c = self.one_based()
        return ",".join(map(str, r)) + "/" + ",".join(map(str, c))


@dataclass(frozen=True, eq=False)
class ExtremeTable:
    """An extreme table in original category order and the permutations behind it."""

    table: FreqTable
    perms: PermutationPair

    @property
    def entries(self) -> np.ndarray:
        return self.table.entries

    @property
    def permuted_entries(self) -> np.ndarray:
        return self.perms.to_permuted(self.table.entries)

    @property
    def permuted_margins(self) -> MarginPair:
        return self.table.margins.permuted(self.perms.pi_r, self.perms.pi_c)

    def __eq__(self, other):
        if not isinstance(other, ExtremeTable):
            return NotImplemented
        return self.table == other.table

    def __hash__(self):
        return hash(self.table)


def frechet_walk(t_rows: Sequence[int], t_cols: Sequence[int]) -> np.ndarray:
    """Staircase walk from cell (1, 1) on already permuted margins."""
    R, C = len(t_rows), len(t_cols)
    z = np.zeros((R, C), dtype=np.int64)
    row_left = list(t_rows)
    col_left = list(t_cols)
    i = j = 0
    # cells right of a finished row and below a finished column stay 0
    while i < R and j < C:
        a, b = row_left[i], col_left[j]
        if a < b:
            z[i, j] = a
            col_left[j] -= a
            i += 1
        elif a > b:
            z[i, j] = b
            row_left[i] -= b
            j += 1
        else:
            z[i, j] = a
            i += 1
            j += 1
    return z


def build_extreme(margins: MarginPair, perms: PermutationPair) -> ExtremeTable:
    """Construct the extreme table for one pair of permutations."""
    R, C = margins.shape
    if len(perms.pi_r) != R or len(perms.pi_c) != C:
        raise ValueError("permutation sizes do not match the margins")
    pm = margins.permuted(perms.pi_r, perms.pi_c)
    zp = frechet_walk(pm.row_totals, pm.col_totals)
    return ExtremeTable(FreqTable(perms.to_original(zp), margins), perms)


def enumerate_extremes(
    margins: MarginPair, budget: int = DEFAULT_PERMUTATION_BUDGET
) -> list[ExtremeTable]:
    """All distinct extreme tables, one representative per distinct table.

    Permutation pairs are visited in lexicographic order and the first pair
    producing a table is kept as its representative.
    """
    R, C = margins.shape
    n_pairs = math.factorial(R) * math.factorial(C)
    if n_pairs > budget:
        raise PermutationBudgetError(
            f"{R}! * {C}! = {n_pairs} permutation pairs exceeds budget {budget}"
        )
    seen: dict[bytes, ExtremeTable] = {}
    col_perms = list(itertools.permutations(range(C)))
    for pr in itertools.permutations(range(R)):
        for pc in col_perms:
            z = build_extreme(margins, PermutationPair(pr, pc))
            key = z.entries.tobytes()
            if key not in seen:
                seen[key] = z
    return list(seen.values())


@dataclass(frozen=True)
class CompletedTable:
    """``Z(eps)`` in permuted order: cell value ``exp(log_coef) * eps**power``."""

    power: np.ndarray
    log_coef: np.ndarray

    def log_values(self, xi: float) -> np.ndarray:
        return self.log_coef - self.power * xi


@dataclass(frozen=True)
class XiLogOdds:
    """Log-odds ratios of ``Z(eps)`` as ``order * xi + offset``, permuted order.

    ``zero_mask`` marks the ratios that vanish identically (first row and
    column, and the A-type sub-tables).
    """

    zero_mask: np.ndarray
    order: np.ndarray
    offset: np.ndarray
    xi: float
    perms: PermutationPair | None = None
    completed: CompletedTable | None = None

    def values(self, xi: float | None = None) -> np.ndarray:
        x = self.xi if xi is None else xi
        return self.order * x + self.offset

    def at(self, xi: float) -> "XiLogOdds":
        return XiLogOdds(self.zero_mask, self.order, self.offset, xi, self.perms, self.completed)

    def original_order(self) -> tuple[np.ndarray, np.ndarray]:
        """``(order, offset)`` rearranged back to the original categories.

        The result is an interaction matrix equivalent to the log-odds ratios
        up to additive row and column terms, which is all the conditional
        distribution of a table given its margins depends on.
        """
        if self.perms is None:
            return self.order, self.offset
        return self.perms.to_original(self.order), self.perms.to_original(self.offset)

    def log_probs(self, xi: float | None = None) -> np.ndarray:
        """Row-normalized ``log P(Z, eps)`` in original category order."""
        if self.completed is None:
            raise ValueError("no completed table attached")
        x = self.xi if xi is None else xi
        lv = self.completed.log_values(x)
        top = lv.max(axis=1, keepdims=True)
        lp = lv - (top + np.log(np.exp(lv - top).sum(axis=1, keepdims=True)))
        return lp if self.perms is None else self.perms.to_original(lp)


def _complete(zp: np.ndarray) -> CompletedTable:
    """Epsilon-completion of a permuted-order extreme table.

    Zeros in the first row and column become ``eps``; interior zeros are
    filled according to which of ``z_1j`` and ``z_i1`` vanish.
    """
    R, C = zp.shape
    if zp[0, 0] <= 0:
        raise NotExtremeError("extreme tables have a positive (1, 1) cell")
    power = np.zeros((R, C), dtype=np.int64)
    log_coef = np.zeros((R, C))
    pos = zp > 0
    log_coef[pos] = np.log(zp[pos])
    first = np.zeros((R, C), dtype=bool)
    first[0, :] = True
    first[:, 0] = True
    power[first & ~pos] = 1
    log11 = math.log(zp[0, 0])
    for i in range(1, R):
        for j in range(1, C):
            if zp[i, j] > 0:
                continue
            top_zero, left_zero = zp[0, j] == 0, zp[i, 0] == 0
            if top_zero and not left_zero:
                power[i, j] = 1
                log_coef[i, j] = log_coef[i, 0] - log11
            elif left_zero and not top_zero:
                power[i, j] = 1
                log_coef[i, j] = log_coef[0, j] - log11
            elif top_zero and left_zero:
                power[i, j] = 2
                log_coef[i, j] = -log11
            else:
                raise NotExtremeError(
                    f"cell ({i + 1},{j + 1}) is 0 while z_1{j + 1} and z_{i + 1}1 are positive"
                )
    return CompletedTable(power, log_coef)


def epsilon_complete(z: ExtremeTable, xi: float) -> XiLogOdds:
    """Log-odds structure of ``Z(eps)`` for an extreme table, in permuted order.

    Interior sub-tables ``{(1,1), (1,j), (i,1), (i,j)}`` are classified by
    their zero pattern: A-types (``z_ij = 0``) get order 0 and ratio exactly
    0, B-types (one of ``z_1j``, ``z_i1`` zero, ``z_ij > 0``) order 1, and
    C-type (both zero, ``z_ij > 0``) order 2.
    """
    if not xi > 0:
        raise ValueError("xi must be positive")
    zp = z.permuted_entries if isinstance(z, ExtremeTable) else np.asarray(z)
    perms = z.perms if isinstance(z, ExtremeTable) else None
    comp = _complete(zp)
    R, C = zp.shape
    order = np.zeros((R, C), dtype=np.int64)
    offset = np.zeros((R, C))
    zero_mask = np.ones((R, C), dtype=bool)
    p, c = comp.power, comp.log_coef
    for i in range(1, R):
        for j in range(1, C):
            if zp[i, j] == 0:
                # A-types: the fill makes the ratio exactly 1
                continue
            # log z11 + log zij - log zi1 - log z1j, with log eps = -xi
            order[i, j] = p[i, 0] + p[0, j] - p[i, j] - p[0, 0]
            offset[i, j] = c[0, 0] + c[i, j] - c[i, 0] - c[0, j]
            zero_mask[i, j] = order[i, j] == 0 and offset[i, j] == 0.0
    return XiLogOdds(zero_mask, order, offset, float(xi), perms, comp)


def monotone_order_check(z: ExtremeTable) -> bool:
    """Check the ordering of diverging log-odds ratios in permuted order.

    Returns False when the zero pattern cannot be completed (not extreme).
    Otherwise every ratio of order 2 may only be followed, below and to the
    right, by ratios of order 0 or 2; ratios of order 1 by order 0, 1 or 2.
    """
    try:
        xl = epsilon_complete(z, 1.0)
    except NotExtremeError:
        return False
    order = xl.order
    if not np.isin(order, (0, 1, 2)).all():
        return False
    R, C = order.shape
    for i in range(1, R):
        for j in range(1, C):
            below_right = order[i:, j:]
            if order[i, j] == 2 and np.isin(below_right, (1,)).any():
                return False
            if order[i, j] == 1 and (below_right < 0).any():
                return False
    return True


def tail_sums(table: np.ndarray) -> np.ndarray:
    """``T[i, j] = sum_{h >= i, k >= j} table[h, k]``."""
    return np.flip(np.cumsum(np.cumsum(np.flip(table, (-2, -1)), axis=-2), axis=-1), (-2, -1))


def format_extreme(z: ExtremeTable) -> str:
    """Permuted-order layout with row totals appended and column totals below."""
    zp = z.permuted_entries
    pm = z.permuted_margins
    rows = [list(map(int, r)) + [t] for r, t in zip(zp, pm.row_totals)]
    rows.append(list(pm.col_totals) + [pm.n])
    width = max(len(str(v)) for r in rows for v in r)
    return "\n".join(" ".join(str(v).rjust(width) for v in r) for r in rows)
