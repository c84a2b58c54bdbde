"""Marginal likelihood of observed margins under shared row-conditional probabilities.

Row-conditional probabilities are parametrized with logits ``phi_j`` against
the first column and log-odds ratios ``lambda_ij`` against the first row and
column. Given a table ``N`` with the observed margins, its weight under the
extended hypergeometric distribution is ``exp(V(N, Lambda) - G(N))`` with
``V = sum n_ij lambda_ij`` and ``G = sum log n_ij!``. The log-likelihood of
one unit is::

    L = sum_j n_0j phi_j + log sum_N exp(V(N) - G(N))
        - sum_i n_i0 log sum_j exp(phi_j + lambda_ij)

which drops the constant ``sum_i log n_i0!``. Differences and scores do not
depend on it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .core_tables import (
    DEFAULT_TABLE_LIMIT,
    FreqTable,
    MarginPair,
    TableCollection,
    TableLimitError,
    enumerate_tables,
)
from .extreme_tables import XiLogOdds


class UnitBudgetError(TableLimitError):
    """A unit of a dataset has too many compatible tables."""

    def __init__(self, unit: int, limit: int, partial_count: int):
        super().__init__(limit, partial_count)
        self.unit = unit
        self.args = (f"unit {unit}: " + self.args[0],)


@dataclass(frozen=True)
class ParamVector:
    """Free parameters: ``phi_2..phi_C`` then ``lambda_ij`` (i, j >= 2) row-wise."""

    phi: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float).reshape(-1)
        lam = np.array(self.lam, dtype=float)
        if lam.ndim != 2 or lam.shape[1] != phi.size:
            raise ValueError(f"lambda block {lam.shape} does not match {phi.size} logits")
        if not (np.isfinite(phi).all() and np.isfinite(lam).all()):
            raise ValueError("parameters must be finite")
        phi.flags.writeable = False
        lam.flags.writeable = False
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "lam", lam)

    @property
    def R(self) -> int:
        return self.lam.shape[0] + 1

    @property
    def C(self) -> int:
        return self.phi.size + 1

    @property
    def size(self) -> int:
        return self.R * (self.C - 1)

    @classmethod
    def zeros(cls, R: int, C: int) -> "ParamVector":
        return cls(np.zeros(C - 1), np.zeros((R - 1, C - 1)))

    @classmethod
    def unpack(cls, beta: Sequence[float], R: int, C: int) -> "ParamVector":
        beta = np.asarray(beta, dtype=float)
        if beta.size != R * (C - 1):
            raise ValueError(f"expected {R * (C - 1)} parameters, got {beta.size}")
        return cls(beta[: C - 1], beta[C - 1 :].reshape(R - 1, C - 1))

    def pack(self) -> np.ndarray:
        return np.concatenate([self.phi, self.lam.ravel()])

    def full_phi(self) -> np.ndarray:
        return np.concatenate([[0.0], self.phi])

    def full_lambda(self) -> np.ndarray:
        out = np.zeros((self.R, self.C))
        out[1:, 1:] = self.lam
        return out

    def logits(self) -> np.ndarray:
        return self.full_phi()[None, :] + self.full_lambda()


def link(params: ParamVector) -> np.ndarray:
    """Row-conditional probabilities ``p_{j|i}`` as an R x C row-stochastic array."""
    return np.exp(log_link(params))


def log_link(params: ParamVector) -> np.ndarray:
    eta = params.logits()
    return eta - logsumexp(eta, axis=1, keepdims=True)


def params_from_log_probs(log_p: np.ndarray) -> ParamVector:
    """Inverse link from log conditional (or joint) probabilities.

    Row factors cancel in the odds ratios, so conditional and joint
    probabilities give the same ``lambda``; ``phi`` is read off the first row.
    """
    lp = np.asarray(log_p, dtype=float)
    phi = lp[0, 1:] - lp[0, 0]
    lam = lp[1:, 1:] + lp[0, 0] - lp[1:, :1] - lp[:1, 1:]
    return ParamVector(phi, lam)


def inverse_link(probs: np.ndarray) -> ParamVector:
    p = np.asarray(probs, dtype=float)
    if (p <= 0).any():
        raise ValueError("inverse link needs strictly positive probabilities")
    return params_from_log_probs(np.log(p))


def check_cond_probs(probs: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if p.ndim != 2:
        raise ValueError("conditional probabilities must be a matrix")
    if (p < 0).any() or (p > 1).any():
        raise ValueError("conditional probabilities must lie in [0, 1]")
    if not np.allclose(p.sum(axis=1), 1.0, rtol=0, atol=atol):
        raise ValueError("rows of conditional probabilities must sum to 1")
    return p


def _interaction(lam, R: int, C: int) -> np.ndarray:
    """Full R x C interaction matrix from a ParamVector, block or matrix."""
    if isinstance(lam, ParamVector):
        return lam.full_lambda()
    if isinstance(lam, XiLogOdds):
        order, offset = lam.original_order()
        return order * lam.xi + offset
    arr = np.asarray(lam, dtype=float)
    if arr.shape == (R, C):
        return arr
    if arr.shape == (R - 1, C - 1):
        out = np.zeros((R, C))
        out[1:, 1:] = arr
        return out
    if arr.ndim == 0:
        out = np.zeros((R, C))
        out[1:, 1:] = float(arr)
        return out
    raise ValueError(f"interaction of shape {arr.shape} does not fit a {R}x{C} table")


def v_stat(table, lam) -> float:
    """``V(N, Lambda) = sum_ij n_ij lambda_ij``."""
    entries = table.entries if isinstance(table, FreqTable) else np.asarray(table)
    R, C = entries.shape
    return float((entries * _interaction(lam, R, C)).sum())


def _collection(margins, limit: int | None) -> TableCollection:
    if isinstance(margins, TableCollection):
        return margins
    return enumerate_tables(margins, limit=limit)


def table_log_weights(collection: TableCollection, lam) -> np.ndarray:
    """Unnormalized log weights ``V(N) - G(N)`` over a collection.

    With :class:`XiLogOdds` input the integer part ``N . order`` is formed
    exactly before scaling by ``xi``.
    """
    R, C = collection.margins.shape
    flat = collection.flat()
    if isinstance(lam, XiLogOdds):
        order, offset = lam.original_order()
        v = lam.xi * (flat @ order.ravel()).astype(float) + flat @ offset.ravel()
    else:
        v = flat @ _interaction(lam, R, C).ravel()
    return v - collection.log_fact


def table_weights(collection: TableCollection, lam) -> np.ndarray:
    """Normalized extended hypergeometric probabilities of each table."""
    lw = table_log_weights(collection, lam)
    return np.exp(lw - logsumexp(lw))


@dataclass(frozen=True)
class ExpectedTable:
    values: np.ndarray
    margins: MarginPair


def cond_expectations(margins, lam, limit: int | None = DEFAULT_TABLE_LIMIT) -> ExpectedTable:
    """Conditional expectations ``M_ij`` of the cells given both margins.

    ``margins`` may be a :class:`MarginPair` or an already enumerated
    :class:`TableCollection`.
    """
    coll = _collection(margins, limit)
    w = table_weights(coll, lam)
    R, C = coll.margins.shape
    return ExpectedTable((w @ coll.flat()).reshape(R, C), coll.margins)


def _unit_eval(coll: TableCollection, params: ParamVector, want_score: bool):
    m = coll.margins
    rows, cols = m.rows, m.cols
    if params.R != rows.size or params.C != cols.size:
        raise ValueError(
            f"parameters are for {params.R}x{params.C} tables, margins are {m.shape}"
        )
    eta = params.logits()
    row_lse = logsumexp(eta, axis=1)
    lw = table_log_weights(coll, params)
    lse = logsumexp(lw)
    ll = float(cols @ params.full_phi() + lse - rows @ row_lse)
    if not want_score:
        return ll, None
    p = np.exp(eta - row_lse[:, None])
    fitted = rows[:, None] * p
    w = np.exp(lw - lse)
    M = (w @ coll.flat()).reshape(m.shape)
    score = np.concatenate([(cols - fitted.sum(axis=0))[1:], (M - fitted)[1:, 1:].ravel()])
    return ll, score


def marginal_loglik(margins, params: ParamVector, limit: int | None = DEFAULT_TABLE_LIMIT) -> float:
    """Log-likelihood of the column totals given the row totals (up to a constant)."""
    return _unit_eval(_collection(margins, limit), params, False)[0]


def unit_score(margins, params: ParamVector, limit: int | None = DEFAULT_TABLE_LIMIT) -> np.ndarray:
    """Gradient of :func:`marginal_loglik` in packed parameter order.

    The first ``C - 1`` entries are ``n_0j - sum_i n_i0 p_{j|i}``; the rest
    are ``M_ij - n_i0 p_{j|i}`` for ``i, j >= 2`` with ``j`` running faster.
    """
    return _unit_eval(_collection(margins, limit), params, True)[1]


def extreme_params(xlo: XiLogOdds, xi: float | None = None) -> ParamVector:
    """Parameters of ``P(Z, eps)`` in original category order."""
    return params_from_log_probs(xlo.log_probs(xi))


@dataclass(frozen=True)
class EIDataset:
    """Margins of ``s`` local units sharing the same R x C layout."""

    units: tuple[MarginPair, ...]
    ids: tuple[str, ...] | None = None
    max_tables: int | None = DEFAULT_TABLE_LIMIT

    def __post_init__(self):
        units = tuple(self.units)
        if not units:
            raise ValueError("dataset needs at least one unit")
        shapes = {u.shape for u in units}
        if len(shapes) != 1:
            raise ValueError(f"units have differing dimensions: {sorted(shapes)}")
        object.__setattr__(self, "units", units)
        if self.ids is None:
            object.__setattr__(self, "ids", tuple(str(h + 1) for h in range(len(units))))
        elif len(self.ids) != len(units):
            raise ValueError("one id per unit is required")

    @property
    def s(self) -> int:
        return len(self.units)

    @property
    def shape(self) -> tuple[int, int]:
        return self.units[0].shape

    @cached_property
    def row_totals(self) -> np.ndarray:
        return np.array([u.row_totals for u in self.units], dtype=np.int64)

    @cached_property
    def col_totals(self) -> np.ndarray:
        return np.array([u.col_totals for u in self.units], dtype=np.int64)

    @property
    def sizes(self) -> np.ndarray:
        return self.row_totals.sum(axis=1)

    @property
    def agg_rows(self) -> np.ndarray:
        return self.row_totals.sum(axis=0)

    @property
    def agg_cols(self) -> np.ndarray:
        return self.col_totals.sum(axis=0)

    @property
    def U(self) -> np.ndarray:
        """Row shares ``n_hi0 / n_h00``, one unit per row."""
        return self.row_totals / self.sizes[:, None]

    @property
    def V(self) -> np.ndarray:
        """Column shares ``n_h0j / n_h00``, one unit per row."""
        return self.col_totals / self.sizes[:, None]

    @cached_property
    def collections(self) -> tuple[TableCollection, ...]:
        out = []
        for h, u in enumerate(self.units):
            try:
                out.append(enumerate_tables(u, limit=self.max_tables))
            except TableLimitError as exc:
                raise UnitBudgetError(h, exc.limit, exc.partial_count) from None
        return tuple(out)

    def replicated(self, k: int) -> "EIDataset":
        return EIDataset(self.units * k, max_tables=self.max_tables)


@dataclass(frozen=True)
class ScoreSet:
    """Per-unit scores as columns of ``per_unit`` and their total."""

    per_unit: np.ndarray
    total: np.ndarray

    @property
    def s(self) -> int:
        return self.per_unit.shape[1]


def dataset_eval(data: EIDataset, params: ParamVector, want_score: bool = True):
    """Log-likelihood and (optionally) scores of a dataset in one pass."""
    lls = []
    cols = []
    for coll in data.collections:
        ll, sc = _unit_eval(coll, params, want_score)
        lls.append(ll)
        cols.append(sc)
    ll = float(np.sum(lls))
    if not want_score:
        return ll, None
    S = np.column_stack(cols)
    return ll, ScoreSet(S, S.sum(axis=1))


def dataset_loglik(data: EIDataset, params: ParamVector) -> float:
    return dataset_eval(data, params, want_score=False)[0]


def dataset_score(data: EIDataset, params: ParamVector) -> ScoreSet:
    return dataset_eval(data, params)[1]


def empirical_information(scores: ScoreSet) -> np.ndarray:
    """Centered cross-product of unit scores, ``sum_h (u_h - u/s)(u_h - u/s)^T``."""
    S = scores.per_unit
    if S.shape[1] < 2:
        raise ValueError("empirical information needs at least two units")
    centered = S - S.mean(axis=1, keepdims=True)
    return centered @ centered.T
