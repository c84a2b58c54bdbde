"""Estimators of shared row-conditional probabilities from unit margins.

* :func:`goodman` -- least squares of column shares on row shares, clipped
  into (0, 1) and repaired by iterative proportional fitting.
* :func:`fisher_scoring` -- exact marginal likelihood maximized with the
  empirical information matrix in place of the expected one.
* :func:`independence_fit` -- aggregate column shares for every row.

:func:`metric_me` and :func:`metric_m` measure distance to a known truth.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core_tables import MarginPair
from .likelihood import (
    EIDataset,
    ParamVector,
    check_cond_probs,
    dataset_eval,
    dataset_loglik,
    empirical_information,
    inverse_link,
    link,
)

log = logging.getLogger(__name__)

CLIP_DELTA = 1e-6


class RankDeficientError(ValueError):
    """The row-share matrix does not have full column rank."""


class IdentificationError(RuntimeError):
    """The empirical information matrix is singular."""


class IPFConvergenceError(RuntimeError):
    def __init__(self, residual: float, sweeps: int):
        super().__init__(f"IPF did not converge in {sweeps} sweeps (residual {residual:.3g})")
        self.residual = residual
        self.sweeps = sweeps


@dataclass(frozen=True)
class GoodmanResult:
    raw: np.ndarray
    repaired: np.ndarray
    clipped_cells: int


@dataclass
class FitResult:
    params: ParamVector
    probs: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    score_norm: float
    info_condition: float = float("nan")
    trace: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "probs": self.probs.tolist(),
            "params": self.params.pack().tolist(),
            "loglik": self.loglik,
            "iterations": self.iterations,
            "converged": self.converged,
            "score_norm": self.score_norm,
        }


@dataclass(frozen=True)
class FisherOptions:
    max_iter: int = 100
    max_halvings: int = 20
    score_tol: float = 1e-6
    loglik_tol: float = 1e-9
    # a fit that stops without an ascent step counts as converged below this
    stall_score_tol: float = 1e-5
    max_condition: float = 1e12


def ipf_adjust(
    joint: np.ndarray,
    margins: MarginPair,
    tol: float = 1e-10,
    max_sweeps: int = 1000,
) -> np.ndarray:
    """Scale rows and columns of a positive table until it has the given margins."""
    t = np.array(joint, dtype=float)
    rows = np.asarray(margins.row_totals, dtype=float)
    cols = np.asarray(margins.col_totals, dtype=float)
    if t.shape != (rows.size, cols.size):
        raise ValueError(f"table shape {t.shape} does not match margins {margins.shape}")
    if (t <= 0).any():
        raise ValueError("IPF needs a strictly positive table")

    def violation(x):
        return max(np.abs(x.sum(axis=1) - rows).max(), np.abs(x.sum(axis=0) - cols).max())

    resid = violation(t)
    sweeps = 0
    while resid >= tol:
        if sweeps == max_sweeps:
            raise IPFConvergenceError(resid, sweeps)
        t *= (rows / t.sum(axis=1))[:, None]
        t *= (cols / t.sum(axis=0))[None, :]
        resid = violation(t)
        sweeps += 1
    return t


def goodman(data: EIDataset, delta: float = CLIP_DELTA) -> GoodmanResult:
    """Goodman's ecological regression with clipping and IPF repair."""
    R, C = data.shape
    U, V = data.U, data.V
    if data.s < R or np.linalg.matrix_rank(U) < R:
        raise RankDeficientError(
            f"row shares of {data.s} units have rank {np.linalg.matrix_rank(U)} < R = {R}"
        )
    X = np.kron(U, np.eye(C - 1))
    y = V[:, : C - 1].ravel()
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    A = beta.reshape(R, C - 1)
    raw = np.column_stack([A, 1.0 - A.sum(axis=1)])

    clipped_cells = int(((raw < 0) | (raw > 1)).sum())
    p = np.clip(raw, delta, 1 - delta)
    p /= p.sum(axis=1, keepdims=True)
    agg = MarginPair(tuple(data.agg_rows), tuple(data.agg_cols))
    joint = ipf_adjust(data.agg_rows[:, None] * p, agg)
    repaired = joint / joint.sum(axis=1, keepdims=True)
    return GoodmanResult(raw, repaired, clipped_cells)


def independence_fit(data: EIDataset) -> FitResult:
    """Every row gets the aggregate column shares ``n_00j / n``."""
    R, C = data.shape
    shares = data.agg_cols / data.agg_cols.sum()
    probs = np.tile(shares, (R, 1))
    params = ParamVector(np.log(shares[1:] / shares[0]), np.zeros((R - 1, C - 1)))
    ll, scores = dataset_eval(data, params)
    norm = float(np.abs(scores.total).max())
    return FitResult(params, probs, ll, 0, norm < FisherOptions.score_tol, norm)


def _default_start(data: EIDataset) -> ParamVector:
    try:
        return inverse_link(goodman(data).repaired)
    except (RankDeficientError, IPFConvergenceError, ValueError) as exc:
        log.info("Goodman start unavailable (%s); starting from independence", exc)
        return independence_fit(data).params


def fisher_scoring(
    data: EIDataset,
    init: ParamVector | None = None,
    opts: FisherOptions | None = None,
) -> FitResult:
    """Maximize the exact multinomial marginal likelihood of a dataset.

    Each iteration solves ``E d = u`` with the total score ``u`` and the
    empirical information ``E`` and moves along ``d``, halving the step
    until the log-likelihood does not decrease. Raises
    :class:`IdentificationError` when ``E`` is singular (in particular
    whenever ``s < R (C - 1)``).
    """
    opts = opts or FisherOptions()
    R, C = data.shape
    k = R * (C - 1)
    if data.s < k:
        raise IdentificationError(
            f"{data.s} units cannot identify {k} parameters (need s >= R(C-1))"
        )
    params = init if init is not None else _default_start(data)
    ll, scores = dataset_eval(data, params)
    trace: list[dict] = []
    cond = float("nan")
    while len(trace) < opts.max_iter:
        u = scores.total
        if np.abs(u).max() < opts.score_tol:
            break
        E = empirical_information(scores)
        cond = float(np.linalg.cond(E))
        if not math.isfinite(cond) or cond > opts.max_condition:
            raise IdentificationError(f"empirical information is singular (condition {cond:.3g})")
        direction = np.linalg.solve(E, u)

        beta = params.pack()
        step = 1.0
        for _ in range(opts.max_halvings + 1):
            cand = ParamVector.unpack(beta + step * direction, R, C)
            cand_ll = dataset_loglik(data, cand)
            if cand_ll >= ll:
                break
            step /= 2
        else:
            log.info("no ascent after %d halvings", opts.max_halvings)
            break
        prev_ll = ll
        params = cand
        ll, scores = dataset_eval(data, params)
        trace.append(
            {
                "iteration": len(trace) + 1,
                "loglik": ll,
                "prev_loglik": prev_ll,
                "step": step,
                "score_norm": float(np.abs(scores.total).max()),
            }
        )
        # linear convergence of the empirical-information step makes the
        # loglik change tiny long before the score is; only stop on it late
        norm = float(np.abs(scores.total).max())
        if abs(ll - prev_ll) < opts.loglik_tol and norm < opts.stall_score_tol:
            break

    norm = float(np.abs(scores.total).max())
    converged = norm < opts.score_tol or (
        len(trace) < opts.max_iter and norm < opts.stall_score_tol
    )
    return FitResult(params, link(params), ll, len(trace), converged, norm, cond, trace)


def metric_me(estimates: np.ndarray, truth: np.ndarray, s: int | None = None) -> float:
    """Root mean squared error of conditional probabilities over units and cells.

    ``estimates`` is either one R x C matrix shared by all ``s`` units or an
    ``(s, R, C)`` stack of per-unit estimates.
    """
    est = np.asarray(estimates, dtype=float)
    pi = np.asarray(truth, dtype=float)
    R, C = pi.shape
    if est.ndim == 2:
        if est.shape != pi.shape:
            raise ValueError("estimate and truth dimensions differ")
        units = 1 if s is None else int(s)
        total = units * ((est - pi) ** 2).sum()
    else:
        if est.shape[1:] != pi.shape:
            raise ValueError("estimate and truth dimensions differ")
        units = est.shape[0]
        if s is not None and s != units:
            raise ValueError(f"s = {s} but {units} unit estimates were given")
        total = ((est - pi[None]) ** 2).sum()
    return math.sqrt(total / (units * R * C))


def metric_m(z, truth: np.ndarray) -> float:
    """RMS distance between a table's conditional rows and the true ones."""
    entries = getattr(z, "entries", z)
    t = np.asarray(entries, dtype=float)
    pi = check_cond_probs(truth, atol=1e-9)
    if t.shape != pi.shape:
        raise ValueError("table and truth dimensions differ")
    cond = t / t.sum(axis=1, keepdims=True)
    return math.sqrt(((cond - pi) ** 2).mean())
