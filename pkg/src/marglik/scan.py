"""Log-likelihood of every table-derived distribution for one pair of margins."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core_tables import DEFAULT_TABLE_LIMIT, MarginPair, enumerate_tables
from .extreme_tables import enumerate_extremes
from .likelihood import ParamVector, inverse_link, marginal_loglik, params_from_log_probs

DEFAULT_XI = 115.13  # -log(1e-50)

KINDS = ("ordinary", "extreme", "independence", "random_mixture")


@dataclass(frozen=True)
class ScanRecord:
    table_index: int
    loglik: float
    kind: str


def table_log_probs(entries: np.ndarray, xi: float) -> np.ndarray:
    """Row-normalized log proportions with zero cells set to ``log eps = -xi``."""
    t = np.asarray(entries)
    lv = np.where(t > 0, np.log(np.maximum(t, 1)), -xi)
    return lv - logsumexp(lv, axis=1, keepdims=True)


def independence_params(margins: MarginPair) -> ParamVector:
    R, C = margins.shape
    cols = margins.cols.astype(float)
    return ParamVector(np.log(cols[1:] / cols[0]), np.zeros((R - 1, C - 1)))


def likelihood_scan(
    margins: MarginPair,
    xi: float = DEFAULT_XI,
    random_mixtures: int = 0,
    seed: int | None = None,
    floor: float | None = None,
    limit: int | None = DEFAULT_TABLE_LIMIT,
) -> list[ScanRecord]:
    """One record per table in enumeration order, then independence, then mixtures.

    Mixtures combine the independence rows with rows drawn from a flat
    Dirichlet, using a weight uniform on [0, 1]. With ``floor`` set, mixtures
    whose log-likelihood falls below it are dropped.
    """
    coll = enumerate_tables(margins, limit=limit)
    extreme_keys = {z.entries.tobytes() for z in enumerate_extremes(margins)}
    records = []
    for k, entries in enumerate(coll.tables):
        params = params_from_log_probs(table_log_probs(entries, xi))
        kind = "extreme" if entries.tobytes() in extreme_keys else "ordinary"
        records.append(ScanRecord(k, marginal_loglik(coll, params), kind))

    indep = independence_params(margins)
    records.append(ScanRecord(coll.count, marginal_loglik(coll, indep), "independence"))

    R, C = margins.shape
    shares = margins.cols / margins.n
    rng = np.random.default_rng(seed)
    index = coll.count + 1
    for _ in range(random_mixtures):
        rows = rng.dirichlet(np.ones(C), size=R)
        w = rng.uniform()
        probs = w * shares[None, :] + (1 - w) * rows
        ll = marginal_loglik(coll, inverse_link(probs))
        if floor is not None and ll < floor:
            continue
        records.append(ScanRecord(index, ll, "random_mixture"))
        index += 1
    return records
