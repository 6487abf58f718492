"""Chance-adjusted partition agreement: AMI (max-normalized) and ARI."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

__all__ = ["Contingency", "contingency", "mutual_info", "entropy",
           "expected_mutual_info", "ami", "ari"]


@dataclass(frozen=True)
class Contingency:
    table: np.ndarray
    row_sums: np.ndarray
    col_sums: np.ndarray
    n: int


def _as_array(labels) -> np.ndarray:
    return np.asarray(getattr(labels, "assignments", labels)).ravel()


def contingency(a, b) -> Contingency:
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise ValueError("labelings must have the same length")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    ai, bi = ai.ravel(), bi.ravel()
    r, c = (ai.max() + 1, bi.max() + 1) if a.size else (0, 0)
    table = np.zeros((r, c), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return Contingency(table, table.sum(axis=1), table.sum(axis=0), int(a.size))


def entropy(counts: np.ndarray) -> float:
    counts = counts[counts > 0].astype(np.float64)
    p = counts / counts.sum()
    return float(-np.sum(p * np.log(p)))


def mutual_info(ct: Contingency) -> float:
    nz = ct.table > 0
    nij = ct.table[nz].astype(np.float64)
    ai, bj = np.nonzero(nz)
    n = ct.n
    return float(np.sum(nij / n * (np.log(nij * n) - np.log(ct.row_sums[ai] * 1.0 * ct.col_sums[bj]))))


def expected_mutual_info(ct: Contingency) -> float:
    """Expected mutual information under the hypergeometric permutation model."""
    a = ct.row_sums.astype(np.float64)
    b = ct.col_sums.astype(np.float64)
    N = float(ct.n)
    lg_a, lg_b = gammaln(a + 1), gammaln(b + 1)
    lg_na, lg_nb = gammaln(N - a + 1), gammaln(N - b + 1)
    lg_N = gammaln(N + 1)
    emi = 0.0
    top = int(min(a.max(), b.max()))
    nij = np.arange(1, top + 1, dtype=np.float64)[None, :]
    for i, ai in enumerate(a):
        # rows: clusters of b; columns: candidate overlap sizes
        bj = b[:, None]
        valid = (nij >= np.maximum(1.0, ai + bj - N)) & (nij <= np.minimum(ai, bj))
        safe = np.where(valid, nij, 1.0)
        term = safe / N * (np.log(N * safe) - np.log(ai * bj))
        logp = (lg_a[i] + lg_b[:, None] + lg_na[i] + lg_nb[:, None] - lg_N
                - gammaln(safe + 1) - gammaln(np.maximum(ai - safe, 0) + 1)
                - gammaln(np.maximum(bj - safe, 0) + 1)
                - gammaln(np.maximum(N - ai - bj + safe, 0) + 1))
        emi += float(np.sum(np.where(valid, term * np.exp(logp), 0.0)))
    return emi


def ami(a, b) -> float:
    """Adjusted mutual information normalized by ``max(H(a), H(b))``."""
    ct = contingency(a, b)
    r, c = ct.table.shape
    if (r == c == 1) or (r == c == ct.n) or ct.n == 0:
        return 1.0
    mi = mutual_info(ct)
    emi = expected_mutual_info(ct)
    h = max(entropy(ct.row_sums), entropy(ct.col_sums))
    denom = h - emi
    # guard the vanishing denominator the same way for both signs
    tiny = np.finfo(np.float64).eps
    if abs(denom) < tiny:
        denom = tiny if denom >= 0 else -tiny
    return float((mi - emi) / denom)


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1) / 2


def ari(a, b) -> float:
    """Adjusted Rand index (pair counting)."""
    ct = contingency(a, b)
    n = ct.n
    if n < 2:
        return 1.0
    sum_ij = _comb2(ct.table).sum()
    sa, sb = _comb2(ct.row_sums).sum(), _comb2(ct.col_sums).sum()
    expected = sa * sb / _comb2(n)
    max_idx = (sa + sb) / 2
    if max_idx == expected:
        return 1.0
    return float((sum_ij - expected) / (max_idx - expected))
