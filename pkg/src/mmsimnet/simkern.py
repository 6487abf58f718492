"""Pairwise distances, the locally scaled exponential affinity, and z-scoring."""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .mmgen import ModalityData

__all__ = ["Orientation", "SimilarityMatrix", "KernelParams", "one_hot",
           "encode_features", "pairwise_euclidean", "knn_indices",
           "scaled_affinity", "zscore", "EPS_FLOOR"]

EPS_FLOOR = 1e-12


class Orientation(str, enum.Enum):
    DISTANCE = "distance"   # smaller is closer
    AFFINITY = "affinity"   # larger is closer


@dataclass(frozen=True)
class SimilarityMatrix:
    """``n x n`` pairwise values with an orientation and a definedness mask.

    ``warnings`` collects degenerate-input notes (zero variance, SNF
    non-convergence); ``info`` carries method diagnostics such as iteration
    counts.
    """

    values: np.ndarray
    orientation: Orientation
    defined: np.ndarray | None = None
    warnings: tuple = ()
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        V = np.asarray(self.values, dtype=np.float64)
        if V.ndim != 2 or V.shape[0] != V.shape[1]:
            raise ValueError("similarity matrix must be square")
        D = np.ones(V.shape, dtype=bool) if self.defined is None else np.asarray(self.defined, bool)
        if D.shape != V.shape:
            raise ValueError("defined mask shape mismatch")
        object.__setattr__(self, "values", V)
        object.__setattr__(self, "defined", D)
        object.__setattr__(self, "orientation", Orientation(self.orientation))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def is_total(self) -> bool:
        return bool(self.defined.all())

    def present(self) -> np.ndarray:
        """Entities with a defined diagonal (i.e. present in the modality)."""
        return np.diag(self.defined).copy()


@dataclass(frozen=True)
class KernelParams:
    """Affinity kernel settings.

    ``form="literal"`` evaluates ``exp(-d^2 / (mu * eps))``, whose exponent
    grows with the distance scale.  ``form="gaussian"`` uses a Gaussian of
    bandwidth ``mu * eps``, ``exp(-d^2 / (2 * (mu * eps)^2))``, which is
    invariant to rescaling the features.
    """

    mu: float = 0.5
    k_neighbors: int = 25
    form: str = "literal"

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be positive")
        if self.form not in ("literal", "gaussian"):
            raise ValueError(f"unknown kernel form {self.form!r}")


def one_hot(X: np.ndarray, n_categories: int) -> np.ndarray:
    """One-hot encode category indices column by column (NaN rows stay NaN)."""
    n, d = X.shape
    out = np.zeros((n, d * n_categories))
    ok = ~np.isnan(X).any(axis=1)
    idx = X[ok].astype(np.int64) + np.arange(d) * n_categories
    rows = np.repeat(np.flatnonzero(ok), d)
    out[rows, idx.ravel()] = 1.0
    out[~ok] = np.nan
    return out


def encode_features(mod: ModalityData) -> np.ndarray:
    """Feature matrix ready for Euclidean distance (categoricals one-hot encoded)."""
    if mod.n_categories:
        return one_hot(mod.features, mod.n_categories)
    return mod.features


def _euclidean(X: np.ndarray) -> np.ndarray:
    return squareform(pdist(X, "euclidean"))


def pairwise_euclidean(X) -> SimilarityMatrix:
    """Euclidean distances between present rows; pairs with an absent entity are undefined.

    Accepts a :class:`ModalityData` or a plain array (NaN rows mark absence).
    """
    if isinstance(X, ModalityData):
        present = X.present
        F = encode_features(X)
    else:
        F = np.asarray(X, dtype=np.float64)
        present = ~np.isnan(F).any(axis=1)
    if present.sum() < 2:
        raise ValueError("need at least two present entities")
    n = F.shape[0]
    D = np.full((n, n), np.nan)
    idx = np.flatnonzero(present)
    D[np.ix_(idx, idx)] = _euclidean(F[idx])
    defined = present[:, None] & present[None, :]
    return SimilarityMatrix(D, Orientation.DISTANCE, defined)


def knn_indices(values: np.ndarray, k: int, orientation: Orientation,
                candidates: np.ndarray | None = None) -> np.ndarray:
    """Row-wise indices of the ``k`` closest candidates, self excluded.

    Ties are broken by ascending index.  Rows of non-candidate entities are
    filled with ``-1``.
    """
    n = values.shape[0]
    cand = np.ones(n, dtype=bool) if candidates is None else np.asarray(candidates, bool)
    idx = np.flatnonzero(cand)
    if k > idx.size - 1:
        raise ValueError(f"k={k} needs at least {k + 1} candidate entities, have {idx.size}")
    sub = values[np.ix_(idx, idx)]
    key = sub if orientation == Orientation.DISTANCE else -sub
    key = np.where(np.eye(idx.size, dtype=bool), np.inf, key)
    order = np.argsort(key, axis=1, kind="stable")[:, :k]
    out = np.full((n, k), -1, dtype=np.int64)
    out[idx] = idx[order]
    return out


def scaled_affinity(D: SimilarityMatrix, params: KernelParams = KernelParams()) -> SimilarityMatrix:
    """Locally scaled exponential kernel ``exp(-d^2 / (mu * eps_ij))``.

    ``eps_ij`` averages the mean distance of ``i`` to its k nearest present
    neighbours, the same for ``j``, and ``d_ij``; it is floored at
    ``EPS_FLOOR`` so duplicate points stay finite.  See :class:`KernelParams`
    for the scale-free ``gaussian`` variant.
    """
    if D.orientation != Orientation.DISTANCE:
        raise ValueError("scaled_affinity expects a distance matrix")
    present = D.present()
    k = params.k_neighbors
    if present.sum() < k + 1:
        raise ValueError(f"need at least {k + 1} present entities for k={k}")
    nn = knn_indices(D.values, k, Orientation.DISTANCE, present)
    rows = np.flatnonzero(present)
    local = np.full(D.n, np.nan)
    local[rows] = D.values[rows[:, None], nn[rows]].mean(axis=1)
    d = D.values
    eps = (local[:, None] + local[None, :] + d) / 3.0
    eps = np.maximum(eps, EPS_FLOOR)
    with np.errstate(invalid="ignore"):
        if params.form == "literal":
            W = np.exp(-(d * d) / (params.mu * eps))
        else:
            W = np.exp(-(d * d) / (2.0 * (params.mu * eps) ** 2))
    W[~D.defined] = np.nan
    return SimilarityMatrix(W, Orientation.AFFINITY, D.defined.copy())


def zscore(S: SimilarityMatrix) -> SimilarityMatrix:
    """Standardize defined off-diagonal entries to mean 0 and (population) std 1.

    A constant input yields zeros and a ``"zero-variance"`` warning.
    """
    mask = S.defined & ~np.eye(S.n, dtype=bool)
    if mask.sum() < 2:
        raise ValueError("need at least two defined off-diagonal entries")
    vals = S.values[mask]
    mean, std = vals.mean(), vals.std()
    out = S.values.copy()
    if vals.max() == vals.min():
        warnings.warn("zscore: zero variance input, returning zeros", RuntimeWarning, stacklevel=2)
        out[mask] = 0.0
        return replace(S, values=out, warnings=S.warnings + ("zero-variance",))
    out[mask] = (vals - mean) / std
    return replace(S, values=out)
