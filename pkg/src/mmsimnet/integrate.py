"""Multi-modal similarity integration.

Five fusion methods turn per-modality data into one total pairwise matrix:
feature concatenation, mean similarity, extreme mean, similarity network
fusion (SNF) and NEMO.  Partial data (entities absent from a modality) is
handled by the policy passed alongside.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mmgen import Dataset, ModalityData
from .simkern import (KernelParams, Orientation, SimilarityMatrix, encode_features,
                      knn_indices, pairwise_euclidean, scaled_affinity, zscore)

__all__ = ["Method", "PartialPolicy", "FusionParams", "KnnStructure", "knn_structure",
           "impute_max", "concat_features", "mean_similarity", "extreme_mean",
           "snf_normalize", "snf_knn_kernel", "snf_diffusion_step", "snf_fuse",
           "nemo_relative_similarity", "nemo_fuse", "DEFAULT_PARTIAL_POLICY",
           "modality_matrices", "fuse_dataset", "check_policy"]


class Method(str, enum.Enum):
    CONCAT = "concat"
    MEAN = "mean"
    EXTREME = "extreme"
    SNF = "snf"
    NEMO = "nemo"


class PartialPolicy(str, enum.Enum):
    NONE = "none"
    IMPUTE_MAX_DISTANCE = "impute_max"
    IGNORE_NAN = "ignore_nan"
    FEATURE_MEAN_IMPUTE = "feature_mean"
    NEMO_SHARED = "nemo_shared"
    EXTREME_SHARED = "extreme_shared"


# policy used for each method when the data are partial
DEFAULT_PARTIAL_POLICY = {
    Method.CONCAT: PartialPolicy.FEATURE_MEAN_IMPUTE,
    Method.MEAN: PartialPolicy.IGNORE_NAN,
    Method.EXTREME: PartialPolicy.EXTREME_SHARED,
    Method.SNF: PartialPolicy.IMPUTE_MAX_DISTANCE,
    Method.NEMO: PartialPolicy.NEMO_SHARED,
}

_ALLOWED = {
    Method.CONCAT: {PartialPolicy.NONE, PartialPolicy.FEATURE_MEAN_IMPUTE},
    Method.MEAN: {PartialPolicy.NONE, PartialPolicy.IMPUTE_MAX_DISTANCE, PartialPolicy.IGNORE_NAN},
    Method.EXTREME: {PartialPolicy.NONE, PartialPolicy.EXTREME_SHARED},
    Method.SNF: {PartialPolicy.NONE, PartialPolicy.IMPUTE_MAX_DISTANCE},
    Method.NEMO: {PartialPolicy.NONE, PartialPolicy.NEMO_SHARED},
}


@dataclass(frozen=True)
class FusionParams:
    kernel: KernelParams = field(default_factory=KernelParams)
    threshold_sigma: float = 1.0
    snf_max_iters: int = 20
    snf_tol: float = 1e-6

    def __post_init__(self):
        if self.threshold_sigma < 0:
            raise ValueError("threshold_sigma must be non-negative")
        if self.snf_max_iters < 1 or self.snf_tol <= 0:
            raise ValueError("snf_max_iters and snf_tol must be positive")


@dataclass(frozen=True)
class KnnStructure:
    """Ordered k-nearest present neighbours per entity (empty for absent ones)."""

    neighbor_sets: list

    @property
    def n(self) -> int:
        return len(self.neighbor_sets)


def knn_structure(S: SimilarityMatrix, k: int) -> KnnStructure:
    present = S.present()
    nn = knn_indices(S.values, k, S.orientation, present)
    return KnnStructure([row.copy() if p else np.empty(0, dtype=np.int64)
                         for row, p in zip(nn, present)])


def check_policy(method, policy) -> PartialPolicy:
    """Validate that ``policy`` is usable with ``method``; returns it as an enum."""
    method = Method(method)
    policy = PartialPolicy(policy)
    if policy not in _ALLOWED[method]:
        raise ValueError(f"policy {policy.value!r} is not available for {method.value!r}")
    return policy


def _offdiag(n: int) -> np.ndarray:
    return ~np.eye(n, dtype=bool)


def _worst_value(S: SimilarityMatrix) -> float:
    """Most dissimilar defined off-diagonal value of ``S``."""
    vals = S.values[S.defined & _offdiag(S.n)]
    return float(vals.max() if S.orientation == Orientation.DISTANCE else vals.min())


def impute_max(S: SimilarityMatrix) -> SimilarityMatrix:
    """Fill undefined entries with the modality's most dissimilar defined value.

    That is the maximum distance, or the minimum affinity.  The diagonal of an
    absent entity becomes 0 (distance) or 1 (affinity).
    """
    V = np.where(S.defined, S.values, _worst_value(S))
    absent = ~S.present()
    V[absent, absent] = 0.0 if S.orientation == Orientation.DISTANCE else 1.0
    return SimilarityMatrix(V, S.orientation, None, S.warnings, dict(S.info))


def _require_total(mats, what: str):
    for S in mats:
        if not S.is_total:
            raise ValueError(f"{what} with policy 'none' requires complete modalities")


def _finish(V: np.ndarray, orientation: Orientation, warns=(), info=None) -> SimilarityMatrix:
    V = (V + V.T) / 2
    if orientation == Orientation.DISTANCE:
        np.fill_diagonal(V, 0.0)
    else:
        off = V[_offdiag(V.shape[0])]
        np.fill_diagonal(V, off.max() if off.size else 1.0)
    return SimilarityMatrix(V, orientation, None, tuple(warns), info or {})


def concat_features(modalities, policy=PartialPolicy.NONE) -> SimilarityMatrix:
    """Euclidean distance on the horizontally concatenated feature matrices.

    With ``FEATURE_MEAN_IMPUTE`` an absent entity's block is replaced by the
    per-feature means of the present entities of that modality.
    """
    policy = check_policy(Method.CONCAT, policy)
    present = np.stack([mod.present for mod in modalities])
    if not present.any(axis=0).all():
        raise ValueError("an entity is absent from every modality")
    if policy == PartialPolicy.NONE and not present.all():
        raise ValueError("concatenation with policy 'none' requires complete modalities")
    blocks = []
    for mod in modalities:
        F = encode_features(mod).copy()
        if not mod.present.all():
            F[~mod.present] = F[mod.present].mean(axis=0)
        blocks.append(F)
    D = pairwise_euclidean(np.hstack(blocks))
    return SimilarityMatrix(D.values, Orientation.DISTANCE)


def _check_orientation(mats) -> Orientation:
    orients = {S.orientation for S in mats}
    if len(orients) != 1:
        raise ValueError("all matrices must share one orientation")
    if len({S.n for S in mats}) != 1:
        raise ValueError("all matrices must have the same size")
    return orients.pop()


def mean_similarity(mats, policy=PartialPolicy.NONE) -> SimilarityMatrix:
    """Elementwise mean of per-modality pairwise matrices.

    ``IMPUTE_MAX_DISTANCE`` fills each modality's undefined entries with its
    most dissimilar value first; ``IGNORE_NAN`` averages over the modalities
    where both entities are present and falls back to the globally most
    dissimilar value when there are none.
    """
    policy = check_policy(Method.MEAN, policy)
    orientation = _check_orientation(mats)
    if policy == PartialPolicy.NONE:
        _require_total(mats, "mean_similarity")
        V = np.mean([S.values for S in mats], axis=0)
    elif policy == PartialPolicy.IMPUTE_MAX_DISTANCE:
        V = np.mean([impute_max(S).values for S in mats], axis=0)
    else:
        num = sum(np.where(S.defined, S.values, 0.0) for S in mats)
        cnt = sum(S.defined.astype(np.int64) for S in mats)
        worst = [_worst_value(S) for S in mats]
        fallback = max(worst) if orientation == Orientation.DISTANCE else min(worst)
        with np.errstate(invalid="ignore", divide="ignore"):
            V = np.where(cnt > 0, num / np.maximum(cnt, 1), fallback)
    return _finish(V, orientation)


def extreme_mean(mats, params: FusionParams = FusionParams(),
                 policy=PartialPolicy.NONE) -> SimilarityMatrix:
    """Mean of per-modality z-scored affinities keeping only |z| > sigma.

    Sub-threshold entries contribute zero.  Under ``EXTREME_SHARED`` the mean
    runs over the modalities where the pair is defined, and pairs with no
    retained extreme value in any modality get the minimum fused value.
    """
    policy = check_policy(Method.EXTREME, policy)
    orientation = _check_orientation(mats)
    if orientation != Orientation.AFFINITY:
        raise ValueError("extreme_mean expects affinity matrices")
    if policy == PartialPolicy.NONE:
        _require_total(mats, "extreme_mean")
    sigma = params.threshold_sigma
    n = mats[0].n
    off = _offdiag(n)
    warns = []
    num = np.zeros((n, n))
    cnt = np.zeros((n, n), dtype=np.int64)
    kept = np.zeros((n, n), dtype=bool)
    for S in mats:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            Z = zscore(S)
        for w in caught:
            warnings.warn(w.message, w.category, stacklevel=2)
        warns.extend(Z.warnings)
        defined = S.defined & off
        retain = defined & (np.abs(Z.values) > sigma)
        num += np.where(retain, Z.values, 0.0)
        cnt += defined
        kept |= retain
    if policy == PartialPolicy.NONE:
        V = num / len(mats)
    else:
        V = np.where(cnt > 0, num / np.maximum(cnt, 1), 0.0)
        floor = V[kept & off].min() if (kept & off).any() else 0.0
        V = np.where(kept, V, floor)
    return _finish(V, Orientation.AFFINITY, warns)


# --- similarity network fusion ----------------------------------------------

def snf_normalize(W: np.ndarray) -> np.ndarray:
    """Off-diagonal ``W / (2 * rowsum)`` with 1/2 on the diagonal; rows sum to 1."""
    W = np.array(W, dtype=np.float64)
    np.fill_diagonal(W, 0.0)
    rs = W.sum(axis=1, keepdims=True)
    P = W / (2.0 * np.where(rs > 0, rs, 1.0))
    np.fill_diagonal(P, 0.5)
    return P


def snf_knn_kernel(W: np.ndarray, k: int) -> sp.csr_matrix:
    """Row-normalized affinity restricted to each row's k nearest neighbours."""
    n = W.shape[0]
    nn = knn_indices(W, k, Orientation.AFFINITY)
    vals = np.take_along_axis(W, nn, axis=1)
    vals = vals / vals.sum(axis=1, keepdims=True)
    return sp.csr_matrix((vals.ravel(), nn.ravel(), np.arange(0, n * k + 1, k)), shape=(n, n))


def snf_diffusion_step(Ps, Ss) -> list:
    """One simultaneous cross-diffusion update, before re-normalization.

    Each modality's new matrix is ``S_v @ mean_{u != v}(P_u) @ S_v.T``.
    """
    m = len(Ps)
    total = np.sum(Ps, axis=0)
    out = []
    for P, S in zip(Ps, Ss):
        others = (total - P) / (m - 1)
        out.append(np.asarray((S @ (S @ others).T).T))
    return out


def _snf_inputs(mats, kernel: KernelParams, policy: PartialPolicy) -> list:
    Ws = []
    for S in mats:
        if policy == PartialPolicy.IMPUTE_MAX_DISTANCE and not S.is_total:
            S = impute_max(S)
        if not S.is_total:
            raise ValueError("snf_fuse with policy 'none' requires complete modalities")
        if S.orientation == Orientation.DISTANCE:
            S = scaled_affinity(S, kernel)
        Ws.append(S.values)
    return Ws


def snf_fuse(mats, params: FusionParams = FusionParams(), policy=PartialPolicy.NONE,
             callback=None) -> SimilarityMatrix:
    """Similarity network fusion.

    ``mats`` are per-modality affinities, or distances which are passed
    through :func:`scaled_affinity` (after max-distance imputation under
    ``IMPUTE_MAX_DISTANCE``).  All modalities diffuse simultaneously; after
    each step every matrix is symmetrized and re-normalized.  Iteration stops
    once the largest relative Frobenius change drops below ``snf_tol``.
    ``callback(iteration, Ps)`` is invoked after each completed iteration.
    """
    policy = check_policy(Method.SNF, policy)
    if len(mats) < 2:
        raise ValueError("snf_fuse needs at least two modalities")
    _check_orientation(mats)
    k = params.kernel.k_neighbors
    if mats[0].n <= k:
        raise ValueError(f"need more than k={k} entities")
    Ws = _snf_inputs(mats, params.kernel, policy)
    Ps = [snf_normalize(W) for W in Ws]
    Ss = [snf_knn_kernel(W, k) for W in Ws]
    converged = False
    changes = []
    it = 0
    for it in range(1, params.snf_max_iters + 1):
        raw = snf_diffusion_step(Ps, Ss)
        new = [snf_normalize((R + R.T) / 2) for R in raw]
        change = max(np.linalg.norm(N - P) / np.linalg.norm(P) for N, P in zip(new, Ps))
        changes.append(float(change))
        Ps = new
        if callback is not None:
            callback(it, Ps)
        if change < params.snf_tol:
            converged = True
            break
    warns = ()
    if not converged:
        warnings.warn(f"snf_fuse did not converge in {params.snf_max_iters} iterations",
                      RuntimeWarning, stacklevel=2)
        warns = ("snf-not-converged",)
    V = np.mean(Ps, axis=0)
    V = (V + V.T) / 2
    return SimilarityMatrix(V, Orientation.AFFINITY, None, warns,
                            {"n_iter": it, "converged": converged, "changes": changes})


# --- NEMO -------------------------------------------------------------------

def nemo_relative_similarity(S: SimilarityMatrix, k: int) -> np.ndarray:
    """Relative within-neighbourhood similarity of one modality.

    Entry ``(i, j)`` is ``W_ij`` over the neighbourhood sum of ``i`` when ``j``
    is among ``i``'s k nearest, plus the same with roles swapped.  Pairs with
    an absent entity are NaN.
    """
    present = S.present()
    W = S.values
    nn = knn_indices(W, k, Orientation.AFFINITY, present)
    rows = np.flatnonzero(present)
    A = np.zeros_like(W)
    w = W[rows[:, None], nn[rows]]
    A[rows[:, None], nn[rows]] = w / w.sum(axis=1, keepdims=True)
    R = A + A.T
    R[~S.defined] = np.nan
    return R


def nemo_fuse(mats, params: FusionParams = FusionParams(),
              policy=PartialPolicy.NEMO_SHARED) -> SimilarityMatrix:
    """Average NEMO relative similarity over the modalities where both entities are present.

    Pairs sharing no modality get 0.
    """
    check_policy(Method.NEMO, policy)
    orientation = _check_orientation(mats)
    if orientation != Orientation.AFFINITY:
        raise ValueError("nemo_fuse expects affinity matrices")
    present = np.stack([S.present() for S in mats])
    if not present.any(axis=0).all():
        raise ValueError("an entity is absent from every modality")
    k = params.kernel.k_neighbors
    Rs = [nemo_relative_similarity(S, k) for S in mats]
    num = sum(np.nan_to_num(R, nan=0.0) for R in Rs)
    cnt = sum(S.defined.astype(np.int64) for S in mats)
    V = np.where(cnt > 0, num / np.maximum(cnt, 1), 0.0)
    return _finish(V, Orientation.AFFINITY)


# --- dataset-level dispatch ------------------------------------------------

def modality_matrices(ds: Dataset, kernel: KernelParams, need_affinity: bool = True):
    """Per-modality distance and (optionally) affinity matrices of a dataset."""
    dists = [pairwise_euclidean(mod) for mod in ds.modalities]
    affs = [scaled_affinity(D, kernel) for D in dists] if need_affinity else None
    return dists, affs


def fuse_dataset(ds: Dataset, method, policy=None, params: FusionParams = FusionParams(),
                 cache=None) -> SimilarityMatrix:
    """Fuse all modalities of ``ds`` with one method.

    Concatenation and mean similarity work on raw Euclidean distances; SNF,
    NEMO and extreme mean on the scaled affinity kernel.  ``policy`` defaults to
    none for complete data and to the method's partial-data strategy
    otherwise.  ``cache`` may hold ``(distances, affinities)`` from
    :func:`modality_matrices`.
    """
    method = Method(method)
    partial = any(not mod.present.all() for mod in ds.modalities)
    if policy is None:
        policy = DEFAULT_PARTIAL_POLICY[method] if partial else PartialPolicy.NONE
    policy = check_policy(method, policy)
    if method == Method.CONCAT:
        return concat_features(ds.modalities, policy)
    dists, affs = cache if cache is not None else modality_matrices(
        ds, params.kernel, method != Method.MEAN)
    if method == Method.MEAN:
        return mean_similarity(dists, policy)
    if method == Method.SNF:
        # imputation happens on distances, before the kernel
        return snf_fuse(dists if partial else affs, params, policy)
    if affs is None:
        affs = [scaled_affinity(D, params.kernel) for D in dists]
    if method == Method.EXTREME:
        return extreme_mean(affs, params, policy)
    return nemo_fuse(affs, params, policy)


def single_modality_matrix(mod: ModalityData, kernel: KernelParams,
                           affinity: bool = False) -> SimilarityMatrix:
    """Pairwise matrix of a single complete modality (baseline networks)."""
    D = pairwise_euclidean(mod)
    return scaled_affinity(D, kernel) if affinity else D
