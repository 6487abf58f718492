"""Synthetic multi-modal data with controllable per-modality cluster structure.

A dataset is built in three steps: draw equal-size ground-truth clusters ``y``,
derive per-modality labels ``y_i`` from ``y`` (unchanged, merged, split or
random), and sample each modality's features from its labels with a Gaussian,
Student's-t or categorical mixture.  Entities can then be removed from at most
one modality each, either at random or by cluster membership.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

__all__ = [
    "Labels", "Distribution", "ClusterTransform", "ModalitySpec", "ModalityData",
    "Dataset", "GenParams", "PROBLEMS", "gen_labels", "merge_labels",
    "split_labels", "random_labels", "gen_gaussian", "gen_student_t",
    "gen_categorical", "gen_modality", "mask_random", "mask_cluster",
    "build_problem", "build_dataset", "save_dataset", "load_dataset",
]


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class Labels:
    """Integer cluster assignment for ``n`` entities, ids in ``[0, n_clusters)``."""

    assignments: np.ndarray
    n_clusters: int

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=np.int64)
        if a.ndim != 1:
            raise ValueError("assignments must be a 1-d vector")
        if a.size and (a.min() < 0 or a.max() >= self.n_clusters):
            raise ValueError("cluster id outside [0, n_clusters)")
        a.setflags(write=False)
        object.__setattr__(self, "assignments", a)

    @classmethod
    def from_array(cls, a) -> "Labels":
        """Relabel an arbitrary 1-d labelling to consecutive ids (first-seen order)."""
        a = np.asarray(a)
        _, first, inv = np.unique(a, return_index=True, return_inverse=True)
        order = np.argsort(np.argsort(first))
        return cls(order[inv.ravel()], len(first))

    @property
    def n(self) -> int:
        return self.assignments.size

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.n_clusters)

    def __len__(self):
        return self.n

    def __array__(self, dtype=None, copy=None):
        return self.assignments if dtype is None else self.assignments.astype(dtype)


class Distribution(str, enum.Enum):
    GAUSSIAN = "G"
    STUDENT_T = "S"
    CATEGORICAL = "C"


class ClusterTransform(enum.IntEnum):
    UNCHANGED = 0
    MERGED = 1
    SPLIT = 2
    RANDOM = 3


@dataclass(frozen=True)
class ModalitySpec:
    distribution: Distribution
    cluster_transform: ClusterTransform
    n_features: int
    transform_target: int | None = None

    def __post_init__(self):
        if self.n_features < 1:
            raise ValueError("n_features must be positive")
        needs = (ClusterTransform.MERGED, ClusterTransform.SPLIT)
        if self.cluster_transform in needs and not self.transform_target:
            raise ValueError("merged and split modalities need a transform_target")

    @classmethod
    def parse(cls, code: str, n_features: int, targets: dict | None = None) -> "ModalitySpec":
        """Build a spec from a table code such as ``"G-1"``."""
        dist, tr = code.split("-")
        transform = ClusterTransform(int(tr))
        targets = targets or {}
        return cls(Distribution(dist), transform, n_features, targets.get(transform))


@dataclass(frozen=True)
class GenParams:
    """Generator constants.

    ``center_scale`` is the standard deviation of cluster-center coordinates;
    it sets how much clusters overlap (see ``demos/calibrate_center_scale.py``).
    """

    center_scale: float = 0.35
    student_t_dof: float = 2.0
    cat_n_categories: int = 4
    cat_informative_fraction: float = 0.3
    cat_informative_alpha: float = 0.5
    cat_shared_alpha: float = 5.0

    def __post_init__(self):
        if self.center_scale < 0:
            raise ValueError("center_scale must be non-negative")
        if not 0.0 <= self.cat_informative_fraction <= 1.0:
            raise ValueError("cat_informative_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class ModalityData:
    """One modality: an ``n x d`` feature matrix plus a presence vector.

    Rows of absent entities are NaN.  ``n_categories`` is set for categorical
    modalities, whose features hold category indices.
    """

    features: np.ndarray
    present: np.ndarray
    labels: Labels
    n_categories: int | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        present = np.asarray(self.present, dtype=bool)
        if X.ndim != 2 or present.shape != (X.shape[0],):
            raise ValueError("features must be n x d with a length-n presence vector")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "present", present)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def without(self, absent: np.ndarray) -> "ModalityData":
        """Copy with the entities flagged in ``absent`` removed."""
        present = self.present & ~np.asarray(absent, dtype=bool)
        X = self.features.copy()
        X[~present] = np.nan
        return replace(self, features=X, present=present)


@dataclass(frozen=True)
class Dataset:
    modalities: list
    truth: Labels
    partial_mask: Labels | None = None
    rng_seed: int | None = None
    name: str | None = None
    params: GenParams = field(default_factory=GenParams)

    def __post_init__(self):
        ns = {mod.n for mod in self.modalities}
        if len(ns) > 1 or (ns and ns.pop() != self.truth.n):
            raise ValueError("all modalities must share the entity count of the truth labels")
        if self.partial_mask is not None:
            m = len(self.modalities)
            absent = np.stack([~mod.present for mod in self.modalities])
            expected = np.arange(m)[:, None] == self.partial_mask.assignments[None, :]
            if not np.array_equal(absent, expected):
                raise ValueError("presence vectors disagree with the partial mask")

    @property
    def n(self) -> int:
        return self.truth.n

    @property
    def m(self) -> int:
        return len(self.modalities)


def _equal_sizes(n: int, k: int) -> np.ndarray:
    sizes = np.full(k, n // k)
    sizes[: n % k] += 1
    return sizes


def gen_labels(n: int, k: int, seed=None) -> Labels:
    """Split ``n`` entities into ``k`` clusters whose sizes differ by at most one."""
    if k < 1 or n < k:
        raise ValueError(f"need n >= k >= 1, got n={n}, k={k}")
    base = np.repeat(np.arange(k), _equal_sizes(n, k))
    return Labels(_rng(seed).permutation(base), k)


def random_labels(n: int, k: int, seed=None) -> Labels:
    """Equal-size labels drawn independently of any other labelling."""
    return gen_labels(n, k, seed)


def merge_labels(y: Labels, k_target: int, seed=None) -> Labels:
    """Map every source cluster onto one of ``k_target`` super-clusters.

    The map is a uniformly random surjection (redrawn until every super-cluster
    is used), so super-cluster sizes can be very unequal.
    """
    if not 1 <= k_target < y.n_clusters:
        raise ValueError(f"merge target {k_target} must be in [1, {y.n_clusters})")
    rng = _rng(seed)
    while True:
        mapping = rng.integers(k_target, size=y.n_clusters)
        if np.unique(mapping).size == k_target:
            break
    return Labels(mapping[y.assignments], k_target)


def split_labels(y: Labels, k_target: int, seed=None) -> Labels:
    """Split the clusters of ``y`` into ``k_target`` sub-clusters in total.

    Sub-cluster counts per parent form a uniformly random composition of
    ``k_target`` (every parent keeps at least one); members of a parent are
    spread uniformly over its sub-clusters, redrawn until none is empty.
    """
    k = y.n_clusters
    if k_target <= k:
        raise ValueError(f"split target {k_target} must exceed {k}")
    sizes = y.sizes()
    if k_target > y.n:
        raise ValueError(f"split target {k_target} exceeds entity count {y.n}")
    rng = _rng(seed)
    # a composition is feasible only if no parent receives more sub-ids than members
    while True:
        cuts = np.sort(rng.choice(np.arange(1, k_target), size=k - 1, replace=False))
        counts = np.diff(np.concatenate(([0], cuts, [k_target])))
        if np.all(counts <= sizes):
            break
    offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
    out = np.empty(y.n, dtype=np.int64)
    for parent in range(k):
        members = np.flatnonzero(y.assignments == parent)
        c = counts[parent]
        while True:
            sub = rng.integers(c, size=members.size)
            if np.unique(sub).size == c:
                break
        out[members] = offsets[parent] + sub
    return Labels(out, k_target)


def _centers(k: int, d: int, params: GenParams, rng) -> np.ndarray:
    return rng.normal(0.0, params.center_scale, size=(k, d))


def gen_gaussian(y_i: Labels, d: int, params: GenParams = GenParams(), seed=None) -> ModalityData:
    """Gaussian mixture: cluster center plus identity-covariance noise."""
    if d < 1:
        raise ValueError("d must be positive")
    rng = _rng(seed)
    centers = _centers(y_i.n_clusters, d, params, rng)
    X = centers[y_i.assignments] + rng.standard_normal((y_i.n, d))
    return ModalityData(X, np.ones(y_i.n, dtype=bool), y_i)


def gen_student_t(y_i: Labels, d: int, params: GenParams = GenParams(), seed=None) -> ModalityData:
    """Student's-t mixture: cluster center plus per-coordinate t noise."""
    if d < 1:
        raise ValueError("d must be positive")
    if params.student_t_dof <= 0:
        raise ValueError("student_t_dof must be positive")
    rng = _rng(seed)
    centers = _centers(y_i.n_clusters, d, params, rng)
    X = centers[y_i.assignments] + rng.standard_t(params.student_t_dof, size=(y_i.n, d))
    return ModalityData(X, np.ones(y_i.n, dtype=bool), y_i)


def shared_category_probs(d: int, params: GenParams = GenParams(), seed=None) -> np.ndarray:
    """Per-feature category distribution shared by all uninformative features of a dataset."""
    rng = _rng(seed)
    return rng.dirichlet(np.full(params.cat_n_categories, params.cat_shared_alpha), size=d)


def gen_categorical(y_i: Labels, d: int, params: GenParams = GenParams(), seed=None,
                    shared_probs: np.ndarray | None = None,
                    cluster_probs: np.ndarray | None = None) -> ModalityData:
    """Categorical features, the first ``round(fraction * d)`` informative.

    Informative features use a per-cluster category distribution, the rest the
    dataset-wide ``shared_probs`` (``d x C``).  ``cluster_probs`` (``k x d x C``)
    overrides the random per-cluster draws.
    """
    C = params.cat_n_categories
    if C < 2:
        raise ValueError("cat_n_categories must be at least 2")
    rng = _rng(seed)
    if shared_probs is None:
        shared_probs = shared_category_probs(d, params, rng)
    shared_probs = np.asarray(shared_probs)
    if shared_probs.shape[0] < d or shared_probs.shape[1] != C:
        raise ValueError("shared_probs must have at least d rows and C columns")
    n_inf = int(round(params.cat_informative_fraction * d))
    k = y_i.n_clusters
    if cluster_probs is None:
        cluster_probs = rng.dirichlet(np.full(C, params.cat_informative_alpha), size=(k, n_inf))
    X = np.empty((y_i.n, d))
    u = rng.random((y_i.n, d))
    for f in range(d):
        if f < n_inf:
            cdf = np.cumsum(cluster_probs[y_i.assignments, f], axis=1)
        else:
            cdf = np.broadcast_to(np.cumsum(shared_probs[f]), (y_i.n, C))
        X[:, f] = np.minimum((u[:, f, None] >= cdf).sum(axis=1), C - 1)
    return ModalityData(X, np.ones(y_i.n, dtype=bool), y_i, n_categories=C)


def _derive_labels(y: Labels, spec: ModalitySpec, rng) -> Labels:
    t = spec.cluster_transform
    if t == ClusterTransform.UNCHANGED:
        return y
    if t == ClusterTransform.MERGED:
        return merge_labels(y, spec.transform_target, rng)
    if t == ClusterTransform.SPLIT:
        return split_labels(y, spec.transform_target, rng)
    return random_labels(y.n, spec.transform_target or y.n_clusters, rng)


def gen_modality(y: Labels, spec: ModalitySpec, params: GenParams, seed=None,
                 shared_probs=None) -> ModalityData:
    """Derive ``y_i`` from ``y`` by ``spec``'s transform and sample features from it."""
    rng = _rng(seed)
    y_i = _derive_labels(y, spec, rng)
    if spec.distribution == Distribution.GAUSSIAN:
        return gen_gaussian(y_i, spec.n_features, params, rng)
    if spec.distribution == Distribution.STUDENT_T:
        return gen_student_t(y_i, spec.n_features, params, rng)
    return gen_categorical(y_i, spec.n_features, params, rng, shared_probs=shared_probs)


def build_dataset(specs, n: int, k: int, seed: int, params: GenParams = GenParams(),
                  name: str | None = None) -> Dataset:
    """Generate a dataset with one modality per spec from a single integer seed."""
    ss = np.random.SeedSequence(seed)
    truth_ss, shared_ss, *mod_ss = ss.spawn(2 + len(specs))
    y = gen_labels(n, k, np.random.default_rng(truth_ss))
    shared = None
    if any(s.distribution == Distribution.CATEGORICAL for s in specs):
        shared = shared_category_probs(max(s.n_features for s in specs), params,
                                       np.random.default_rng(shared_ss))
    mods = [gen_modality(y, s, params, np.random.default_rng(r), shared)
            for s, r in zip(specs, mod_ss)]
    return Dataset(mods, y, None, seed, name, params)


# name -> per-modality codes: distribution letter, transform digit
PROBLEMS: dict[str, tuple[str, str, str]] = {
    "Cat": ("C-0", "C-0", "C-0"),
    "Easy": ("G-0", "G-0", "G-0"),
    "Single Merged": ("G-0", "G-0", "G-1"),
    "Single Noisy": ("G-0", "G-0", "S-0"),
    "Split": ("G-2", "G-2", "G-2"),
    "Mixed Normal": ("G-1", "G-1", "G-2"),
    "Merged": ("G-1", "G-1", "G-1"),
    "Mixed All": ("C-1", "G-1", "S-2"),
    "Noisy": ("S-0", "S-0", "S-0"),
    "1Rand": ("G-0", "G-0", "G-3"),
    "Mixed Noisy": ("S-1", "S-1", "S-2"),
    "Mixed 1Rand": ("G-1", "G-2", "G-3"),
    "Noisy 1Rand": ("S-0", "S-0", "S-3"),
    "Mixed Noisy 1Rand": ("S-1", "S-2", "S-3"),
    "2Rand": ("G-0", "G-3", "G-3"),
}


def problem_specs(name: str, d: int = 50, k: int = 10, merge_target: int = 5,
                  split_target: int = 20) -> list[ModalitySpec]:
    if name not in PROBLEMS:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}")
    targets = {ClusterTransform.MERGED: merge_target, ClusterTransform.SPLIT: split_target,
               ClusterTransform.RANDOM: k}
    return [ModalitySpec.parse(code, d, targets) for code in PROBLEMS[name]]


def build_problem(name: str, n: int = 2500, seed: int = 0, d: int = 50, k: int = 10,
                  params: GenParams = GenParams()) -> Dataset:
    """Generate one instance of a named three-modality problem."""
    return build_dataset(problem_specs(name, d, k), n, k, seed, params, name)


def _apply_mask(ds: Dataset, y_nan: np.ndarray) -> Dataset:
    m = ds.m
    mods = [mod.without(y_nan == v) for v, mod in enumerate(ds.modalities)]
    return replace(ds, modalities=mods, partial_mask=Labels(y_nan, m + 1))


def _check_mask_args(ds: Dataset, fraction: float):
    if ds.partial_mask is not None:
        raise ValueError("dataset is already masked")
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")


def mask_random(ds: Dataset, fraction: float, seed=None) -> Dataset:
    """Remove ``floor(fraction * n)`` random entities, each from one random modality.

    The returned ``partial_mask`` holds the absent modality per entity, with id
    ``m`` reserved for complete entities.
    """
    _check_mask_args(ds, fraction)
    if fraction == 0:
        return ds
    rng = _rng(seed)
    n, m = ds.n, ds.m
    y_nan = np.full(n, m, dtype=np.int64)
    chosen = rng.choice(n, size=int(np.floor(fraction * n)), replace=False)
    y_nan[chosen] = rng.integers(m, size=chosen.size)
    return _apply_mask(ds, y_nan)


def mask_cluster(ds: Dataset, fraction: float, seed=None) -> Dataset:
    """Remove entities from modalities according to their ground-truth cluster.

    The truth is merged (fewer clusters than modalities is handled by
    splitting) into ``m`` groups; group ``g`` loses ``floor(fraction * |g|)``
    of its members from modality ``g``.
    """
    _check_mask_args(ds, fraction)
    if fraction == 0:
        return ds
    rng = _rng(seed)
    m, y = ds.m, ds.truth
    if m < y.n_clusters:
        groups = merge_labels(y, m, rng)
    elif m > y.n_clusters:
        groups = split_labels(y, m, rng)
    else:
        groups = y
    y_nan = np.full(ds.n, m, dtype=np.int64)
    for g in range(m):
        members = np.flatnonzero(groups.assignments == g)
        take = rng.choice(members, size=int(np.floor(fraction * members.size)), replace=False)
        y_nan[take] = g
    return _apply_mask(ds, y_nan)


# --- serialization ---------------------------------------------------------

def _labels_json(lab: Labels | None):
    if lab is None:
        return None
    return {"n_clusters": int(lab.n_clusters), "assignments": lab.assignments.tolist()}


def _labels_from_json(obj) -> Labels | None:
    if obj is None:
        return None
    return Labels(np.asarray(obj["assignments"], dtype=np.int64), obj["n_clusters"])


def save_dataset(ds: Dataset, directory) -> Path:
    """Write ``manifest.json`` plus one ``modality_<i>.txt`` matrix per modality."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    mods = []
    for i, mod in enumerate(ds.modalities):
        fname = f"modality_{i}.txt"
        bitmap = "".join("1" if p else "0" for p in mod.present)
        header = f"n={mod.n} d={mod.d}\npresent={bitmap}"
        np.savetxt(out / fname, mod.features, fmt="%.17g", header=header)
        mods.append({"file": fname, "n_categories": mod.n_categories,
                     "labels": _labels_json(mod.labels)})
    manifest = {
        "format": "mmsimnet-dataset/1",
        "name": ds.name,
        "seed": ds.rng_seed,
        "params": vars(ds.params),
        "n": ds.n,
        "truth": _labels_json(ds.truth),
        "partial_mask": _labels_json(ds.partial_mask),
        "modalities": mods,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return out


def load_dataset(directory) -> Dataset:
    src = Path(directory)
    manifest = json.loads((src / "manifest.json").read_text())
    mods = []
    for entry in manifest["modalities"]:
        path = src / entry["file"]
        with open(path) as fh:
            fh.readline()
            present = np.array([c == "1" for c in fh.readline().split("=", 1)[1].strip()])
        X = np.loadtxt(path, ndmin=2)
        if X.shape[0] != present.size:
            X = X.reshape(present.size, -1)
        mods.append(ModalityData(X, present, _labels_from_json(entry["labels"]),
                                 entry["n_categories"]))
    return Dataset(mods, _labels_from_json(manifest["truth"]),
                   _labels_from_json(manifest["partial_mask"]), manifest["seed"],
                   manifest["name"], GenParams(**manifest["params"]))
