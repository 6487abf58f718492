"""Experiment registry, seeded runner and result persistence.

A run walks (problem, instance, partial fraction) tasks.  Each task generates
its dataset from ``base_seed + instance``, optionally masks it, fuses it with
every configured method, builds the KNN network, records network statistics,
clusters it with every configured clusterer and scores the partition.  Rows
are appended to a CSV file as each task finishes, so an interrupted run
resumes where it stopped.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .cluster import ClusterParams, select_resolution, spectral_rw
from .evalmetrics import ami, ari
from .integrate import (DEFAULT_PARTIAL_POLICY, FusionParams, Method, PartialPolicy,
                        fuse_dataset, modality_matrices)
from .mmgen import PROBLEMS, GenParams, build_problem, mask_cluster, mask_random
from .netgraph import knn_graph, network_stats
from .simkern import KernelParams, pairwise_euclidean

__all__ = ["ExperimentConfig", "ExperimentRecord", "RECORD_FIELDS", "DESK", "PAPER",
           "PARTIAL_METHODS", "PARTIAL_PROBLEMS", "parse_method", "run_experiment",
           "single_modality_baseline", "summarize", "problem_order", "read_records",
           "load_config", "planned_keys", "with_overrides"]

PARTIAL_PROBLEMS = ["Easy", "Mixed Normal", "1Rand", "Noisy", "Mixed Noisy 1Rand"]
PARTIAL_METHODS = ["snf:impute_max", "nemo:nemo_shared", "concat:feature_mean",
                   "mean:impute_max", "mean:ignore_nan", "extreme:extreme_shared"]

DESK = dict(n_entities=500, n_features=30, k_neighbors=15, n_instances=10, center_scale=0.7)
PAPER = dict(n_entities=2500, n_features=50, k_neighbors=25, n_instances=20, center_scale=0.7)


@dataclass
class ExperimentConfig:
    """Everything that determines a run; serialized verbatim into the run manifest."""

    problems: list = field(default_factory=lambda: list(PROBLEMS))
    n_entities: int = DESK["n_entities"]
    n_clusters: int = 10
    n_features: int = DESK["n_features"]
    n_instances: int = DESK["n_instances"]
    methods: list = field(default_factory=lambda: [m.value for m in Method])
    clusterers: list = field(default_factory=lambda: ["leiden", "spectral"])
    partial_mode: str = "none"
    partial_fractions: list = field(default_factory=lambda: [0.0])
    base_seed: int = 0
    output: str | None = None
    k_neighbors: int = DESK["k_neighbors"]
    mu: float = 0.5
    kernel_form: str = "gaussian"
    threshold_sigma: float = 1.0
    snf_max_iters: int = 20
    snf_tol: float = 1e-6
    center_scale: float = DESK["center_scale"]
    resolution_grid: list = field(default_factory=lambda: ClusterParams().resolution_grid)
    n_restarts: int = 10
    baseline: bool = False
    n_jobs: int = 1

    def __post_init__(self):
        if self.problems == "all" or self.problems == ["all"]:
            self.problems = list(PROBLEMS)
        if isinstance(self.problems, str):
            self.problems = [self.problems]
        unknown = [p for p in self.problems if p not in PROBLEMS]
        if unknown:
            raise ValueError(f"unknown problems: {unknown}")
        if self.n_instances < 1:
            raise ValueError("n_instances must be at least 1")
        if self.partial_mode not in ("none", "random", "cluster"):
            raise ValueError("partial_mode must be none, random or cluster")
        if any(not 0.0 <= f <= 1.0 for f in self.partial_fractions):
            raise ValueError("partial fractions must lie in [0, 1]")
        if self.partial_mode == "none":
            self.partial_fractions = [0.0]
        for spec in self.methods:
            parse_method(spec)
        for c in self.clusterers:
            if c not in ("leiden", "spectral"):
                raise ValueError(f"unknown clusterer {c!r}")

    @classmethod
    def preset(cls, scale: str = "desk", **overrides) -> "ExperimentConfig":
        base = {"desk": DESK, "paper": PAPER}[scale]
        return cls(**{**base, **overrides})

    def fusion_params(self) -> FusionParams:
        return FusionParams(KernelParams(self.mu, self.k_neighbors, self.kernel_form),
                            self.threshold_sigma, self.snf_max_iters, self.snf_tol)

    def gen_params(self) -> GenParams:
        return GenParams(center_scale=self.center_scale)

    def cluster_params(self, seed: int) -> ClusterParams:
        return ClusterParams(list(self.resolution_grid), self.n_restarts, self.n_clusters, seed)


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a JSON config file; keyword overrides (e.g. from CLI flags) win."""
    data = json.loads(Path(path).read_text())
    known = {f.name for f in fields(ExperimentConfig)}
    extra = set(data) - known - {"scale"}
    if extra:
        raise ValueError(f"unknown config keys: {sorted(extra)}")
    scale = data.pop("scale", "desk")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.preset(scale, **data)


def parse_method(spec: str) -> tuple[Method, PartialPolicy | None]:
    """``"mean"`` or ``"mean:ignore_nan"`` -> (method, explicit policy or None)."""
    name, _, pol = spec.partition(":")
    return Method(name), (PartialPolicy(pol) if pol else None)


@dataclass
class ExperimentRecord:
    problem: str
    instance: int
    seed: int
    method: str
    policy: str
    partial_mode: str
    fraction: float
    clusterer: str
    gamma: float = math.nan
    ami_y: float = math.nan
    ari_y: float = math.nan
    ami_ynan: float = math.nan
    modularity_y: float = math.nan
    tpr_y: float = math.nan
    assortativity: float = math.nan
    mean_path_length: float = math.nan
    mean_degree: float = math.nan
    median_degree: float = math.nan
    min_degree: float = math.nan
    n_edges: float = math.nan
    snf_iters: float = math.nan
    error: str = ""
    wall_time: float = math.nan

    def key(self) -> tuple:
        return (self.problem, self.instance, self.method, self.policy, self.partial_mode,
                _fmt(self.fraction), self.clusterer)


RECORD_FIELDS = [f.name for f in fields(ExperimentRecord)]
_INT_FIELDS = {"instance", "seed"}
_STR_FIELDS = {"problem", "method", "policy", "partial_mode", "clusterer", "error"}


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _task_seed(*parts) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(p) for p in parts])


def _mask(ds, mode: str, fraction: float, seed: int, frac_index: int):
    if mode == "none" or fraction == 0:
        return ds
    rng = np.random.default_rng(_task_seed(seed, 7, frac_index))
    return (mask_random if mode == "random" else mask_cluster)(ds, fraction, rng)


def _score_graph(G, truth, y_nan, clusterers, cparams, k_true) -> list[dict]:
    out = []
    for name in clusterers:
        row = {"clusterer": name}
        if name == "leiden":
            gamma, labels = select_resolution(G, cparams)
            row["gamma"] = gamma
        else:
            labels = spectral_rw(G, k_true, cparams)
        row["ami_y"] = ami(truth, labels)
        row["ari_y"] = ari(truth, labels)
        if y_nan is not None:
            row["ami_ynan"] = ami(y_nan, labels)
        out.append(row)
    return out


def _run_task(cfg: ExperimentConfig, problem: str, instance: int, frac_index: int,
              baseline: bool) -> list[ExperimentRecord]:
    seed = cfg.base_seed + instance
    fraction = float(cfg.partial_fractions[frac_index])
    fparams = cfg.fusion_params()
    cparams = cfg.cluster_params(seed)
    common = dict(problem=problem, instance=instance, seed=seed, partial_mode=cfg.partial_mode,
                  fraction=fraction)
    records = []
    try:
        ds = build_problem(problem, cfg.n_entities, seed, cfg.n_features, cfg.n_clusters,
                           cfg.gen_params())
        ds = _mask(ds, cfg.partial_mode, fraction, seed, frac_index)
    except Exception as exc:  # recorded, the run goes on
        return [ExperimentRecord(method=m, policy="", clusterer=c, error=repr(exc), **common)
                for m in cfg.methods for c in cfg.clusterers]
    y_nan = ds.partial_mask
    units = []
    if baseline:
        for v, mod in enumerate(ds.modalities):
            units.append((f"single:{v}", "none", lambda mod=mod: pairwise_euclidean(mod)))
    else:
        cache = None
        for spec in cfg.methods:
            method, policy = parse_method(spec)
            partial = y_nan is not None
            if policy is None:
                policy = DEFAULT_PARTIAL_POLICY[method] if partial else PartialPolicy.NONE

            def fuse(method=method, policy=policy):
                nonlocal cache
                if cache is None and method != Method.CONCAT:
                    cache = modality_matrices(ds, fparams.kernel)
                return fuse_dataset(ds, method, policy, fparams, cache)
            units.append((method.value, policy.value, fuse))
    for name, policy, make in units:
        t0 = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                P = make()
                G = knn_graph(P, cfg.k_neighbors)
                stats = network_stats(G, ds.truth)
                rows = _score_graph(G, ds.truth, y_nan, cfg.clusterers, cparams, cfg.n_clusters)
        except Exception as exc:
            records.extend(ExperimentRecord(method=name, policy=policy, clusterer=c,
                                            error=repr(exc), **common) for c in cfg.clusterers)
            continue
        elapsed = time.perf_counter() - t0
        netkeys = ("modularity_y", "tpr_y", "assortativity", "mean_path_length",
                   "mean_degree", "median_degree", "min_degree", "n_edges")
        extra = {k: float(stats[k]) for k in netkeys}
        extra["snf_iters"] = float(P.info.get("n_iter", math.nan))
        for row in rows:
            records.append(ExperimentRecord(method=name, policy=policy, wall_time=elapsed,
                                            **common, **extra, **row))
    return records


def _tasks(cfg: ExperimentConfig):
    for problem in cfg.problems:
        for instance in range(cfg.n_instances):
            for fi in range(len(cfg.partial_fractions)):
                yield problem, instance, fi


def _expected_keys(cfg: ExperimentConfig, task, baseline: bool) -> list:
    """Record keys a task produces, in the order the task emits them."""
    problem, instance, fi = task
    fraction = _fmt(float(cfg.partial_fractions[fi]))
    if baseline:
        names = [(f"single:{v}", "none") for v in range(len(PROBLEMS[problem]))]
    else:
        partial = cfg.partial_mode != "none" and float(cfg.partial_fractions[fi]) > 0
        names = []
        for spec in cfg.methods:
            method, policy = parse_method(spec)
            if policy is None:
                policy = DEFAULT_PARTIAL_POLICY[method] if partial else PartialPolicy.NONE
            names.append((method.value, policy.value))
    return [(problem, instance, m, p, cfg.partial_mode, fraction, c)
            for m, p in names for c in cfg.clusterers]


def planned_keys(cfg: ExperimentConfig, baseline: bool = False) -> list:
    """Every record key a run of ``cfg`` will produce, in output order."""
    return [k for t in _tasks(cfg) for k in _expected_keys(cfg, t, baseline)]


def _row(rec: ExperimentRecord) -> list[str]:
    return [_fmt(getattr(rec, f)) for f in RECORD_FIELDS]


def _parse_row(row: dict) -> ExperimentRecord:
    vals = {}
    for k, v in row.items():
        if k is None or v is None:
            raise ValueError("truncated row")
        if k in _INT_FIELDS:
            vals[k] = int(v)
        elif k in _STR_FIELDS:
            vals[k] = v
        else:
            vals[k] = float(v)
    return ExperimentRecord(**vals)


def read_records(path, strict: bool = True) -> list[ExperimentRecord]:
    """Parse a records CSV back into :class:`ExperimentRecord` objects.

    With ``strict=False`` malformed rows (e.g. a line cut short by a killed
    run) are skipped instead of raising.
    """
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                out.append(_parse_row(row))
            except (ValueError, TypeError):
                if strict:
                    raise
    return out


def _write_manifest(cfg: ExperimentConfig, path: Path, baseline: bool):
    manifest = {
        "tool": "mmsimnet",
        "version": __version__,
        "kind": "baseline" if baseline else "integration",
        "config": asdict(cfg),
        "instance_seeds": [cfg.base_seed + i for i in range(cfg.n_instances)],
        "record_fields": RECORD_FIELDS,
    }
    path.with_suffix(".manifest.json").write_text(json.dumps(manifest, indent=1))


def _execute(cfg: ExperimentConfig, baseline: bool) -> list[ExperimentRecord]:
    out_path = Path(cfg.output) if cfg.output else None
    tasks = list(_tasks(cfg))
    finished: dict = {}
    if out_path is not None and out_path.exists() and out_path.stat().st_size:
        by_key = {rec.key(): rec for rec in read_records(out_path, strict=False)
                  if not rec.error}
        for t in tasks:
            keys = _expected_keys(cfg, t, baseline)
            if set(keys) <= by_key.keys():
                finished[t] = [by_key[k] for k in keys]
    todo = [t for t in tasks if t not in finished]
    results: dict = dict(finished)
    fh = writer = None
    if out_path is not None:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        fh = open(out_path, "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RECORD_FIELDS)
        # completed work from an earlier run is kept, partial tasks are redone
        for t in tasks:
            if t in finished:
                writer.writerows(_row(r) for r in finished[t])
        fh.flush()
        _write_manifest(cfg, out_path, baseline)
    try:
        args = [(cfg, *t, baseline) for t in todo]
        if cfg.n_jobs > 1 and len(args) > 1:
            with ProcessPoolExecutor(cfg.n_jobs) as pool:
                _sink(zip(todo, pool.map(_run_task_star, args)), results, writer, fh)
        else:
            _sink(zip(todo, map(_run_task_star, args)), results, writer, fh)
    finally:
        if fh is not None:
            fh.close()
    records = [r for t in tasks for r in results.get(t, [])]
    if out_path is not None and finished and todo:
        # a resumed file is rewritten in task order so it matches a fresh run
        with open(out_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(RECORD_FIELDS)
            writer.writerows(_row(r) for r in records)
    return records


def _run_task_star(args):
    return _run_task(*args)


def _sink(results, store, writer, fh):
    # results arrive in task order whatever the pool scheduling
    for task, recs in results:
        store[task] = recs
        if writer is not None:
            writer.writerows(_row(r) for r in recs)
            fh.flush()


def run_experiment(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    """Run every configured (problem, instance, fraction, method, clusterer) combination."""
    return _execute(cfg, baseline=False)


def single_modality_baseline(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    """Score each modality's own raw-distance KNN network (one record per modality and clusterer)."""
    return _execute(cfg, baseline=True)


def summarize(records, group_keys=("problem", "method", "clusterer"),
              value: str = "ami_y") -> str:
    """Mean, max and std of ``value`` per group, as CSV text."""
    if isinstance(group_keys, str):
        group_keys = [group_keys]
    groups: dict = {}
    for rec in records:
        if getattr(rec, "error", ""):
            continue
        key = tuple(getattr(rec, k) for k in group_keys)
        groups.setdefault(key, []).append(getattr(rec, value))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*group_keys, "n", f"mean_{value}", f"max_{value}", f"std_{value}"])
    for key in sorted(groups, key=lambda k: tuple(map(str, k))):
        vals = np.asarray(groups[key], dtype=np.float64)
        vals = vals[~np.isnan(vals)]
        if vals.size == 0:
            w.writerow([*key, 0, "nan", "nan", "nan"])
            continue
        w.writerow([*key, vals.size, _fmt(float(vals.mean())), _fmt(float(vals.max())),
                    _fmt(float(vals.std()))])
    return buf.getvalue()


def problem_order(baseline_records) -> list[str]:
    """Problems sorted from easiest to hardest by mean single-modality AMI."""
    scores: dict = {}
    for rec in baseline_records:
        if not rec.error:
            scores.setdefault(rec.problem, []).append(rec.ami_y)
    return sorted(scores, key=lambda p: -float(np.mean(scores[p])))


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
