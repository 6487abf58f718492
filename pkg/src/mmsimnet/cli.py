"""Command-line entry point: generate, fuse, stats, cluster, run, summarize.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bench import (ExperimentConfig, load_config, read_records, run_experiment,
                    single_modality_baseline, summarize)
from .cluster import ClusterParams, leiden, select_resolution, spectral_rw
from .integrate import FusionParams, check_policy, fuse_dataset
from .mmgen import (PROBLEMS, GenParams, build_problem, load_dataset, mask_cluster,
                    mask_random, save_dataset)
from .netgraph import knn_graph, network_stats, read_edgelist, write_edgelist, write_stats
from .simkern import KernelParams

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _read_labels(path) -> np.ndarray:
    return np.loadtxt(path, dtype=np.int64, ndmin=1)


def _truth_from(path):
    """Labels from a dataset directory (its ground truth) or a one-per-line text file."""
    p = Path(path)
    if p.is_dir():
        return load_dataset(p).truth
    return _read_labels(p)


def cmd_generate(a):
    if a.problem not in PROBLEMS:
        raise ConfigError(f"unknown problem {a.problem!r}; choose from {sorted(PROBLEMS)}")
    if not 0.0 <= a.fraction <= 1.0:
        raise ConfigError("fraction must lie in [0, 1]")
    params = GenParams(center_scale=a.center_scale)
    ds = build_problem(a.problem, n=a.n, seed=a.seed, d=a.d, k=a.k, params=params)
    if a.mask == "random":
        ds = mask_random(ds, a.fraction, seed=a.mask_seed)
    elif a.mask == "cluster":
        ds = mask_cluster(ds, a.fraction, seed=a.mask_seed)
    save_dataset(ds, a.out)
    print(f"wrote {a.out} (n={ds.n}, m={ds.m})")


def cmd_fuse(a):
    if not (a.matrix or a.graph):
        raise ConfigError("nothing to write: give --matrix and/or --graph")
    try:
        if a.policy is not None:
            check_policy(a.method, a.policy)
        params = FusionParams(KernelParams(a.mu, a.k, a.kernel_form), a.threshold_sigma,
                              a.snf_max_iters, a.snf_tol)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    ds = load_dataset(a.dataset)
    S = fuse_dataset(ds, a.method, a.policy, params)
    for w in S.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if a.matrix:
        np.savetxt(a.matrix, S.values, fmt="%.17g",
                   header=f"orientation={S.orientation.value}")
    if a.graph:
        write_edgelist(knn_graph(S, a.k), a.graph)


def cmd_stats(a):
    G = read_edgelist(a.graph)
    truth = _truth_from(a.labels) if a.labels else None
    stats = network_stats(G, truth)
    if a.out:
        write_stats(stats, a.out)
    else:
        print(json.dumps({k: (None if isinstance(v, float) and v != v else v)
                          for k, v in stats.items()}, indent=1, sort_keys=True))


def cmd_cluster(a):
    G = read_edgelist(a.graph)
    if a.algorithm == "leiden":
        if a.gamma is not None:
            lab = leiden(G, a.gamma, a.seed)
        else:
            gamma, lab = select_resolution(G, ClusterParams(seed=a.seed))
            print(f"selected gamma={gamma!r}", file=sys.stderr)
    else:
        if a.k is None:
            raise ConfigError("spectral clustering needs --k")
        lab = spectral_rw(G, a.k, ClusterParams(spectral_k=a.k, seed=a.seed))
    out = np.asarray(lab.assignments)
    if a.out:
        np.savetxt(a.out, out, fmt="%d")
    else:
        sys.stdout.write("\n".join(map(str, out)) + "\n")


_RUN_FLAGS = ["problems", "n_entities", "n_instances", "methods", "clusterers",
              "partial_mode", "partial_fractions", "base_seed", "output",
              "k_neighbors", "kernel_form", "center_scale", "n_jobs"]


def cmd_run(a):
    overrides = {k: getattr(a, k) for k in _RUN_FLAGS}
    if a.baseline:
        overrides["baseline"] = True
    try:
        if a.config:
            cfg = load_config(a.config, **overrides)
        else:
            cfg = ExperimentConfig.preset(a.scale, **{k: v for k, v in overrides.items()
                                                      if v is not None})
    except (ValueError, TypeError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad config: {exc}") from exc
    records = (single_modality_baseline if cfg.baseline else run_experiment)(cfg)
    failed = sum(bool(r.error) for r in records)
    print(f"{len(records)} records ({failed} failed)"
          + (f" -> {cfg.output}" if cfg.output else ""))
    if not cfg.output:
        print(summarize(records, ("problem", "method", "policy", "fraction", "clusterer")))
    return EXIT_RUNTIME if records and failed == len(records) else EXIT_OK


def cmd_summarize(a):
    records = read_records(a.records)
    table = summarize(records, a.by, a.value)
    if a.out:
        Path(a.out).write_text(table)
    else:
        sys.stdout.write(table)


def _csv_list(cast=str):
    return lambda s: [cast(x) for x in s.split(",") if x != ""]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mmsimnet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic multi-modal dataset")
    g.add_argument("--problem", default="Easy")
    g.add_argument("--n", type=int, default=500)
    g.add_argument("--k", type=int, default=10, help="ground-truth clusters")
    g.add_argument("--d", type=int, default=30, help="features per modality")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--center-scale", type=float, default=GenParams().center_scale)
    g.add_argument("--mask", choices=["none", "random", "cluster"], default="none")
    g.add_argument("--fraction", type=float, default=0.0)
    g.add_argument("--mask-seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fuse", help="fuse a dataset into a matrix and/or KNN graph")
    f.add_argument("dataset")
    f.add_argument("--method", required=True, choices=["concat", "mean", "extreme", "snf", "nemo"])
    f.add_argument("--policy", default=None)
    f.add_argument("--k", type=int, default=15)
    f.add_argument("--mu", type=float, default=0.5)
    f.add_argument("--kernel-form", choices=["literal", "gaussian"], default="gaussian")
    f.add_argument("--threshold-sigma", type=float, default=1.0)
    f.add_argument("--snf-max-iters", type=int, default=20)
    f.add_argument("--snf-tol", type=float, default=1e-6)
    f.add_argument("--matrix", help="fused matrix output (text)")
    f.add_argument("--graph", help="KNN edge list output")
    f.set_defaults(func=cmd_fuse)

    s = sub.add_parser("stats", help="network statistics of an edge list as JSON")
    s.add_argument("graph")
    s.add_argument("--labels", help="dataset directory or labels file for modularity/TPR")
    s.add_argument("--out")
    s.set_defaults(func=cmd_stats)

    c = sub.add_parser("cluster", help="cluster an edge list")
    c.add_argument("graph")
    c.add_argument("--algorithm", choices=["leiden", "spectral"], default="leiden")
    c.add_argument("--gamma", type=float, default=None,
                   help="fixed Leiden resolution (default: stability selection over the grid)")
    c.add_argument("--k", type=int, default=None)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")
    c.set_defaults(func=cmd_cluster)

    r = sub.add_parser("run", help="run an experiment grid")
    r.add_argument("--config", help="JSON config file; flags below override it")
    r.add_argument("--scale", choices=["desk", "paper"], default="desk")
    r.add_argument("--problems", type=_csv_list())
    r.add_argument("--n-entities", type=int)
    r.add_argument("--n-instances", type=int)
    r.add_argument("--methods", type=_csv_list())
    r.add_argument("--clusterers", type=_csv_list())
    r.add_argument("--partial-mode", choices=["none", "random", "cluster"])
    r.add_argument("--partial-fractions", type=_csv_list(float))
    r.add_argument("--base-seed", type=int)
    r.add_argument("--output")
    r.add_argument("--k-neighbors", type=int)
    r.add_argument("--kernel-form", choices=["literal", "gaussian"])
    r.add_argument("--center-scale", type=float)
    r.add_argument("--n-jobs", type=int)
    r.add_argument("--baseline", action="store_true", help="single-modality baseline instead")
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("summarize", help="mean/max/std table of a records file")
    m.add_argument("records")
    m.add_argument("--by", type=_csv_list(), default=["problem", "method", "clusterer"])
    m.add_argument("--value", default="ami_y")
    m.add_argument("--out")
    m.set_defaults(func=cmd_summarize)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        rc = args.func(args)
    except ConfigError as exc:
        print(f"mmsimnet: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"mmsimnet: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failure inside a command
        print(f"mmsimnet: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if rc is None else rc


if __name__ == "__main__":
    sys.exit(main())
