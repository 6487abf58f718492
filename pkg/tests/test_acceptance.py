"""Desk-scale acceptance criteria.

The suite below is run once per session (about three minutes on one core) and
every criterion reads from it; criterion 10 runs it a second time.  Each
criterion prints one PASS/FAIL line, repeated in the terminal summary.

    pytest tests/test_acceptance.py -v
"""
import csv
import itertools
import math
import warnings
from collections import defaultdict

import numpy as np
import pytest

from mmsimnet.bench import ExperimentConfig, run_experiment, single_modality_baseline
from mmsimnet.evalmetrics import ami, ari
from mmsimnet.integrate import (FusionParams, Method, modality_matrices, snf_diffusion_step,
                                snf_fuse, snf_knn_kernel, snf_normalize)
from mmsimnet.mmgen import build_problem
from mmsimnet.netgraph import Graph, modularity, tpr
from mmsimnet.simkern import (KernelParams, Orientation, knn_indices, pairwise_euclidean,
                              scaled_affinity)

pytestmark = pytest.mark.acceptance

METHODS = [m.value for m in Method]
K = ExperimentConfig.preset("desk").k_neighbors

SUITE = {
    "main": dict(problems=["Easy", "Mixed Normal", "1Rand", "2Rand", "Merged"],
                 methods=METHODS, clusterers=["leiden"]),
    "split": dict(problems=["Split"], methods=["mean", "snf", "nemo"], clusterers=["spectral"]),
    "baseline": dict(problems=["Easy", "Mixed Normal"], clusterers=["leiden"], baseline=True),
    "random40": dict(problems=["Easy"], n_instances=5, partial_mode="random",
                     partial_fractions=[0.0, 0.4], clusterers=["leiden"],
                     methods=["snf:impute_max", "nemo:nemo_shared", "extreme:extreme_shared",
                              "mean:impute_max"]),
    "cluster": dict(problems=["Easy"], n_instances=5, partial_mode="cluster",
                    partial_fractions=[0.5, 1.0], clusterers=["leiden"],
                    methods=["mean:ignore_nan"]),
}


def run_suite(directory):
    out = {}
    for name, kw in SUITE.items():
        cfg = ExperimentConfig.preset("desk", output=str(directory / f"{name}.csv"), **kw)
        runner = single_modality_baseline if cfg.baseline else run_experiment
        recs = runner(cfg)
        assert not any(r.error for r in recs), [r.error for r in recs if r.error][:3]
        out[name] = recs
    return out


@pytest.fixture(scope="session")
def suite_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("suite_a")


@pytest.fixture(scope="session")
def suite(suite_dir):
    return run_suite(suite_dir)


def mean_ami(records, **match):
    vals = [r.ami_y for r in records
            if all(getattr(r, k) == v for k, v in match.items())]
    assert vals, match
    return float(np.mean(vals)), len(vals)


# --- criterion 1: oracles ------------------------------------------------------

def _modularity_naive(A, lab, gamma=1.0):
    k = A.sum(1)
    m = A.sum() / 2
    return sum(A[i, j] - gamma * k[i] * k[j] / (2 * m)
               for i in range(len(A)) for j in range(len(A)) if lab[i] == lab[j]) / (2 * m)


def _tpr_naive(A, lab):
    fr = []
    for c in np.unique(lab):
        mem = np.flatnonzero(lab == c)
        hit = set()
        for a, b, d in itertools.combinations(mem, 3):
            if A[a, b] and A[b, d] and A[a, d]:
                hit |= {a, b, d}
        fr.append(len(hit) / len(mem))
    return float(np.mean(fr))


def _ami_naive(a, b):
    n = len(a)
    ca, cb = np.unique(a), np.unique(b)
    if (len(ca) == len(cb) == 1) or (len(ca) == len(cb) == n):
        return 1.0
    ra = np.array([np.sum(a == x) for x in ca])
    rb = np.array([np.sum(b == y) for y in cb])
    mi = sum((np.sum((a == x) & (b == y)) / n) *
             math.log(n * np.sum((a == x) & (b == y)) / (ra[i] * rb[j]))
             for i, x in enumerate(ca) for j, y in enumerate(cb) if np.sum((a == x) & (b == y)))
    emi = 0.0
    for ai in ra:
        for bj in rb:
            for nij in range(max(1, ai + bj - n), min(ai, bj) + 1):
                p = math.comb(int(bj), nij) * math.comb(int(n - bj), int(ai - nij)) / math.comb(n, int(ai))
                emi += nij / n * math.log(n * nij / (ai * bj)) * p
    h = max(-sum(r / n * math.log(r / n) for r in ra), -sum(r / n * math.log(r / n) for r in rb))
    return (mi - emi) / (h - emi)


def _ari_naive(a, b):
    n = len(a)
    pairs = [(a[i] == a[j], b[i] == b[j]) for i in range(n) for j in range(i + 1, n)]
    tp = sum(x and y for x, y in pairs)
    sa = sum(x for x, _ in pairs)
    sb = sum(y for _, y in pairs)
    exp = sa * sb / len(pairs)
    mx = (sa + sb) / 2
    return 1.0 if mx == exp else (tp - exp) / (mx - exp)


def test_criterion_01_oracle_equivalence(report):
    rng = np.random.default_rng(2024)
    worst = defaultdict(float)
    for _ in range(40):
        n = int(rng.integers(4, 31))
        A = np.triu(rng.random((n, n)) < 0.3, 1)
        edges = np.argwhere(A)
        if not len(edges):
            continue
        G = Graph.from_edges(n, edges)
        Ad = G.adjacency().toarray()
        lab = rng.integers(0, 4, n)
        gamma = float(rng.uniform(0.5, 2))
        worst["modularity"] = max(worst["modularity"],
                                  abs(modularity(G, lab, gamma) - _modularity_naive(Ad, lab, gamma)))
        worst["tpr"] = max(worst["tpr"], abs(tpr(G, lab) - _tpr_naive(Ad, lab)))
        X = rng.normal(size=(n, int(rng.integers(1, 6))))
        Dn = np.array([[math.sqrt(sum((p - q) ** 2 for p, q in zip(x, y))) for y in X] for x in X])
        worst["euclidean"] = max(worst["euclidean"], np.abs(pairwise_euclidean(X).values - Dn).max())
    for _ in range(200):
        n = int(rng.integers(2, 9))
        a, b = rng.integers(0, 3, n), rng.integers(0, 4, n)
        worst["ami"] = max(worst["ami"], abs(ami(a, b) - _ami_naive(a, b)))
        worst["ari"] = max(worst["ari"], abs(ari(a, b) - _ari_naive(a, b)))
    ok = all(v <= 1e-10 for v in worst.values())
    report(1, ok, "max abs error " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()))


# --- criterion 2: SNF internals -----------------------------------------------------

def test_criterion_02_snf_internals(report):
    cfg = ExperimentConfig.preset("desk")
    fp = cfg.fusion_params()
    ds = build_problem("Easy", cfg.n_entities, cfg.base_seed, cfg.n_features, cfg.n_clusters,
                       cfg.gen_params())
    _, affs = modality_matrices(ds, fp.kernel)
    worst_row = 0.0

    def check(it, Ps):
        nonlocal worst_row
        worst_row = max(worst_row, max(np.abs(P.sum(axis=1) - 1).max() for P in Ps))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        out = snf_fuse(affs, fp, callback=check)
    n_iter = out.info["n_iter"]

    # matrix form against the elementwise double sum on 30 nodes
    rng = np.random.default_rng(0)
    k = 5
    Ws = [scaled_affinity(pairwise_euclidean(rng.normal(size=(30, 4))), KernelParams(0.5, k)).values
          for _ in range(3)]
    Ps = [snf_normalize(W) for W in Ws]
    Ss = [snf_knn_kernel(W, k) for W in Ws]
    got = snf_diffusion_step(Ps, Ss)
    eq_err = 0.0
    for v in range(3):
        nn = knn_indices(Ws[v], k, Orientation.AFFINITY)
        S = Ss[v].toarray()
        Po = np.mean([Ps[u] for u in range(3) if u != v], axis=0)
        E = np.array([[sum(S[i, a] * S[j, b] * Po[a, b] for a in nn[i] for b in nn[j])
                       for j in range(30)] for i in range(30)])
        eq_err = max(eq_err, np.abs(E - got[v]).max())

    changes = ", ".join(f"{c:.1e}" for c in out.info["changes"])
    ok = worst_row <= 1e-9 and eq_err <= 1e-10 and n_iter <= 5
    report(2, ok, f"row-sum error {worst_row:.1e}; double sum vs matrix form {eq_err:.1e}; "
                  f"Easy converged in {n_iter} iterations (needs <= 5; changes {changes})")


# --- criteria 3-9: orderings on the desk suite ----------------------------------------

def test_criterion_03_merged_ordering(suite, report):
    recs = suite["main"]
    mean, n = mean_ami(recs, problem="Merged", method="mean")
    snf, _ = mean_ami(recs, problem="Merged", method="snf")
    report(3, mean > snf, f"Merged/Leiden over {n} instances: Mean {mean:.4f} vs SNF {snf:.4f}")


def test_criterion_04_split_ordering(suite, report):
    recs = suite["split"]
    mean, n = mean_ami(recs, method="mean")
    snf, _ = mean_ami(recs, method="snf")
    nemo, _ = mean_ami(recs, method="nemo")
    report(4, snf > mean and nemo > mean,
           f"Split/spectral over {n} instances: SNF {snf:.4f}, NEMO {nemo:.4f} vs Mean {mean:.4f}")


def test_criterion_05_uninformative_degradation(suite, report):
    recs = suite["main"]
    parts, ok = [], True
    for m in METHODS:
        e, _ = mean_ami(recs, problem="Easy", method=m)
        r1, _ = mean_ami(recs, problem="1Rand", method=m)
        r2, _ = mean_ami(recs, problem="2Rand", method=m)
        ok &= r2 < r1 < e
        parts.append(f"{m} {r2:.3f}<{r1:.3f}<{e:.3f}")
    report(5, ok, "2Rand<1Rand<Easy: " + "; ".join(parts))


def test_criterion_06_integration_beats_baseline(suite, report):
    parts, ok = [], True
    for prob in ("Easy", "Mixed Normal"):
        base, nb = mean_ami(suite["baseline"], problem=prob)
        for m in METHODS:
            v, _ = mean_ami(suite["main"], problem=prob, method=m)
            ok &= v > base
            parts.append(f"{prob}/{m} {v:.3f}")
        parts.append(f"{prob} baseline {base:.3f} (n={nb})")
    report(6, ok, "; ".join(parts))


def test_criterion_07_partial_random_resilience(suite, report):
    recs = suite["random40"]

    def drop(method, policy):
        a, _ = mean_ami(recs, method=method, policy=policy, fraction=0.0)
        b, _ = mean_ami(recs, method=method, policy=policy, fraction=0.4)
        return a - b

    d = {m: drop(*m.split(":")) for m in ("nemo:nemo_shared", "snf:impute_max",
                                          "extreme:extreme_shared", "mean:impute_max")}
    ok1 = d["nemo:nemo_shared"] < d["snf:impute_max"]
    ok2 = d["extreme:extreme_shared"] < d["mean:impute_max"]
    report(7, ok1 and ok2,
           f"AMI drop at 40%: NEMO {d['nemo:nemo_shared']:.4f} < SNF {d['snf:impute_max']:.4f} "
           f"[{'ok' if ok1 else 'violated'}]; Extreme {d['extreme:extreme_shared']:.4f} < "
           f"Mean-impute-max {d['mean:impute_max']:.4f} [{'ok' if ok2 else 'violated'}]")


def test_criterion_08_cluster_masking(suite, report):
    recs = suite["cluster"]
    half, n = mean_ami(recs, fraction=0.5)
    full, _ = mean_ami(recs, fraction=1.0)
    report(8, full >= half,
           f"Mean ignoring NaN, cluster masking over {n} instances: 100% {full:.4f} vs 50% {half:.4f}")


def test_criterion_09_network_properties(suite, report):
    easy = [r for r in suite["main"] if r.problem == "Easy"]
    min_deg = min(r.min_degree for r in easy)
    mean_degs = [r.mean_degree for r in easy]
    deg_ok = min_deg >= K and all(K <= d <= 2 * K for d in mean_degs)
    mod_mean = np.mean([r.modularity_y for r in easy if r.method == "mean"])
    mod_nemo = np.mean([r.modularity_y for r in easy if r.method == "nemo"])
    tprs = {m: min(r.tpr_y for r in easy if r.method == m) for m in METHODS if m != "extreme"}
    tpr_ok = all(v >= 0.9 for v in tprs.values())
    ok = deg_ok and mod_mean >= mod_nemo and tpr_ok
    report(9, ok, f"min degree {min_deg:.0f} (K={K}); mean degree in "
                  f"[{min(mean_degs):.2f}, {max(mean_degs):.2f}]; modularity(y) Mean {mod_mean:.4f} "
                  f"vs NEMO {mod_nemo:.4f}; min TPR(y) " +
                  ", ".join(f"{m} {v:.3f}" for m, v in tprs.items()))


# --- criterion 10: determinism -------------------------------------------------------

def _without_wall_time(path):
    rows = list(csv.reader(open(path)))
    i = rows[0].index("wall_time")
    return [r[:i] + r[i + 1:] for r in rows]


def test_criterion_10_determinism(suite, suite_dir, tmp_path_factory, report):
    again = tmp_path_factory.mktemp("suite_b")
    run_suite(again)
    diffs = []
    for name in SUITE:
        a = _without_wall_time(suite_dir / f"{name}.csv")
        b = _without_wall_time(again / f"{name}.csv")
        if a != b:
            diffs.append(name)
        ma = (suite_dir / f"{name}.manifest.json").read_text()
        mb = (again / f"{name}.manifest.json").read_text()
        if ma.replace(str(suite_dir), "") != mb.replace(str(again), ""):
            diffs.append(name + " manifest")
    n_rows = sum(len(v) for v in suite.values())
    report(10, not diffs, f"{len(SUITE)} result files, {n_rows} records; differing: {diffs or 'none'}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
