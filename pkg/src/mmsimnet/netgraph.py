"""KNN network construction and network statistics.

All statistics use the unweighted skeleton of the graph.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path

from .simkern import Orientation, SimilarityMatrix, knn_indices

__all__ = ["Graph", "knn_graph", "modularity", "tpr", "assortativity",
           "mean_path_length", "degree_stats", "network_stats",
           "write_edgelist", "read_edgelist", "write_stats"]


@dataclass(frozen=True)
class Graph:
    """Undirected weighted graph stored as an edge list with ``u < v``."""

    n_nodes: int
    edges: np.ndarray     # (E, 2) int, u < v, sorted
    weights: np.ndarray   # (E,) float > 0

    def __post_init__(self):
        E = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if E.shape[0] != w.shape[0]:
            raise ValueError("one weight per edge required")
        if E.size:
            if np.any(E[:, 0] >= E[:, 1]):
                raise ValueError("edges must satisfy u < v (no self loops)")
            if E.max() >= self.n_nodes:
                raise ValueError("edge endpoint out of range")
            if np.unique(E, axis=0).shape[0] != E.shape[0]:
                raise ValueError("duplicate edges")
        if np.any(w <= 0):
            raise ValueError("edge weights must be positive")
        object.__setattr__(self, "edges", E)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_edges(cls, n_nodes: int, pairs, weights=None) -> "Graph":
        """Build from arbitrary (u, v) pairs: orients, drops self loops and duplicates."""
        P = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        w = np.ones(len(P)) if weights is None else np.asarray(weights, dtype=np.float64)
        keep = P[:, 0] != P[:, 1]
        P, w = np.sort(P[keep], axis=1), w[keep]
        P, first = np.unique(P, axis=0, return_index=True)
        return cls(n_nodes, P, w[first])

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    def adjacency(self) -> sp.csr_matrix:
        """Unweighted symmetric adjacency matrix."""
        u, v = self.edges.T
        data = np.ones(2 * len(u))
        A = sp.csr_matrix((data, (np.concatenate([u, v]), np.concatenate([v, u]))),
                          shape=(self.n_nodes, self.n_nodes))
        return A

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n_nodes)

    def neighbors(self, node: int) -> np.ndarray:
        A = self.adjacency()
        return A.indices[A.indptr[node]:A.indptr[node + 1]]


def knn_graph(P: SimilarityMatrix, k: int) -> Graph:
    """Undirected union of every node's ``k`` closest nodes.

    Closeness follows the matrix orientation; ties go to the lower index.
    Affinity edges carry the fused value as weight (non-positive values are
    floored to a tiny positive weight), distance edges weight 1.
    """
    if not P.is_total:
        raise ValueError("knn_graph needs a fully defined matrix")
    n = P.n
    if n <= k:
        raise ValueError(f"need more than k={k} nodes")
    nn = knn_indices(P.values, k, P.orientation)
    src = np.repeat(np.arange(n), k)
    pairs = np.column_stack([src, nn.ravel()])
    if P.orientation == Orientation.AFFINITY:
        w = np.maximum(P.values[src, nn.ravel()], 1e-12)
    else:
        w = np.ones(len(src))
    return Graph.from_edges(n, pairs, w)


def _labels(labels) -> np.ndarray:
    return np.asarray(getattr(labels, "assignments", labels), dtype=np.int64)


def modularity(G: Graph, labels, gamma: float = 1.0) -> float:
    """Newman modularity with resolution ``gamma`` on the unweighted graph."""
    m = G.n_edges
    if m == 0:
        return 0.0
    c = _labels(labels)
    _, c = np.unique(c, return_inverse=True)
    u, v = G.edges.T
    internal = np.bincount(c[u][c[u] == c[v]], minlength=c.max() + 1)
    deg_tot = np.bincount(c, weights=G.degrees(), minlength=c.max() + 1)
    return float(np.sum(internal / m - gamma * (deg_tot / (2.0 * m)) ** 2))


def tpr(G: Graph, labels) -> float:
    """Mean over clusters of the fraction of members in a within-cluster triangle."""
    c = _labels(labels)
    A = G.adjacency()
    u, v = G.edges.T
    same = c[u] == c[v]
    Ain = sp.csr_matrix((np.ones(2 * same.sum()),
                         (np.concatenate([u[same], v[same]]), np.concatenate([v[same], u[same]]))),
                        shape=A.shape)
    # node i closes a triangle iff some neighbour pair of i is adjacent
    tri = np.asarray((Ain @ Ain).multiply(Ain).sum(axis=1)).ravel() > 0
    ids = np.unique(c)
    fractions = [tri[c == g].mean() if (c == g).sum() > 1 else 0.0 for g in ids]
    return float(np.mean(fractions)) if fractions else 0.0


def assortativity(G: Graph) -> float:
    """Degree assortativity: Pearson correlation of degrees across edge ends.

    NaN when undefined (no edges or all endpoint degrees equal).
    """
    if G.n_edges == 0:
        return math.nan
    k = G.degrees().astype(np.float64)
    u, v = G.edges.T
    x = np.concatenate([k[u], k[v]])
    y = np.concatenate([k[v], k[u]])
    if np.all(x == x[0]):
        return math.nan
    xm, ym = x - x.mean(), y - y.mean()
    return float(np.sum(xm * ym) / math.sqrt(np.sum(xm * xm) * np.sum(ym * ym)))


def mean_path_length(G: Graph) -> float:
    """Mean hop distance over ordered reachable pairs (unreachable pairs skipped)."""
    if G.n_nodes < 2:
        raise ValueError("need at least two nodes")
    D = shortest_path(G.adjacency(), method="D", directed=False, unweighted=True)
    off = ~np.eye(G.n_nodes, dtype=bool)
    finite = D[off & np.isfinite(D)]
    return float(finite.mean()) if finite.size else math.nan


def degree_stats(G: Graph) -> tuple[float, float]:
    k = G.degrees()
    return float(k.mean()), float(np.median(k))


def network_stats(G: Graph, truth=None) -> dict:
    """All network statistics as a flat dict (truth-based ones need ``truth``)."""
    mean_k, median_k = degree_stats(G)
    out = {
        "n_nodes": G.n_nodes,
        "n_edges": G.n_edges,
        "min_degree": int(G.degrees().min()) if G.n_nodes else 0,
        "assortativity": assortativity(G),
        "mean_path_length": mean_path_length(G),
        "mean_degree": mean_k,
        "median_degree": median_k,
    }
    if truth is not None:
        out["modularity_y"] = modularity(G, truth)
        out["tpr_y"] = tpr(G, truth)
    return out


def write_edgelist(G: Graph, path) -> None:
    """One ``u v w`` line per edge; a comment header records the node count."""
    with open(path, "w") as fh:
        fh.write(f"# n_nodes={G.n_nodes}\n")
        for (u, v), w in zip(G.edges, G.weights):
            fh.write(f"{u} {v} {float(w)!r}\n")


def read_edgelist(path) -> Graph:
    with open(path) as fh:
        head = fh.readline()
        body = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    n = int(head.split("=", 1)[1])
    if not body:
        return Graph(n, np.empty((0, 2), dtype=np.int64), np.empty(0))
    data = np.loadtxt(body, ndmin=2)
    return Graph(n, data[:, :2].astype(np.int64), data[:, 2])


def write_stats(stats: dict, path) -> None:
    clean = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in stats.items()}
    Path(path).write_text(json.dumps(clean, indent=1, sort_keys=True))
