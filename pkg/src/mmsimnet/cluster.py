"""Community detection on KNN networks: Leiden modularity and random-walk spectral clustering."""
from __future__ import annotations

from dataclasses import dataclass, field

import random

import igraph as ig
import numpy as np
import scipy.linalg as sla
from sklearn.cluster import KMeans

from .evalmetrics import ami
from .mmgen import Labels
from .netgraph import Graph, modularity

__all__ = ["ClusterParams", "leiden", "select_resolution", "spectral_rw",
           "rw_laplacian_spectrum", "improving_moves"]


def _default_grid():
    return [float(g) for g in np.geomspace(0.5, 2.0, 15)]


@dataclass(frozen=True)
class ClusterParams:
    resolution_grid: list = field(default_factory=_default_grid)
    n_restarts: int = 10
    spectral_k: int = 10
    seed: int = 0

    def __post_init__(self):
        if not len(self.resolution_grid):
            raise ValueError("resolution grid must not be empty")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be positive")


def _to_igraph(G: Graph) -> ig.Graph:
    return ig.Graph(n=G.n_nodes, edges=G.edges.tolist())


def leiden(G: Graph, gamma: float = 1.0, seed: int = 0) -> Labels:
    """Leiden modularity maximization at resolution ``gamma`` (unweighted).

    Iterates until a full pass changes nothing, so no single node move can
    raise the modularity of the returned partition.
    """
    if G.n_nodes == 0:
        return Labels(np.empty(0, dtype=np.int64), 0)
    # igraph draws from one process-wide generator; reseed it per call
    ig.set_random_number_generator(random.Random(seed))
    try:
        part = _to_igraph(G).community_leiden(objective_function="modularity",
                                              resolution=gamma, n_iterations=-1)
    finally:
        ig.set_random_number_generator(random)
    return Labels.from_array(part.membership)


def improving_moves(G: Graph, labels, gamma: float = 1.0, tol: float = 1e-12) -> list:
    """Single-node moves (node, target cluster, gain) that increase modularity.

    Targets are the clusters of the node's neighbours and a fresh singleton.
    """
    c = np.asarray(getattr(labels, "assignments", labels), dtype=np.int64).copy()
    m = G.n_edges
    if m == 0:
        return []
    A = G.adjacency()
    k = G.degrees().astype(np.float64)
    tot = np.bincount(c, weights=k, minlength=c.max() + 2)
    fresh = c.max() + 1
    moves = []
    for i in range(G.n_nodes):
        nbrs = A.indices[A.indptr[i]:A.indptr[i + 1]]
        links = {}
        for j in nbrs:
            links[c[j]] = links.get(c[j], 0) + 1
        own = c[i]
        base_links = links.get(own, 0)
        tot_own = tot[own] - k[i]
        # gain of moving i from own to t, in units of modularity
        for t in set(links) | {fresh}:
            if t == own:
                continue
            tot_t = tot[t] if t != fresh else 0.0
            gain = (links.get(t, 0) - base_links) / m \
                - gamma * k[i] * (tot_t - tot_own) / (2.0 * m * m)
            if gain > tol:
                moves.append((i, int(t), float(gain)))
    return moves


def select_resolution(G: Graph, params: ClusterParams = ClusterParams()) -> tuple[float, Labels]:
    """Pick the grid resolution whose partition agrees most with the others.

    Leiden runs at every grid point; the returned partition maximizes its
    mean pairwise AMI with all other grid partitions (smallest gamma on ties).
    """
    grid = sorted(float(g) for g in params.resolution_grid)
    parts = [leiden(G, g, params.seed) for g in grid]
    if len(grid) == 1:
        return grid[0], parts[0]
    n = len(grid)
    S = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            S[i, j] = S[j, i] = ami(parts[i], parts[j])
    score = (S.sum(axis=1) - 1.0) / (n - 1)
    best = int(np.flatnonzero(score >= score.max() - 1e-12)[0])
    return grid[best], parts[best]


def rw_laplacian_spectrum(G: Graph, k: int | None = None):
    """Smallest eigenpairs of ``L_rw = I - D^-1 A`` via the symmetric normalized form.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvectors of ``L_rw`` as columns.
    """
    deg = G.degrees().astype(np.float64)
    if np.any(deg == 0):
        raise ValueError("random-walk Laplacian undefined for isolated nodes")
    A = G.adjacency().toarray()
    dinv = 1.0 / np.sqrt(deg)
    L = np.eye(G.n_nodes) - dinv[:, None] * A * dinv[None, :]
    n = G.n_nodes
    subset = None if k is None else (0, min(k, n) - 1)
    try:
        vals, vecs = sla.eigh(L, subset_by_index=subset)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigensolver failed on {n}-node graph "
                           f"({G.n_edges} edges): {exc}") from exc
    return vals, dinv[:, None] * vecs


def spectral_rw(G: Graph, k: int, params: ClusterParams = ClusterParams()) -> Labels:
    """k-means on the ``k`` smallest random-walk Laplacian eigenvectors."""
    if k < 1:
        raise ValueError("k must be positive")
    if k == 1:
        if np.any(G.degrees() == 0):
            raise ValueError("graph has isolated nodes")
        return Labels(np.zeros(G.n_nodes, dtype=np.int64), 1)
    _, U = rw_laplacian_spectrum(G, k)
    km = KMeans(n_clusters=k, init="k-means++", n_init=params.n_restarts,
                random_state=params.seed).fit(U)
    return Labels.from_array(km.labels_)


