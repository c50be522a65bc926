"""Neighborhood graphs and the scatter matrices built from them.

The intrinsic graph connects nearest same-class pairs, the penalty graph
nearest different-class pairs; both are weighted with the heat kernel
exp(-||x_i - x_j||^2 / 2) and symmetrized by OR. Sandwiching a graph
Laplacian between the data, S = X L X^T, turns the graph objective into a
quadratic form in feature space.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .core import FeatureMatrix, Hyperparams, as_features


@dataclass(frozen=True)
class WeightedGraph:
    """Symmetric nonnegative weight matrix with a zero diagonal."""

    W: np.ndarray
    degenerate: bool = False    # set when no valid pair existed

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError("weight matrix must be square")
        if not np.array_equal(W, W.T):
            raise ValueError("weight matrix must be exactly symmetric")
        if np.any(np.diagonal(W) != 0.0):
            raise ValueError("weight matrix must have a zero diagonal")
        if W.size and (W.min() < 0.0 or W.max() > 1.0):
            raise ValueError("weights must lie in [0, 1]")
        W = np.ascontiguousarray(W)
        W.setflags(write=False)
        object.__setattr__(self, "W", W)

    @property
    def n(self):
        return self.W.shape[0]


@dataclass(frozen=True)
class ScatterSet:
    """Graph scatter matrices for both domains plus the target covariance.

    S_w_*, S_b_* come from the intrinsic / penalty graphs; S_h_u is the
    (biased, n-scaled) covariance of the target samples.
    """

    S_w_s: np.ndarray
    S_b_s: np.ndarray
    S_w_u: np.ndarray
    S_b_u: np.ndarray
    S_h_u: np.ndarray


def heat_kernel_weight(x_i, x_j, connected: bool) -> float:
    """Edge weight exp(-||x_i - x_j||^2 / 2) if connected, else 0."""
    x_i = np.asarray(x_i, dtype=np.float64).ravel()
    x_j = np.asarray(x_j, dtype=np.float64).ravel()
    if x_i.shape != x_j.shape:
        raise ValueError("vectors must have the same length")
    if not connected:
        return 0.0
    diff = x_i - x_j
    return float(np.exp(-diff.dot(diff) / 2.0))


def _heat_weights(sqdist):
    return np.exp(-sqdist / 2.0)


def _symmetrized_weights(sqdist, adjacency):
    """OR-symmetrize a directed adjacency and weight the surviving edges."""
    adj = adjacency | adjacency.T
    np.fill_diagonal(adj, False)
    W = np.where(adj, _heat_weights(sqdist), 0.0)
    # exact symmetry: sqdist may differ across the diagonal by rounding
    W = np.minimum(W, W.T)
    return W


def build_intrinsic_graph(X, labels, k_w: int) -> WeightedGraph:
    """Connect each sample to its k_w nearest same-label neighbors.

    k_w is clamped per class to the class size minus one. Symmetrization is
    by OR: an edge exists if either endpoint selected the other.
    """
    X = as_features(X)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.shape[0] != X.n:
        raise ValueError("labels length must equal the sample count")
    n = X.n
    sqdist = cdist(X.data.T, X.data.T, "sqeuclidean")
    adj = np.zeros((n, n), dtype=bool)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < 2:
            continue
        k = min(k_w, idx.size - 1)
        sub = sqdist[np.ix_(idx, idx)].copy()
        np.fill_diagonal(sub, np.inf)
        order = np.argsort(sub, axis=1, kind="stable")[:, :k]
        rows = np.repeat(idx, k)
        adj[rows, idx[order].ravel()] = True
    return WeightedGraph(_symmetrized_weights(sqdist, adj))


def build_penalty_graph(X, labels, k_b: int) -> WeightedGraph:
    """Connect each sample to its k_b nearest different-label neighbors.

    With a single class present there are no cross-class pairs; an empty
    graph flagged `degenerate` is returned and a warning is emitted.
    """
    X = as_features(X)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.shape[0] != X.n:
        raise ValueError("labels length must equal the sample count")
    n = X.n
    if np.unique(labels).size < 2:
        warnings.warn("penalty graph is empty: only one class present")
        return WeightedGraph(np.zeros((n, n)), degenerate=True)
    sqdist = cdist(X.data.T, X.data.T, "sqeuclidean")
    masked = np.where(labels[:, None] != labels[None, :], sqdist, np.inf)
    adj = np.zeros((n, n), dtype=bool)
    for i in range(n):
        candidates = np.flatnonzero(np.isfinite(masked[i]))
        if candidates.size == 0:
            continue
        k = min(k_b, candidates.size)
        order = np.argsort(masked[i, candidates], kind="stable")[:k]
        adj[i, candidates[order]] = True
    return WeightedGraph(_symmetrized_weights(sqdist, adj))


def laplacian(G: WeightedGraph) -> np.ndarray:
    """Graph Laplacian L = D - W with D_ii the i-th weighted degree."""
    W = G.W
    return np.diag(W.sum(axis=1)) - W


def scatter_matrices(X_s, labels_s, X_u, pseudo_labels_u, hyper: Hyperparams) -> ScatterSet:
    """Build all four graph scatter matrices and the target covariance.

    Source graphs use the ground-truth labels, target graphs the current
    pseudo labels. S_h_u = X_u (I - 11^T/n_u) X_u^T.
    """
    X_s = as_features(X_s)
    X_u = as_features(X_u)

    def sandwich(X: FeatureMatrix, G: WeightedGraph):
        S = X.data @ laplacian(G) @ X.data.T
        return (S + S.T) / 2.0

    S_w_s = sandwich(X_s, build_intrinsic_graph(X_s, labels_s, hyper.k_w))
    S_b_s = sandwich(X_s, build_penalty_graph(X_s, labels_s, hyper.k_b))
    S_w_u = sandwich(X_u, build_intrinsic_graph(X_u, pseudo_labels_u, hyper.k_w))
    S_b_u = sandwich(X_u, build_penalty_graph(X_u, pseudo_labels_u, hyper.k_b))

    centered = X_u.data - X_u.data.mean(axis=1, keepdims=True)
    S_h_u = centered @ centered.T
    S_h_u = (S_h_u + S_h_u.T) / 2.0
    return ScatterSet(S_w_s=S_w_s, S_b_s=S_b_s, S_w_u=S_w_u, S_b_u=S_b_u, S_h_u=S_h_u)
