"""Graph-based label propagation.

Labels diffuse over a normalized similarity graph by iterating
Y(t+1) = sigma * S * Y(t) + (1 - sigma) * Y(0), whose fixed point is
(1 - sigma) (I - sigma S)^{-1} Y(0). Used for pseudo-label initialization,
per-iteration refresh, and as the final classifier in the learned subspace.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .core import FeatureMatrix, Hyperparams, LabeledDataset, as_features


@dataclass(frozen=True)
class PropagationResult:
    soft_labels: np.ndarray     # (n, C) diffusion scores
    hard_labels: np.ndarray     # row argmax, ties to the lowest class index
    iterations_used: int


def similarity_matrix(Z, k: int, fully_connected: bool = False) -> np.ndarray:
    """Normalized similarity S = D^{-1/2} W D^{-1/2} of a k-NN heat graph.

    The k-NN adjacency is OR-symmetrized and weighted with
    exp(-||z_i - z_j||^2 / 2). Nodes whose incident weights underflow to
    zero end up with zero rows rather than NaNs.
    """
    Z = as_features(Z)
    n = Z.n
    if n < 2:
        raise ValueError("need at least two samples to build a graph")
    sqdist = cdist(Z.data.T, Z.data.T, "sqeuclidean")
    if fully_connected:
        adj = np.ones((n, n), dtype=bool)
    else:
        k = min(max(int(k), 0), n - 1)
        adj = np.zeros((n, n), dtype=bool)
        if k > 0:
            masked = sqdist.copy()
            np.fill_diagonal(masked, np.inf)
            order = np.argsort(masked, axis=1, kind="stable")[:, :k]
            adj[np.repeat(np.arange(n), k), order.ravel()] = True
        adj |= adj.T
    np.fill_diagonal(adj, False)
    W = np.where(adj, np.exp(-sqdist / 2.0), 0.0)
    W = np.minimum(W, W.T)
    deg = W.sum(axis=1)
    with np.errstate(divide="ignore"):
        dinv = np.where(deg > 0.0, 1.0 / np.sqrt(deg), 0.0)
    return dinv[:, None] * W * dinv[None, :]


def propagate(S, Y0, sigma: float, tol: float = 1e-9, max_iter: int = 1000) -> PropagationResult:
    """Iterate the diffusion to its fixed point.

    Stops when the max-norm update falls below `tol` or after `max_iter`
    sweeps. Y0 holds one-hot rows for labeled samples and zero rows for
    unlabeled ones.
    """
    if not 0.0 < sigma < 1.0:
        raise ValueError("sigma must lie in (0, 1)")
    S = np.asarray(S, dtype=np.float64)
    Y0 = np.asarray(Y0, dtype=np.float64)
    Y = Y0.copy()
    base = (1.0 - sigma) * Y0
    iterations = 0
    for iterations in range(1, max_iter + 1):
        Y_next = sigma * (S @ Y) + base
        delta = np.max(np.abs(Y_next - Y))
        Y = Y_next
        if delta < tol:
            break
    return PropagationResult(
        soft_labels=Y,
        hard_labels=np.argmax(Y, axis=1),
        iterations_used=iterations,
    )


def closed_form(S, Y0, sigma: float) -> np.ndarray:
    """Fixed point (1 - sigma) (I - sigma S)^{-1} Y0 by direct solve."""
    S = np.asarray(S, dtype=np.float64)
    Y0 = np.asarray(Y0, dtype=np.float64)
    n = S.shape[0]
    return (1.0 - sigma) * np.linalg.solve(np.eye(n) - sigma * S, Y0)


def classify(train: LabeledDataset, test, hyper: Hyperparams) -> np.ndarray:
    """Propagate training labels to test samples over a joint graph.

    Both sets must live in the same (sub)space. Returns hard labels for the
    test columns only.
    """
    test = as_features(test)
    if train.features.dim != test.dim:
        raise ValueError(
            f"train dimensionality {train.features.dim} != test {test.dim}"
        )
    joint = FeatureMatrix(np.hstack([train.features.data, test.data]))
    S = similarity_matrix(joint, k=hyper.k_w)
    n_train = train.n
    Y0 = np.zeros((joint.n, train.num_classes))
    Y0[np.arange(n_train), train.labels] = 1.0
    # the diffusion fixed point, evaluated directly; identical to iterating
    Y = closed_form(S, Y0, hyper.sigma_lp)
    return np.argmax(Y[n_train:], axis=1)
