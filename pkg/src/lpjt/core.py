"""Shared data types, input validation and feature normalization.

Data matrices are stored column-major: one column per sample, one row per
feature. All types are immutable after construction (arrays are marked
read-only), so they can be shared freely across threads.
"""

import dataclasses
from dataclasses import dataclass, field

import numpy as np

VALID_KERNELS = ("none", "linear", "rbf")


def _freeze(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FeatureMatrix:
    """Dense feature matrix of shape (dim, n): one column per sample."""

    data: np.ndarray

    def __post_init__(self):
        data = np.atleast_2d(np.asarray(self.data, dtype=np.float64))
        if data.ndim != 2:
            raise ValueError("feature matrix must be 2-D")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("feature matrix must be non-empty")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature matrix contains NaN or Inf entries")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def dim(self):
        return self.data.shape[0]

    @property
    def n(self):
        return self.data.shape[1]


def as_features(X) -> FeatureMatrix:
    """Coerce a FeatureMatrix or a (dim, n) array into a FeatureMatrix."""
    if isinstance(X, FeatureMatrix):
        return X
    return FeatureMatrix(np.asarray(X, dtype=np.float64))


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix plus integer class labels in [0, num_classes)."""

    features: FeatureMatrix
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if labels.shape[0] != self.features.n:
            raise ValueError(
                f"got {labels.shape[0]} labels for {self.features.n} samples"
            )
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError(
                f"labels must lie in [0, {self.num_classes}), "
                f"got range [{labels.min()}, {labels.max()}]"
            )
        labels = np.ascontiguousarray(labels)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self):
        return self.features.n


@dataclass(frozen=True)
class Hyperparams:
    """Training hyperparameters.

    delta          landmark ratio: per-class mean of the sample weights
    gamma          weight of the locality-preserving graph terms
    mu             weight of the target variance / projection-norm terms
    d              subspace dimensionality
    T              number of outer iterations
    k_w, k_b       neighbors in the intrinsic / penalty graphs
    sigma_lp       label-propagation mixing coefficient, in (0, 1)
    lambda_couple  weight tying A to B in homogeneous mode; None picks
                   0.1 * trace(RHS) / (d_s + d_t) at assembly time
    eps_reg        ridge added to the constraint-side matrix; None picks
                   1e-6 * trace(RHS) / (d_s + d_t) at assembly time
    kernel         'none' (linear projections), 'linear' or 'rbf'
    bandwidth      rbf kernel width
    """

    delta: float = 0.5
    gamma: float = 0.01
    mu: float = 0.1
    d: int = 2
    T: int = 5
    k_w: int = 5
    k_b: int = 5
    sigma_lp: float = 0.9
    lambda_couple: float | None = None
    eps_reg: float | None = None
    kernel: str = "none"
    bandwidth: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        if not 0.0 < self.sigma_lp < 1.0:
            raise ValueError("sigma_lp must lie in (0, 1)")
        if self.gamma < 0 or self.mu < 0:
            raise ValueError("gamma and mu must be nonnegative")
        if self.lambda_couple is not None and self.lambda_couple < 0:
            raise ValueError("lambda_couple must be nonnegative")
        if self.eps_reg is not None and self.eps_reg <= 0:
            raise ValueError("eps_reg must be positive")
        if min(self.d, self.T, self.k_w, self.k_b) < 1:
            raise ValueError("d, T, k_w and k_b must be positive integers")
        if self.kernel not in VALID_KERNELS:
            raise ValueError(f"kernel must be one of {VALID_KERNELS}")
        if self.kernel == "rbf" and self.bandwidth <= 0:
            raise ValueError("rbf bandwidth must be positive")

    def replace(self, **kwargs) -> "Hyperparams":
        return dataclasses.replace(self, **kwargs)


@dataclass(frozen=True)
class TrainTrace:
    """Per-iteration diagnostics recorded during fitting."""

    objective: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mmd: np.ndarray = field(default_factory=lambda: np.zeros(0))
    label_changes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self):
        object.__setattr__(self, "objective", _freeze(np.atleast_1d(self.objective)).ravel())
        object.__setattr__(self, "mmd", _freeze(np.atleast_1d(self.mmd)).ravel())
        lc = np.ascontiguousarray(np.atleast_1d(self.label_changes), dtype=np.int64).ravel()
        lc.setflags(write=False)
        object.__setattr__(self, "label_changes", lc)
        if np.any(self.mmd < 0):
            raise ValueError("mmd trace entries must be nonnegative")

    def __len__(self):
        return self.objective.shape[0]


@dataclass(frozen=True)
class SubspaceModel:
    """Fitted projections A (d_s x d) and B (d_t x d) plus training state."""

    A: np.ndarray
    B: np.ndarray
    hyper: Hyperparams
    weights: "object" = None     # landmark.LandmarkWeights
    trace: TrainTrace = field(default_factory=TrainTrace)
    # fitted context needed to reproduce the training-time preprocessing
    normalize: str = "zscore"
    mode: str = "unsupervised"
    num_classes: int = 0
    homogeneous: bool = False
    embed_norm: bool = True
    pseudo_labels: np.ndarray | None = None

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        B = np.asarray(self.B, dtype=np.float64)
        if A.ndim != 2 or B.ndim != 2:
            raise ValueError("A and B must be 2-D")
        if A.shape[1] != B.shape[1]:
            raise ValueError("A and B must share the subspace dimension")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ValueError("projections contain non-finite entries")
        object.__setattr__(self, "A", _freeze(A))
        object.__setattr__(self, "B", _freeze(B))

    @property
    def d(self):
        return self.A.shape[1]


@dataclass(frozen=True)
class ProblemInstance:
    """A validated (source, unlabeled target, optional labeled target) triple."""

    src: LabeledDataset
    tgt_u: FeatureMatrix
    tgt_l: LabeledDataset | None
    homogeneous: bool
    num_classes: int


def zscore_normalize(X):
    """Standardize each feature row to zero mean, unit standard deviation.

    Rows with standard deviation below 1e-12 are set to all zeros instead of
    dividing by ~0. Returns (normalized, mean, std) so that the identical
    transform can be applied to held-out data via apply_zscore.
    """
    X = as_features(X)
    mean = X.data.mean(axis=1)
    std = X.data.std(axis=1)
    return apply_zscore(X, mean, std), mean, std


def apply_zscore(X, mean, std) -> FeatureMatrix:
    """Apply previously fitted per-row standardization statistics."""
    X = as_features(X)
    mean = np.asarray(mean, dtype=np.float64).ravel()
    std = np.asarray(std, dtype=np.float64).ravel()
    if mean.shape[0] != X.dim or std.shape[0] != X.dim:
        raise ValueError("normalization statistics do not match feature count")
    out = X.data - mean[:, None]
    keep = std >= 1e-12
    out[keep] /= std[keep, None]
    out[~keep] = 0.0
    return FeatureMatrix(out)


def unit_normalize(X) -> FeatureMatrix:
    """Scale each sample column to unit Euclidean norm; zero columns stay zero."""
    X = as_features(X)
    norms = np.linalg.norm(X.data, axis=0)
    scale = np.where(norms > 0, norms, 1.0)
    return FeatureMatrix(X.data / scale)


def validate_pair(src: LabeledDataset, tgt_u, tgt_l: LabeledDataset | None = None) -> ProblemInstance:
    """Validate a transfer problem and flag whether it is homogeneous.

    Heterogeneous dimensionalities (d_s != d_t) are allowed; class ids must
    agree between the source and the labeled target subset when one is given.
    Inputs are never mutated.
    """
    if not isinstance(src, LabeledDataset):
        raise TypeError("src must be a LabeledDataset")
    tgt_u = as_features(tgt_u)
    if tgt_l is not None:
        if not isinstance(tgt_l, LabeledDataset):
            raise TypeError("tgt_l must be a LabeledDataset or None")
        if tgt_l.features.dim != tgt_u.dim:
            raise ValueError(
                f"labeled target has {tgt_l.features.dim} features, "
                f"unlabeled target has {tgt_u.dim}"
            )
        if tgt_l.num_classes != src.num_classes:
            raise ValueError(
                f"class count mismatch: source has {src.num_classes}, "
                f"labeled target has {tgt_l.num_classes}"
            )
    homogeneous = src.features.dim == tgt_u.dim
    return ProblemInstance(
        src=src,
        tgt_u=tgt_u,
        tgt_l=tgt_l,
        homogeneous=homogeneous,
        num_classes=src.num_classes,
    )
