"""Sample-weight optimization: pick landmarks by solving a constrained QP.

With the projections held fixed, the transfer objective reduces to
1/2 z^T Bq z over z = (alpha; beta) with Bq = [[K_ss, -K_su], [-K_su^T, 0]],
subject to box bounds [0, 1] and per-class mean constraints mean(w) = delta
in each domain. The zero lower-right block makes Bq indefinite, so the
solver is projected gradient descent with exact per-group projection onto
{[0,1]^m, mean = delta}, followed by alternating exact coordinate passes
(a linear program in beta, a convex QP in alpha) that can only improve the
objective. Classes present in a single domain keep their weights pinned at
delta.
"""

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class LandmarkWeights:
    """Per-sample weights for both domains, entries in [0, 1]."""

    alpha: np.ndarray
    beta: np.ndarray
    delta: float

    def __post_init__(self):
        alpha = np.ascontiguousarray(self.alpha, dtype=np.float64).ravel()
        beta = np.ascontiguousarray(self.beta, dtype=np.float64).ravel()
        for name, w in (("alpha", alpha), ("beta", beta)):
            if w.size and (w.min() < -1e-12 or w.max() > 1.0 + 1e-12):
                raise ValueError(f"{name} entries must lie in [0, 1]")
        alpha.setflags(write=False)
        beta.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    def stacked(self):
        return np.concatenate([self.alpha, self.beta])


def uniform_weights(n_s: int, n_u: int, delta: float) -> LandmarkWeights:
    """The uniform feasible point alpha = beta = delta * 1."""
    return LandmarkWeights(np.full(n_s, delta), np.full(n_u, delta), delta)


@dataclass(frozen=True)
class QpInstance:
    """Quadratic program data plus the per-class index bookkeeping.

    V is the (n_s + n_u) x 2C class-indicator matrix and G the equality
    targets delta * n^c; `groups` lists (global indices, free) per class and
    domain, where pinned groups (class in one domain only) are not free.
    """

    Bq: np.ndarray
    V: np.ndarray
    G: np.ndarray
    delta: float
    n_s: int
    n_u: int
    groups: tuple
    box: tuple = (0.0, 1.0)

    @property
    def K_ss(self):
        return self.Bq[: self.n_s, : self.n_s]

    @property
    def K_su(self):
        return -self.Bq[: self.n_s, self.n_s:]

    def _projection_meta(self, source_only):
        free, pinned = [], []
        for idx, both in self.groups:
            if source_only and idx[0] >= self.n_s:
                continue
            (free if both else pinned).append(idx)
        if free:
            act = np.concatenate(free)
            gid = np.concatenate([np.full(idx.size, g) for g, idx in enumerate(free)])
            sizes = np.array([idx.size for idx in free], dtype=np.float64)
        else:
            act = np.zeros(0, dtype=np.int64)
            gid = np.zeros(0, dtype=np.int64)
            sizes = np.zeros(0)
        pin = np.concatenate(pinned) if pinned else np.zeros(0, dtype=np.int64)
        return act, gid, sizes, pin

    @cached_property
    def _meta_all(self):
        return self._projection_meta(False)

    @cached_property
    def _meta_source(self):
        return self._projection_meta(True)


def build_qp(Z_s, Z_u, labels_s, pseudo_labels_u, delta, num_classes=None) -> QpInstance:
    """Coefficient matrices of the weight subproblem from embedded data.

    K_ss[i, j] multiplies alpha_i * alpha_j and aggregates the marginal and
    (same-class) conditional contributions; K_su likewise for
    alpha_i * beta_j. Gradients of 1/2 z^T Bq z match the alpha-gradient of
    the weighted MMD exactly.
    """
    Z_s = np.asarray(Z_s, dtype=np.float64)
    Z_u = np.asarray(Z_u, dtype=np.float64)
    labels_s = np.asarray(labels_s, dtype=np.int64).ravel()
    labels_u = np.asarray(pseudo_labels_u, dtype=np.int64).ravel()
    if delta <= 0:
        raise ValueError("delta must be positive")
    n_s, n_u = Z_s.shape[1], Z_u.shape[1]
    if labels_s.size != n_s or labels_u.size != n_u:
        raise ValueError("label vectors must match the sample counts")
    if num_classes is None:
        num_classes = int(max(labels_s.max(), labels_u.max())) + 1

    Gs = Z_s.T @ Z_s
    Gsu = Z_s.T @ Z_u
    K_ss = 2.0 * Gs / (delta**2 * n_s**2)
    K_su = 2.0 * Gsu / (delta**2 * n_s * n_u)

    groups = []
    for c in range(num_classes):
        si = np.flatnonzero(labels_s == c)
        ui = np.flatnonzero(labels_u == c)
        if si.size == 0 and ui.size == 0:
            raise ValueError(f"class {c} is absent from both domains")
        both = si.size > 0 and ui.size > 0
        if both:
            K_ss[np.ix_(si, si)] += 2.0 * Gs[np.ix_(si, si)] / (delta**2 * si.size**2)
            K_ss[si, si] += 2.0 * Gs[si, si] / (delta**2 * si.size)
            K_su[np.ix_(si, ui)] += 4.0 * Gsu[np.ix_(si, ui)] / (delta**2 * si.size * ui.size)
        if si.size:
            groups.append((si, both))
        if ui.size:
            groups.append((n_s + ui, both))

    K_ss = (K_ss + K_ss.T) / 2.0
    Bq = np.zeros((n_s + n_u, n_s + n_u))
    Bq[:n_s, :n_s] = K_ss
    Bq[:n_s, n_s:] = -K_su
    Bq[n_s:, :n_s] = -K_su.T

    V = np.zeros((n_s + n_u, 2 * num_classes))
    V[np.arange(n_s), labels_s] = 1.0
    V[n_s + np.arange(n_u), num_classes + labels_u] = 1.0
    G = np.zeros(2 * num_classes)
    for c in range(num_classes):
        G[c] = delta * np.count_nonzero(labels_s == c)
        G[num_classes + c] = delta * np.count_nonzero(labels_u == c)
    return QpInstance(
        Bq=Bq, V=V, G=G, delta=delta, n_s=n_s, n_u=n_u, groups=tuple(groups)
    )


def project_box_mean(x, delta):
    """Euclidean projection of x onto {v in [0,1]^m : mean(v) = delta}.

    Shifts every coordinate by a common offset found by bisection, then
    clips; a final correction on the interior coordinates makes the mean
    exact to machine precision.
    """
    x = np.asarray(x, dtype=np.float64)
    m = x.size
    if delta <= 0.0:
        return np.zeros(m)
    if delta >= 1.0:
        return np.ones(m)
    target = delta * m
    lo = -float(x.max()) - 1.0
    hi = 1.0 - float(x.min()) + 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if np.clip(x + mid, 0.0, 1.0).sum() < target:
            lo = mid
        else:
            hi = mid
    v = np.clip(x + 0.5 * (lo + hi), 0.0, 1.0)
    free = (v > 0.0) & (v < 1.0)
    if free.any():
        v[free] += (target - v.sum()) / free.sum()
        v = np.clip(v, 0.0, 1.0)
    return v


def _project(z, qp: QpInstance, source_only: bool = False):
    """Project onto the feasible polytope, every group in one pass.

    Computes the dual shift tau per group exactly: sum(clip(x + tau, 0, 1))
    is piecewise linear in tau with breakpoints at -x_i (a coordinate
    starts rising) and 1 - x_i (it saturates), so one segmented sorted
    sweep locates the segment where the sum crosses delta * m. Same result
    as per-group bisection, without the iteration loop.
    """
    act, gid, sizes, pinned = qp._meta_source if source_only else qp._meta_all
    out = z.copy()
    if pinned.size:
        out[pinned] = qp.delta
    if act.size == 0:
        return out
    delta = qp.delta
    if delta <= 0.0:
        out[act] = 0.0
        return out
    if delta >= 1.0:
        out[act] = 1.0
        return out
    n_groups = sizes.size
    targets = delta * sizes
    x = z[act]

    bp = np.concatenate([-x, 1.0 - x])
    slope_delta = np.concatenate([np.ones(x.size), -np.ones(x.size)])
    ev_gid = np.concatenate([gid, gid])
    order = np.lexsort((bp, ev_gid))
    bp, slope_delta, ev_gid = bp[order], slope_delta[order], ev_gid[order]

    counts = (2 * sizes).astype(np.int64)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    # within-group cumulative slope right after each event
    cums = np.cumsum(slope_delta)
    slope_after = cums - np.repeat(cums[starts] - slope_delta[starts], counts)
    # within-group value of sum(clip) at each breakpoint
    contrib = np.empty_like(bp)
    contrib[1:] = slope_after[:-1] * (bp[1:] - bp[:-1])
    contrib[starts] = 0.0
    v_at = np.cumsum(contrib)
    v_at -= np.repeat(v_at[starts], counts)
    # the sum is nondecreasing in tau, so the crossing segment starts at the
    # last event whose value does not exceed the target
    below = np.where(v_at <= np.repeat(targets, counts), np.arange(bp.size), -1)
    k = np.maximum.reduceat(below, starts)
    slope_k = slope_after[k]
    tau = bp[k] + np.where(slope_k > 0, targets - v_at[k], 0.0) / np.where(
        slope_k > 0, slope_k, 1.0
    )

    v = np.clip(x + tau[gid], 0.0, 1.0)
    interior = (v > 0.0) & (v < 1.0)
    sums = np.bincount(gid, weights=v, minlength=n_groups)
    n_int = np.bincount(gid[interior], minlength=n_groups)
    corr = np.where(n_int > 0, (targets - sums) / np.maximum(n_int, 1), 0.0)
    v[interior] += corr[gid[interior]]
    out[act] = np.clip(v, 0.0, 1.0)
    return out


def project_feasible(qp: QpInstance, weights: LandmarkWeights) -> LandmarkWeights:
    """Project weights onto the instance's feasible polytope.

    Used to warm-start a solve when the class grouping changed (pseudo
    labels move between iterations, so a previously feasible point may
    violate the new per-class means).
    """
    z = _project(weights.stacked(), qp)
    return LandmarkWeights(z[: qp.n_s], z[qp.n_s:], qp.delta)


def _objective(Bq, z):
    return 0.5 * float(z @ (Bq @ z))


def _spectral_norm_estimate(Bq):
    n = Bq.shape[0]
    v = np.ones(n) / np.sqrt(n)
    for _ in range(30):
        w = Bq @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
    return float(np.linalg.norm(Bq @ v))


def _greedy_linear_min(coef, delta, m):
    """Minimize coef . v over {v in [0,1]^m : sum v = delta * m}."""
    budget = delta * m
    v = np.zeros(m)
    order = np.argsort(coef, kind="stable")
    for i in order:
        take = min(1.0, budget)
        v[i] = take
        budget -= take
        if budget <= 0:
            break
    return v


def _alternating_polish(qp: QpInstance, z, trace, max_rounds=6, tol=1e-10):
    """Exact coordinate passes: linear in beta, convex quadratic in alpha."""
    Bq = qp.Bq
    n_s = qp.n_s
    K_ss, K_su = qp.K_ss, qp.K_su
    L = _spectral_norm_estimate(K_ss)
    f = _objective(Bq, z)
    for _ in range(max_rounds):
        improved = False
        # beta enters linearly: minimize (-K_su^T alpha) . beta per group
        coef = -K_su.T @ z[:n_s]
        cand = z.copy()
        for idx, both in qp.groups:
            if not both or idx[0] < n_s:
                continue
            local = idx - n_s
            cand[idx] = _greedy_linear_min(coef[local], qp.delta, idx.size)
        f_cand = _objective(Bq, cand)
        if f_cand < f - tol * max(abs(f), 1e-30):
            z, f = cand, f_cand
            trace.append(f)
            improved = True
        # alpha subproblem is convex: run projected gradient to tolerance
        if L > 0.0:
            lin = -K_su @ z[n_s:]
            a = z[:n_s].copy()
            step = 1.0 / L
            f_a = 0.5 * a @ (K_ss @ a) + lin @ a
            for _ in range(100):
                grad = K_ss @ a + lin
                full = z.copy()
                full[:n_s] = a - step * grad
                a_new = _project(full, qp, source_only=True)[:n_s]
                f_new = 0.5 * a_new @ (K_ss @ a_new) + lin @ a_new
                if f_new > f_a - 1e-12 * max(abs(f_a), 1e-30):
                    a = a_new if f_new < f_a else a
                    break
                a, f_a = a_new, f_new
            cand = z.copy()
            cand[:n_s] = a
            f_cand = _objective(Bq, cand)
            if f_cand < f - tol * max(abs(f), 1e-30):
                z, f = cand, f_cand
                trace.append(f)
                improved = True
        if not improved:
            break
    return z, f


def solve_qp(qp: QpInstance, init: LandmarkWeights | None = None,
             max_iter=500, tol=1e-9, full_output=False):
    """Minimize 1/2 z^T Bq z over the feasible weight polytope.

    Projected gradient descent with backtracking from a 1/||Bq||_2 step,
    starting at `init` (default: the uniform feasible point), followed by
    alternating exact passes. The returned point is always feasible and its
    objective never exceeds the initial one. Deterministic given init.
    """
    if init is None:
        init = uniform_weights(qp.n_s, qp.n_u, qp.delta)
    z = init.stacked()
    if z.size != qp.Bq.shape[0]:
        raise ValueError("init size does not match the QP")
    feas = _project(z, qp)
    if np.max(np.abs(feas - z)) > 1e-6:
        raise ValueError("init is not feasible")
    z = feas

    if qp.delta >= 1.0 or qp.delta <= 0.0:
        # the box and mean constraints pin every weight
        return _finalize(qp, z, [_objective(qp.Bq, z)], True, 0, full_output)

    Bq = qp.Bq
    L = _spectral_norm_estimate(Bq)
    f = _objective(Bq, z)
    trace = [f]
    if L <= 0.0:
        return _finalize(qp, z, trace, True, 0, full_output)

    # projected gradient in bursts, with exact coordinate passes between
    # bursts: the beta subproblem is a per-group linear program and the
    # alpha subproblem is convex, so the passes cut through the shallow
    # valley the plain gradient crawls along.
    t0 = 1.0 / L
    iters = 0
    converged = False
    while iters < max_iter:
        burst_end = min(iters + 100, max_iter)
        stalled = False
        while iters < burst_end:
            iters += 1
            g = Bq @ z
            t = t0
            accepted = False
            for _ in range(40):
                z_new = _project(z - t * g, qp)
                step_vec = z_new - z
                f_new = _objective(Bq, z_new)
                slack = 1e-12 * max(abs(f), 1.0e-30)
                if f_new <= f + g @ step_vec + step_vec @ step_vec / (2.0 * t) + slack:
                    accepted = True
                    break
                t /= 2.0
            if not accepted:
                stalled = True
                break
            rel_drop = (f - f_new) / max(abs(f), 1e-30)
            z, f = z_new, f_new
            trace.append(f)
            if rel_drop < tol:
                stalled = True
                break
        f_before = f
        z, f = _alternating_polish(qp, z, trace)
        if stalled and f >= f_before - tol * max(abs(f_before), 1e-30):
            converged = True
            break
    if not converged:
        warnings.warn("weight solver hit the iteration limit; returning best feasible point")
    return _finalize(qp, z, trace, converged, iters, full_output)


def _finalize(qp, z, trace, converged, iters, full_output=False):
    weights = LandmarkWeights(
        alpha=np.clip(z[: qp.n_s], 0.0, 1.0),
        beta=np.clip(z[qp.n_s:], 0.0, 1.0),
        delta=qp.delta,
    )
    if not full_output:
        return weights
    info = {
        "objective_trace": np.asarray(trace),
        "converged": converged,
        "iterations": iters,
    }
    return weights, info


def check_feasible(weights: LandmarkWeights, labels_s, labels_u, atol=1e-8) -> bool:
    """True when every per-class mean matches delta for classes in both domains."""
    labels_s = np.asarray(labels_s).ravel()
    labels_u = np.asarray(labels_u).ravel()
    if weights.alpha.size and (weights.alpha.min() < -atol or weights.alpha.max() > 1 + atol):
        return False
    if weights.beta.size and (weights.beta.min() < -atol or weights.beta.max() > 1 + atol):
        return False
    for c in np.intersect1d(np.unique(labels_s), np.unique(labels_u)):
        if abs(weights.alpha[labels_s == c].mean() - weights.delta) > atol:
            return False
        if abs(weights.beta[labels_u == c].mean() - weights.delta) > atol:
            return False
    return True
