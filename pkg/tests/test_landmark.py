import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from lpjt.landmark import (
    LandmarkWeights,
    QpInstance,
    build_qp,
    check_feasible,
    project_box_mean,
    project_feasible,
    solve_qp,
    uniform_weights,
)
from lpjt.mmd import mmd_value


def random_qp(seed, n_s=8, n_u=6, C=2, d=2, delta=0.5):
    rng = np.random.default_rng(seed)
    Z_s = rng.normal(size=(d, n_s))
    Z_u = rng.normal(size=(d, n_u))
    ys = rng.integers(0, C, n_s); ys[:C] = np.arange(C)
    yu = rng.integers(0, C, n_u); yu[:C] = np.arange(C)
    return build_qp(Z_s, Z_u, ys, yu, delta, C), Z_s, Z_u, ys, yu


class TestProjectBoxMean:
    def test_feasible_point_fixed(self):
        x = np.array([0.2, 0.8, 0.5])
        assert_allclose(project_box_mean(x, 0.5), x, atol=1e-12)

    def test_mean_exact(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.normal(0.5, 2.0, size=rng.integers(1, 9))
            v = project_box_mean(x, 0.3)
            assert abs(v.mean() - 0.3) <= 1e-10
            assert v.min() >= 0.0 and v.max() <= 1.0

    def test_extreme_deltas(self):
        x = np.array([0.4, 0.6])
        assert_allclose(project_box_mean(x, 0.0), [0.0, 0.0])
        assert_allclose(project_box_mean(x, 1.0), [1.0, 1.0])


class TestBuildQp:
    def test_single_sample_single_class(self):
        qp, *_ = random_qp(0, n_s=1, n_u=1, C=1)
        assert_allclose(qp.V, np.eye(2))
        assert_allclose(qp.G, [0.5, 0.5])

    def test_orthogonal_embeddings_zero_cross_block(self):
        Z_s = np.array([[1.0, 1.0], [0.0, 0.0]])
        Z_u = np.array([[0.0, 0.0], [1.0, 1.0]])
        qp = build_qp(Z_s, Z_u, [0, 1], [0, 1], 0.5, 2)
        assert np.all(qp.Bq[:2, 2:] == 0.0)

    def test_lower_right_block_zero(self):
        qp, *_ = random_qp(1)
        assert np.all(qp.Bq[qp.n_s:, qp.n_s:] == 0.0)

    def test_indicator_rows_one_hot(self):
        qp, *_ = random_qp(2)
        assert np.all(np.isin(qp.V, (0.0, 1.0)))
        assert_allclose(qp.V.sum(axis=1), 1.0)

    def test_class_absent_everywhere_rejected(self):
        rng = np.random.default_rng(3)
        with pytest.raises(ValueError, match="absent"):
            build_qp(rng.normal(size=(2, 3)), rng.normal(size=(2, 3)),
                     [0, 0, 0], [0, 0, 0], 0.5, num_classes=2)

    @pytest.mark.parametrize("seed", range(5))
    def test_alpha_gradient_matches_finite_differences(self, seed):
        qp, Z_s, Z_u, ys, yu = random_qp(seed, n_s=6, n_u=5)
        rng = np.random.default_rng(seed + 10)
        delta = 0.5
        alpha = rng.uniform(0.1, 0.9, 6)
        beta = rng.uniform(0.1, 0.9, 5)
        d = Z_s.shape[0]
        A = np.eye(d)   # embeddings are already projected
        B = np.eye(d)

        def total(a):
            e_mg, e_cd = mmd_value(Z_s, Z_u, A, B, a, beta, ys, yu, delta)
            return e_mg + e_cd

        grad = qp.K_ss @ alpha - qp.K_su @ beta
        h = 1e-6
        for i in range(6):
            e = np.zeros(6); e[i] = h
            fd = (total(alpha + e) - total(alpha - e)) / (2 * h)
            assert abs(fd - grad[i]) <= 1e-6 * max(1.0, abs(fd))


class TestSolveQp:
    def test_one_sample_per_class_fully_determined(self):
        qp, *_ = random_qp(4, n_s=2, n_u=2, C=2)
        w = solve_qp(qp)
        assert_allclose(w.alpha, [0.5, 0.5], atol=1e-8)
        assert_allclose(w.beta, [0.5, 0.5], atol=1e-8)

    def test_identity_quadratic_symmetric_optimum(self):
        # 1/2 (a1^2 + a2^2) s.t. mean = 0.5: optimum at (0.5, 0.5)
        Bq = np.zeros((3, 3))
        Bq[:2, :2] = np.eye(2)
        qp = QpInstance(
            Bq=Bq,
            V=np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
            G=np.array([1.0, 0.5]),
            delta=0.5,
            n_s=2,
            n_u=1,
            groups=((np.array([0, 1]), True), (np.array([2]), True)),
        )
        w = solve_qp(qp)
        assert_allclose(w.alpha, [0.5, 0.5], atol=1e-7)

    def test_delta_one_returns_all_ones(self):
        qp, _, _, ys, yu = random_qp(5, delta=1.0)
        w = solve_qp(qp)
        assert np.all(w.alpha == 1.0) and np.all(w.beta == 1.0)

    @pytest.mark.parametrize("seed", range(6))
    def test_always_feasible(self, seed):
        qp, _, _, ys, yu = random_qp(seed, n_s=10, n_u=9, C=3)
        w = solve_qp(qp)
        assert check_feasible(w, ys, yu)

    def test_objective_never_worse_than_init(self):
        qp, *_ = random_qp(7)
        init = uniform_weights(qp.n_s, qp.n_u, qp.delta)
        w, info = solve_qp(qp, init, full_output=True)
        f0 = 0.5 * init.stacked() @ qp.Bq @ init.stacked()
        f1 = 0.5 * w.stacked() @ qp.Bq @ w.stacked()
        assert f1 <= f0 + 1e-10

    def test_trace_monotone_nonincreasing(self):
        qp, *_ = random_qp(8, n_s=12, n_u=10, C=3)
        _, info = solve_qp(qp, full_output=True)
        tr = info["objective_trace"]
        assert np.all(np.diff(tr) <= 1e-12)

    def test_deterministic(self):
        qp, *_ = random_qp(9)
        w1 = solve_qp(qp)
        w2 = solve_qp(qp)
        assert np.array_equal(w1.alpha, w2.alpha)
        assert np.array_equal(w1.beta, w2.beta)

    @pytest.mark.parametrize("seed", range(4))
    def test_joint_rescaling_keeps_argmin(self, seed):
        _, Z_s, Z_u, ys, yu = random_qp(seed + 20)
        qp1 = build_qp(Z_s, Z_u, ys, yu, 0.5, 2)
        qp2 = build_qp(3.0 * Z_s, 3.0 * Z_u, ys, yu, 0.5, 2)
        w1, i1 = solve_qp(qp1, full_output=True)
        w2, i2 = solve_qp(qp2, full_output=True)
        assert np.max(np.abs(w1.alpha - w2.alpha)) <= 1e-6
        assert np.max(np.abs(w1.beta - w2.beta)) <= 1e-6
        assert_allclose(i2["objective_trace"][-1], 9.0 * i1["objective_trace"][-1],
                        rtol=1e-6, atol=1e-12)

    def test_infeasible_init_rejected(self):
        qp, *_ = random_qp(11)
        bad = LandmarkWeights(np.ones(qp.n_s), np.zeros(qp.n_u), qp.delta)
        with pytest.raises(ValueError, match="feasible"):
            solve_qp(qp, bad)

    def test_pinned_class_kept_at_delta(self):
        rng = np.random.default_rng(12)
        # class 1 exists only in the source
        Z_s = rng.normal(size=(2, 4))
        Z_u = rng.normal(size=(2, 3))
        qp = build_qp(Z_s, Z_u, [0, 0, 1, 1], [0, 0, 0], 0.5, 2)
        w = solve_qp(qp)
        assert_allclose(w.alpha[2:], 0.5)


class TestGridSearchOracle:
    def lattice(self, m, delta, step=0.05):
        """All step-quantized points of [0,1]^m with mean delta."""
        ticks = np.round(np.arange(0.0, 1.0 + step / 2, step), 10)
        total = round(delta * m / step)
        pts = []
        for combo in itertools.product(range(len(ticks)), repeat=m):
            if sum(combo) == total:
                pts.append([ticks[i] for i in combo])
        return np.asarray(pts)

    def _stack_grids(self, grids):
        """Cartesian product of per-group lattices, one row per combination."""
        out = grids[0]
        for g in grids[1:]:
            out = np.hstack([
                np.repeat(out, g.shape[0], axis=0),
                np.tile(g, (out.shape[0], 1)),
            ])
        return out

    @pytest.mark.parametrize("seed", range(6))
    def test_solver_matches_lattice_optimum(self, seed):
        rng = np.random.default_rng(seed)
        sizes_s = [int(rng.integers(1, 4)), int(rng.integers(1, 3))]
        sizes_u = [int(rng.integers(1, 3)), int(rng.integers(1, 3))]
        ys = np.repeat([0, 1], sizes_s)
        yu = np.repeat([0, 1], sizes_u)
        Z_s = rng.normal(size=(2, ys.size))
        Z_u = rng.normal(size=(2, yu.size))
        delta = 0.5
        qp = build_qp(Z_s, Z_u, ys, yu, delta, 2)
        w = solve_qp(qp)
        z = w.stacked()
        solver_obj = 0.5 * z @ qp.Bq @ z

        A_grid = self._stack_grids([self.lattice(m, delta) for m in sizes_s])
        B_grid = self._stack_grids([self.lattice(m, delta) for m in sizes_u])
        quad = 0.5 * np.einsum("ij,jk,ik->i", A_grid, qp.K_ss, A_grid)
        cross = A_grid @ qp.K_su @ B_grid.T
        best = float((quad[:, None] - cross).min())
        assert solver_obj <= best + 1e-4


class TestProjectFeasible:
    def test_projected_point_is_feasible(self):
        qp, _, _, ys, yu = random_qp(13)
        rng = np.random.default_rng(14)
        rough = LandmarkWeights(
            rng.uniform(0, 1, qp.n_s), rng.uniform(0, 1, qp.n_u), qp.delta
        )
        w = project_feasible(qp, rough)
        assert check_feasible(w, ys, yu)

    @pytest.mark.parametrize("seed", range(12))
    def test_sweep_projection_matches_bisection_reference(self, seed):
        rng = np.random.default_rng(seed)
        C = int(rng.integers(1, 4))
        n_s = int(rng.integers(C, 15))
        n_u = int(rng.integers(C, 15))
        ys = rng.integers(0, C, n_s); ys[:C] = np.arange(C)
        yu = rng.integers(0, C, n_u); yu[:C] = np.arange(C)
        delta = float(rng.choice([0.2, 0.5, 0.8]))
        qp = build_qp(rng.normal(size=(2, n_s)), rng.normal(size=(2, n_u)),
                      ys, yu, delta, C)
        rough = LandmarkWeights(
            np.clip(rng.normal(0.5, 1.5, n_s), 0, 1),
            np.clip(rng.normal(0.5, 1.5, n_u), 0, 1),
            delta,
        )
        fast = project_feasible(qp, rough).stacked()
        slow = rough.stacked().copy()
        for idx, both in qp.groups:
            if both:
                slow[idx] = project_box_mean(slow[idx], delta)
            else:
                slow[idx] = delta
        assert np.max(np.abs(fast - slow)) <= 1e-9
