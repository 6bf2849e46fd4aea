import itertools

import numpy as np
import pytest

from dualray.errors import CapacityError, DomainError
from dualray.model import BoxSet, LeastSquaresObjective, QuadraticObjective
from dualray.subsolvers import (
    BatchedQuadraticSolver,
    TiltedSubproblem,
    agent_minimize,
    minibatch_view,
    minimize_box_qp,
    minimize_concave_box,
)

from oracles import box_qp_kkt_oracle, box_qp_scipy_oracle


def _random_spd(rng, n, lo=0.5, hi=20.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = rng.uniform(lo, hi, size=n)
    P = (Q * eig) @ Q.T
    return 0.5 * (P + P.T)


class TestBoxQP:
    def test_unconstrained_optimum_inside(self):
        y = minimize_box_qp(np.eye(2), np.zeros(2), BoxSet(1.0, 2))
        assert np.array_equal(y, [0.0, 0.0])

    def test_scalar_clip(self):
        # gradient 2Py + c: optimum 1.5 clips to the boundary
        y = minimize_box_qp(np.array([[1.0]]), np.array([-3.0]), BoxSet(1.0, 1))
        assert np.array_equal(y, [1.0])

    def test_matches_kkt_oracle_n4(self):
        rng = np.random.default_rng(11)
        box = BoxSet(2.0, 4)
        for _ in range(25):
            P = _random_spd(rng, 4)
            c = 5.0 * rng.standard_normal(4)
            y = minimize_box_qp(P, c, box, tol=1e-12)
            y_ref = box_qp_kkt_oracle(P, c, 2.0)
            assert np.max(np.abs(y - y_ref)) <= 1e-6

    def test_matches_oracle_small_dims(self):
        rng = np.random.default_rng(12)
        for n in (1, 2, 3):
            box = BoxSet(1.0, n)
            for _ in range(25):
                P = _random_spd(rng, n)
                c = 3.0 * rng.standard_normal(n)
                y = minimize_box_qp(P, c, box)
                y_ref = box_qp_kkt_oracle(P, c, 1.0)
                assert np.max(np.abs(y - y_ref)) <= 1e-8

    def test_variational_inequality(self):
        rng = np.random.default_rng(13)
        tol = 1e-10
        P = _random_spd(rng, 5)
        c = rng.standard_normal(5)
        box = BoxSet(1.5, 5)
        y_star = minimize_box_qp(P, c, box, tol=tol)
        g = 2.0 * P @ y_star + c
        for _ in range(100):
            y = rng.uniform(-1.5, 1.5, size=5)
            lhs = float(g @ (y - y_star))
            assert lhs >= -10.0 * tol * np.linalg.norm(y - y_star)

    def test_unique_minimizer_from_different_starts(self):
        rng = np.random.default_rng(14)
        tol = 1e-10
        P = _random_spd(rng, 6)
        c = rng.standard_normal(6)
        box = BoxSet(1.0, 6)
        y1 = minimize_box_qp(P, c, box, tol=tol, warm=np.full(6, -1.0))
        y2 = minimize_box_qp(P, c, box, tol=tol, warm=np.full(6, 1.0))
        assert np.max(np.abs(y1 - y2)) <= 10.0 * tol

    def test_diagonal_closed_form(self):
        P = np.diag([1.0, 4.0])
        c = np.array([-3.0, 1.0])
        y = minimize_box_qp(P, c, BoxSet(1.0, 2))
        assert np.array_equal(y, [1.0, -0.125])

    def test_degenerate_rejected(self):
        with pytest.raises(DomainError):
            minimize_box_qp(np.zeros((2, 2)), np.zeros(2), BoxSet(1.0, 2))

    def test_psd_singular_with_linear_term(self):
        # flat direction resolved by the linear term, solved to tolerance
        P = np.diag([1.0, 0.0])
        c = np.array([0.0, 2.0])
        y = minimize_box_qp(P, c, BoxSet(1.0, 2))
        assert np.allclose(y, [0.0, -1.0])

    def test_budget_exhaustion_carries_residual(self):
        rng = np.random.default_rng(99)
        P = _random_spd(rng, 6, lo=0.01, hi=100.0)
        c = rng.standard_normal(6)
        from dualray.errors import SolverError
        with pytest.raises(SolverError) as exc_info:
            minimize_box_qp(P, c, BoxSet(1.0, 6), tol=1e-14, max_iter=3)
        assert exc_info.value.residual is not None
        assert exc_info.value.residual > 0.0


class TestConcaveBox:
    def test_symmetric_tie_lexicographic(self):
        y = minimize_concave_box(-np.eye(2), np.zeros(2), BoxSet(1.0, 2))
        assert np.array_equal(y, [-1.0, -1.0])

    def test_tie_on_second_coordinate(self):
        y = minimize_concave_box(-np.eye(2), np.array([4.0, 0.0]), BoxSet(1.0, 2))
        assert np.array_equal(y, [-1.0, -1.0])

    def test_diagonal_matches_enumeration_n12(self):
        rng = np.random.default_rng(15)
        n = 12
        p = -rng.uniform(0.1, 3.0, size=n)
        c = rng.standard_normal(n)
        box = BoxSet(1.0, n)
        got = minimize_concave_box(np.diag(p), c, box)
        best_val, best_v = np.inf, None
        for bits in itertools.product((-1.0, 1.0), repeat=n):
            v = np.array(bits)
            val = float(v @ np.diag(p) @ v + c @ v)
            if val < best_val:
                best_val, best_v = val, v
        assert np.array_equal(got, best_v)

    def test_output_always_vertex(self):
        rng = np.random.default_rng(16)
        for n in (2, 3, 5):
            M = rng.standard_normal((n, n))
            P = -(M @ M.T + 0.1 * np.eye(n))
            c = rng.standard_normal(n)
            y = minimize_concave_box(P, c, BoxSet(1.5, n))
            assert np.all(np.abs(y) == 1.5)

    def test_capacity_error(self):
        n = 21
        M = np.eye(n)
        M[0, 1] = M[1, 0] = 0.1
        with pytest.raises(CapacityError):
            minimize_concave_box(-M, np.zeros(n), BoxSet(1.0, n))

    def test_rejects_non_nsd(self):
        with pytest.raises(DomainError):
            minimize_concave_box(np.eye(2), np.zeros(2), BoxSet(1.0, 2))


class TestAgentMinimize:
    def test_quadratic_centered(self):
        obj = QuadraticObjective(P=[[1.0]], q=[0.0])
        sub = TiltedSubproblem(obj, np.array([0.0]), BoxSet(1.0, 1))
        assert np.array_equal(agent_minimize(sub), [0.0])

    def test_large_negative_tilt_pushes_to_boundary(self):
        obj = QuadraticObjective(P=[[1.0]], q=[0.0])
        sub = TiltedSubproblem(obj, np.array([-10.0]), BoxSet(1.0, 1))
        assert np.array_equal(agent_minimize(sub), [1.0])

    def test_least_squares_interior_matches_normal_equations(self):
        rng = np.random.default_rng(17)
        X = np.hstack([np.ones((40, 1)), rng.standard_normal((40, 2))])
        w_true = np.array([0.1, -0.2, 0.15])
        t = X @ w_true + 0.01 * rng.standard_normal(40)
        obj = LeastSquaresObjective(X=X, t=t)
        sub = TiltedSubproblem(obj, np.zeros(3), BoxSet(1.0, 3))
        y = agent_minimize(sub, tol=1e-12)
        y_ref = np.linalg.lstsq(X, t, rcond=None)[0]
        assert np.max(np.abs(y_ref)) < 1.0  # interior, clip never binds
        assert np.max(np.abs(y - y_ref)) <= 1e-8

    def test_concave_dispatch(self):
        obj = QuadraticObjective(P=-np.eye(2), q=[0.0, 0.0], tag="concave")
        sub = TiltedSubproblem(obj, np.array([3.0, -3.0]), BoxSet(1.0, 2))
        assert np.array_equal(agent_minimize(sub), [-1.0, 1.0])

    def test_minimized_value_bounds_feasible_points(self):
        rng = np.random.default_rng(18)
        obj = QuadraticObjective(P=_random_spd(rng, 3), q=rng.standard_normal(3),
                                 scale=0.3)
        sub = TiltedSubproblem(obj, rng.standard_normal(3), BoxSet(1.0, 3))
        y_star = agent_minimize(sub, tol=1e-12)
        v_star = sub.value(y_star)
        for _ in range(50):
            y = rng.uniform(-1.0, 1.0, size=3)
            assert v_star <= sub.value(y) + 1e-9


class TestMinibatchView:
    def _obj(self, rng, N=200, n=3):
        X = np.hstack([np.ones((N, 1)), rng.standard_normal((N, n - 1))])
        t = rng.standard_normal(N)
        return LeastSquaresObjective(X=X, t=t)

    def test_full_batch_identity(self):
        rng = np.random.default_rng(19)
        obj = self._obj(rng)
        view = minibatch_view(obj, np.arange(200))
        for _ in range(5):
            y = rng.standard_normal(3)
            assert abs(view.value(y) - obj.value(y)) <= 1e-12

    def test_singleton(self):
        rng = np.random.default_rng(20)
        obj = self._obj(rng)
        j = 7
        view = minibatch_view(obj, [j])
        y = rng.standard_normal(3)
        expect = (obj.X[j] @ y - obj.t[j]) ** 2
        assert view.value(y) == pytest.approx(expect, rel=1e-12)

    def test_sampled_batch_matches_recomputation(self):
        rng = np.random.default_rng(21)
        obj = self._obj(rng)
        idx = np.sort(rng.choice(200, size=40, replace=False))
        view = minibatch_view(obj, idx)
        y = rng.standard_normal(3)
        direct = np.mean([(obj.X[j] @ y - obj.t[j]) ** 2 for j in idx])
        assert view.value(y) == pytest.approx(direct, rel=1e-12)

    def test_rejects_empty_and_out_of_range(self):
        rng = np.random.default_rng(22)
        obj = self._obj(rng)
        with pytest.raises(DomainError):
            minibatch_view(obj, [])
        with pytest.raises(DomainError):
            minibatch_view(obj, [200])
        with pytest.raises(DomainError):
            minibatch_view(obj, [-1])


class TestBatchedSolver:
    @pytest.mark.parametrize("n", [1, 2, 3, 6, 10])
    def test_matches_per_agent_solves(self, n):
        rng = np.random.default_rng(23 + n)
        box = BoxSet(1.0, n)
        agents = tuple(
            QuadraticObjective(P=_random_spd(rng, n), q=rng.standard_normal(n),
                               scale=0.25)
            for _ in range(4))
        solver = BatchedQuadraticSolver(agents, box, tol=1e-12)
        tilts = rng.standard_normal((4, n))
        Y = solver.solve(tilts)
        for i, agent in enumerate(agents):
            y_ref = box_qp_scipy_oracle(agent.scale * agent.P,
                                        agent.scale * agent.q + tilts[i], 1.0)
            assert np.max(np.abs(Y[i] - y_ref)) <= 1e-6

    def test_dual_terms_match_direct_values(self):
        rng = np.random.default_rng(31)
        box = BoxSet(1.0, 2)
        agents = tuple(
            QuadraticObjective(P=_random_spd(rng, 2), q=rng.standard_normal(2),
                               scale=0.5, offset=float(i))
            for i in range(3))
        solver = BatchedQuadraticSolver(agents, box)
        tilts = rng.standard_normal((3, 2))
        Y = solver.solve(tilts)
        terms = solver.dual_terms(Y, tilts)
        for i, agent in enumerate(agents):
            direct = agent.value(Y[i]) + tilts[i] @ Y[i]
            assert terms[i] == pytest.approx(direct, abs=1e-12)

    def test_diagonal_path(self):
        box = BoxSet(1.0, 3)
        agents = tuple(
            QuadraticObjective(P=np.diag([1.0, 2.0, 3.0]), q=np.zeros(3))
            for _ in range(2))
        solver = BatchedQuadraticSolver(agents, box)
        tilts = np.array([[8.0, 0.0, -1.5], [0.0, -8.0, 0.0]])
        Y = solver.solve(tilts)
        assert np.array_equal(Y[0], [-1.0, 0.0, 0.25])
        assert np.array_equal(Y[1], [0.0, 1.0, 0.0])
