"""Simplex quadratic programs: projection, solver, and solve reports.

The solver is held to a lattice brute-force oracle on low-dimensional
problems, to hand-solved two-candidate programs, and to feasibility,
determinism, and tie-breaking contracts that the experiment layer relies on.
"""

import numpy as np
import pytest

from lama.qp import SolveReport, simplex_project, solve_simplex_qp

from conftest import grid_min, simplex_grid


class TestSimplexProject:
    def test_plugs(self):
        np.testing.assert_allclose(simplex_project([2.0, 0.0]), [1.0, 0.0])
        np.testing.assert_allclose(simplex_project([-1.0, 1.0]), [0.0, 1.0])
        np.testing.assert_allclose(simplex_project([0.3, 0.3, 0.4]), [0.3, 0.3, 0.4])

    def test_idempotent(self, rng):
        v = rng.standard_normal(6)
        w = simplex_project(v)
        np.testing.assert_allclose(simplex_project(w), w, atol=1e-12)

    def test_output_is_feasible_and_closest(self, rng):
        for _ in range(20):
            v = 3.0 * rng.standard_normal(4)
            w = simplex_project(v)
            assert np.all(w >= 0.0)
            assert w.sum() == pytest.approx(1.0, abs=1e-12)
            others = simplex_grid(4, step=0.05)
            dists = np.linalg.norm(others - v, axis=1)
            assert np.linalg.norm(w - v) <= dists.min() + 1e-9

    def test_validation(self):
        with pytest.raises(ValueError, match="empty"):
            simplex_project([])
        with pytest.raises(ValueError, match="finite"):
            simplex_project([np.nan, 1.0])


class TestSolveSimplexQp:
    def test_identity_prefers_uniform(self):
        report = solve_simplex_qp(np.eye(3))
        np.testing.assert_allclose(report.weights, np.full(3, 1 / 3), atol=1e-9)
        assert report.status == "converged"
        assert report.objective == pytest.approx(1 / 3, abs=1e-9)

    def test_two_candidate_closed_form(self):
        # min w1^2 + 2 w2^2 on the simplex: gradient balance at (2/3, 1/3).
        report = solve_simplex_qp(np.diag([1.0, 2.0]))
        np.testing.assert_allclose(report.weights, [2 / 3, 1 / 3], atol=1e-9)

    def test_linear_term_pulls_to_a_vertex(self):
        report = solve_simplex_qp(np.eye(2), b=[-2.0, 0.0])
        np.testing.assert_allclose(report.weights, [1.0, 0.0], atol=1e-9)
        assert report.objective == pytest.approx(-1.0, abs=1e-9)

    def test_matches_lattice_oracle_on_random_convex_programs(self, rng):
        for _ in range(10):
            M = int(rng.integers(2, 5))
            G = rng.standard_normal((M + 2, M))
            A = G.T @ G / M
            b = rng.standard_normal(M)
            report = solve_simplex_qp(A, b)
            assert report.status == "converged"
            assert report.objective <= grid_min(A, b, step=0.01) + 1e-6

    def test_feasibility_is_exact(self, rng):
        for _ in range(10):
            G = rng.standard_normal((3, 5))
            report = solve_simplex_qp(G.T @ G, rng.standard_normal(5))
            assert np.all(report.weights >= 0.0)
            assert report.weights.sum() == pytest.approx(1.0, abs=1e-10)

    def test_indefinite_program_finds_the_best_vertex(self):
        # w1^2 - w2^2 on the simplex is minimized at the second vertex.
        report = solve_simplex_qp(np.diag([1.0, -1.0]))
        np.testing.assert_allclose(report.weights, [0.0, 1.0], atol=1e-9)
        assert report.objective == pytest.approx(-1.0, abs=1e-9)

    def test_indefinite_never_loses_to_the_lattice(self, rng):
        for _ in range(5):
            A = rng.standard_normal((3, 3))
            A = 0.5 * (A + A.T)
            b = rng.standard_normal(3)
            report = solve_simplex_qp(A, b)
            assert report.objective <= grid_min(A, b, step=0.02) + 1e-6

    def test_deterministic_across_calls(self, rng):
        G = rng.standard_normal((4, 4))
        A, b = G.T @ G, rng.standard_normal(4)
        first = solve_simplex_qp(A, b)
        second = solve_simplex_qp(A, b)
        assert np.array_equal(first.weights, second.weights)
        assert first.objective == second.objective
        assert first.iterations == second.iterations

    def test_flat_objective_ties_break_lexicographically_smallest(self):
        report = solve_simplex_qp(np.zeros((3, 3)), restarts="full")
        np.testing.assert_allclose(report.weights, [0.0, 0.0, 1.0], atol=1e-12)

    def test_explicit_restart_at_the_optimum_stays_put(self):
        report = solve_simplex_qp(np.diag([1.0, 2.0]), restarts=[[2 / 3, 1 / 3]])
        np.testing.assert_allclose(report.weights, [2 / 3, 1 / 3], atol=1e-10)

    def test_asymmetric_input_sees_only_the_symmetric_part(self, rng):
        A = rng.standard_normal((3, 3))
        b = rng.standard_normal(3)
        direct = solve_simplex_qp(A, b)
        symmetrized = solve_simplex_qp(0.5 * (A + A.T), b)
        assert np.array_equal(direct.weights, symmetrized.weights)

    def test_single_candidate_shortcut(self):
        report = solve_simplex_qp(np.array([[4.0]]), b=[1.0])
        np.testing.assert_array_equal(report.weights, [1.0])
        assert report.objective == pytest.approx(5.0)
        assert report.status == "converged"
        assert report.iterations == 0

    def test_history_is_monotone_for_convex_programs(self, rng):
        G = rng.standard_normal((6, 4))
        report = solve_simplex_qp(G.T @ G, rng.standard_normal(4), track_history=True)
        hist = np.asarray(report.objective_history)
        assert hist.size >= 1
        assert np.all(np.diff(hist) <= 1e-10)

    def test_history_absent_by_default(self):
        assert solve_simplex_qp(np.eye(2)).objective_history is None

    def test_report_serialization(self):
        d = solve_simplex_qp(np.eye(2)).to_dict()
        assert set(d) == {"weights", "objective", "iterations", "status", "kkt_residual"}
        assert isinstance(d["weights"], list)
        assert all(isinstance(x, float) for x in d["weights"])

    def test_validation(self):
        with pytest.raises(ValueError, match="square"):
            solve_simplex_qp(np.ones((2, 3)))
        with pytest.raises(ValueError, match="empty program"):
            solve_simplex_qp(np.zeros((0, 0)))
        with pytest.raises(ValueError, match="length"):
            solve_simplex_qp(np.eye(2), b=[1.0])
        with pytest.raises(ValueError, match="finite"):
            solve_simplex_qp(np.array([[np.inf, 0.0], [0.0, 1.0]]))
        with pytest.raises(ValueError, match="restart"):
            solve_simplex_qp(np.eye(2), restarts=[])
