"""Datasets, forward ordering, nested candidate sets, and batch fitting."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lama.linalg import min_norm_ls, projection
from lama.models import (
    Dataset,
    NestedCandidateSet,
    build_nested,
    default_model_counts,
    fit_all,
    load_csv,
    order_by_cp,
)

from conftest import make_fits


class TestDataset:
    def test_basic_validation(self):
        with pytest.raises(ValueError):
            Dataset(Y=np.ones(1), X=np.ones((1, 1)))  # n < 2
        with pytest.raises(ValueError):
            Dataset(Y=np.ones(3), X=np.ones((2, 1)))  # length mismatch
        with pytest.raises(ValueError):
            Dataset(Y=np.array([1.0, np.nan]), X=np.ones((2, 1)))
        with pytest.raises(ValueError):
            Dataset(Y=np.ones(2), X=np.array([[2.0], [2.0]]), has_intercept=True)

    def test_shape_properties(self, rng):
        d = Dataset(Y=rng.standard_normal(7), X=rng.standard_normal((7, 3)))
        assert (d.n, d.p) == (7, 3)


class TestNestedCandidateSet:
    def test_strictly_increasing_sizes_required(self):
        with pytest.raises(ValueError):
            build_nested(np.arange(4), (2, 2))
        with pytest.raises(ValueError):
            build_nested(np.arange(4), (3, 1))

    def test_sizes_bounded_by_regressor_count(self):
        with pytest.raises(ValueError):
            build_nested(np.arange(3), (1, 5))

    def test_ordering_must_be_permutation(self):
        with pytest.raises(ValueError):
            NestedCandidateSet(ordering=np.array([0, 0, 2]), sizes=np.array([1]))

    def test_valid_construction(self):
        cands = build_nested(np.array([2, 0, 1]), (1, 3))
        assert cands.M == 2
        assert list(cands.sizes) == [1, 3]


class TestOrderByCp:
    def test_exact_predictor_selected_first(self, rng):
        # Response equals column 3 exactly; exhaustive single-term scores
        # provide the oracle for which column must lead the ordering.
        X = rng.standard_normal((30, 4))
        Y = X[:, 3].copy()
        data = Dataset(Y=Y, X=X)
        rss = [float(np.sum((Y - X[:, [j]] @ min_norm_ls(X[:, [j]], Y)) ** 2)) for j in range(4)]
        assert int(np.argmin(rss)) == 3
        assert order_by_cp(data)[0] == 3

    def test_single_regressor(self, rng):
        data = Dataset(Y=rng.standard_normal(10), X=rng.standard_normal((10, 1)))
        assert list(order_by_cp(data)) == [0]

    def test_duplicate_columns_tie_breaks_low_index(self, rng):
        x = rng.standard_normal(20)
        X = np.column_stack([x, x, rng.standard_normal(20)])
        data = Dataset(Y=x + 0.01 * rng.standard_normal(20), X=X)
        ordering = order_by_cp(data)
        assert ordering[0] == 0  # the duplicate at index 1 loses the tie
        assert sorted(ordering) == [0, 1, 2]

    def test_intercept_seeded_first(self, rng):
        X = np.column_stack([np.ones(25), rng.standard_normal((25, 3))])
        data = Dataset(Y=rng.standard_normal(25), X=X, has_intercept=True)
        assert order_by_cp(data)[0] == 0
        # The flag can be turned off, letting the intercept compete.
        free = order_by_cp(data, keep_intercept=False)
        assert sorted(free) == [0, 1, 2, 3]

    def test_deterministic(self, rng):
        X = rng.standard_normal((40, 6))
        data = Dataset(Y=rng.standard_normal(40), X=X)
        assert np.array_equal(order_by_cp(data), order_by_cp(data))

    def test_result_is_full_permutation_with_max_terms(self, rng):
        X = rng.standard_normal((30, 8))
        data = Dataset(Y=rng.standard_normal(30), X=X)
        ordering = order_by_cp(data, max_terms=3)
        assert sorted(ordering) == list(range(8))
        with pytest.raises(ValueError):
            order_by_cp(data, max_terms=0)

    def test_sample_too_small_for_reference_model(self, rng):
        data = Dataset(Y=rng.standard_normal(3), X=rng.standard_normal((3, 3)))
        with pytest.raises(ValueError):
            order_by_cp(data)


class TestFitAll:
    def test_single_full_model_matches_ols(self, rng):
        X = rng.standard_normal((20, 4))
        Y = rng.standard_normal(20)
        fits = fit_all(Dataset(Y=Y, X=X), build_nested(np.arange(4), (4,)))
        resid_ols = Y - X @ np.linalg.solve(X.T @ X, X.T @ Y)
        assert np.allclose(fits.residuals[:, 0], resid_ols, atol=1e-9)
        assert fits.rss[0] == pytest.approx(float(resid_ols @ resid_ols))

    def test_pairwise_traces_are_min_sizes(self):
        fits, _, _ = make_fits(11, n=25, sizes=(2, 4, 9))
        expected = np.minimum.outer([2, 4, 9], [2, 4, 9])
        assert np.allclose(fits.proj_traces, expected, atol=1e-8)

    def test_interpolating_candidate_zero_residual(self, rng):
        X = rng.standard_normal((6, 6))
        fits = fit_all(
            Dataset(Y=rng.standard_normal(6), X=X), build_nested(np.arange(6), (3, 6))
        )
        assert np.allclose(fits.residuals[:, 1], 0.0, atol=1e-8)

    def test_fast_and_careful_routes_agree(self, rng):
        # Well-conditioned tall design takes the shared-factorization
        # shortcut; per-candidate direct solves provide the independent route.
        X = rng.standard_normal((30, 8))
        Y = rng.standard_normal(30)
        fits = fit_all(Dataset(Y=Y, X=X), build_nested(np.arange(8), (2, 5, 8)))
        for q, k in enumerate((2, 5, 8)):
            beta = min_norm_ls(X[:, :k], Y)
            assert np.allclose(fits.coefs[q], beta, atol=1e-9)
            assert np.allclose(fits.residuals[:, q], Y - X[:, :k] @ beta, atol=1e-9)
            P = projection(X[:, :k])
            assert np.allclose(fits.leverages[:, q], np.diag(P), atol=1e-9)

    def test_wide_candidates_use_min_norm(self, rng):
        # More columns than rows: ranks cap at n and residuals vanish.
        X = rng.standard_normal((10, 15))
        Y = rng.standard_normal(10)
        fits = fit_all(Dataset(Y=Y, X=X), build_nested(np.arange(15), (4, 12)))
        assert list(fits.ranks) == [4, 10]
        assert np.allclose(fits.residuals[:, 1], 0.0, atol=1e-7)
        assert np.allclose(fits.coefs[1], min_norm_ls(X[:, :12], Y), atol=1e-8)

    def test_collinear_column_reduces_rank_and_trace(self, rng):
        X = rng.standard_normal((12, 3))
        X[:, 2] = X[:, 0] - X[:, 1]
        fits = fit_all(
            Dataset(Y=rng.standard_normal(12), X=X), build_nested(np.arange(3), (2, 3))
        )
        assert list(fits.ranks) == [2, 2]
        assert fits.proj_traces[0, 1] == pytest.approx(2.0)

    def test_predict_reproduces_training_fit(self, rng):
        fits, data, _ = make_fits(12, n=18, sizes=(1, 4, 7))
        pred = fits.predict(data.X)
        assert np.allclose(pred, data.Y[:, None] - fits.residuals, atol=1e-9)
        with pytest.raises(ValueError):
            fits.predict(data.X[:, :3])  # too few columns

    def test_subset_restricts_consistently(self):
        fits, _, _ = make_fits(13, n=20, sizes=(2, 5, 8))
        sub = fits.subset(np.array([False, True, True]))
        assert list(sub.sizes) == [5, 8]
        assert np.allclose(sub.residuals, fits.residuals[:, 1:])
        assert np.allclose(sub.proj_traces, fits.proj_traces[1:, 1:])
        with pytest.raises(ValueError):
            fits.subset(np.zeros(3, dtype=bool))

    def test_ordering_length_checked(self, rng):
        data = Dataset(Y=rng.standard_normal(10), X=rng.standard_normal((10, 4)))
        with pytest.raises(ValueError):
            fit_all(data, build_nested(np.arange(3), (2,)))

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2**31))
    def test_residual_norms_never_increase_with_size(self, seed):
        fits, _, _ = make_fits(seed, n=16, sizes=(1, 2, 5, 9, 13))
        assert np.all(np.diff(fits.rss) <= 1e-9)


def test_default_model_counts_match_rounding_rule():
    assert default_model_counts(25) == (9, 13, 23)
    assert default_model_counts(50) == (11, 25, 45)
    assert default_model_counts(150) == (16, 75, 135)
    assert default_model_counts(300) == (20, 150, 270)


class TestLoadCsv:
    def test_roundtrip_with_comments(self, tmp_path):
        f = tmp_path / "toy.csv"
        f.write_text("# provenance note\na,b,resp\n1,2,3\n4,5,6\n")
        data = load_csv(f, response="resp")
        assert data.has_intercept and data.n == 2 and data.p == 3
        assert np.allclose(data.X[:, 0], 1.0)
        assert np.allclose(data.Y, [3.0, 6.0])
        assert data.column_names == ("(intercept)", "a", "b")

    def test_no_intercept_option(self, tmp_path):
        f = tmp_path / "toy.csv"
        f.write_text("a,resp\n1,3\n4,6\n")
        data = load_csv(f, response="resp", intercept=False)
        assert not data.has_intercept and data.p == 1

    def test_errors(self, tmp_path):
        f = tmp_path / "bad.csv"
        f.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="no column named"):
            load_csv(f, response="zzz")
        f.write_text("a,b\n1,x\n2,3\n")
        with pytest.raises(ValueError, match="non-numeric"):
            load_csv(f, response="a")
        f.write_text("a,b\n")
        with pytest.raises(ValueError, match="header row"):
            load_csv(f, response="a")
