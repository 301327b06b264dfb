"""Conditional-expectation models."""

import numpy as np
import pytest

from labelshift.condexp import (
    ClassProbCondExp,
    NadarayaWatsonCondExp,
    NormalWorkingCondExp,
    fit_cond_exp_nonparametric,
    interpolation_matrix,
)
from labelshift.kernels import KernelSpec
from labelshift.simulation import SimConfig, generate_replicate


class TestInterpolationMatrix:
    def test_exact_at_basis_points(self):
        basis = np.array([0.0, 1.0, 3.0])
        mat = interpolation_matrix(basis, basis)
        np.testing.assert_allclose(mat, np.eye(3), atol=1e-15)

    def test_linear_between_and_constant_outside(self):
        basis = np.array([0.0, 2.0])
        mat = interpolation_matrix(np.array([-1.0, 1.0, 5.0]), basis)
        np.testing.assert_allclose(mat, [[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]])


class TestNadarayaWatson:
    def test_constant_function_maps_to_one(self):
        rng = np.random.default_rng(0)
        model = NadarayaWatsonCondExp(rng.normal(0, 1, 50), rng.normal(0, 1, (50, 2)), 1.0)
        out = model.expect_fn(lambda y: np.ones_like(y), rng.normal(0, 1, (7, 2)))
        np.testing.assert_allclose(out, 1.0, atol=1e-12)

    def test_single_anchor(self):
        model = NadarayaWatsonCondExp(np.array([2.0]), np.array([[0.5, 0.5]]), 1.0)
        out = model.expect_fn(lambda y: y, np.array([[0.5, 0.5]]))
        assert out[0] == pytest.approx(2.0)

    def test_posterior_mean_oracle_on_simulated_data(self):
        # Under the simulated mechanism the source posterior mean of Y given
        # x is alpha'x / (1/source_var + |alpha|^2); at x = 0 it is 0.
        cfg = SimConfig(n_total=10_000, seed=99)
        rep = generate_replicate(cfg, 0)
        data = rep.dataset
        n = data.n_labeled
        model = NadarayaWatsonCondExp(data.y_labeled, data.x_labeled, cfg.bandwidths.nw(n))
        out = model.expect_fn(lambda y: y, np.zeros((1, 3)))
        assert out[0] == pytest.approx(0.0, abs=0.1)

    def test_basis_map_matches_expect_fn_on_basis_values(self):
        rng = np.random.default_rng(4)
        y = rng.normal(0, 1, 40)
        model = NadarayaWatsonCondExp(y, rng.normal(0, 1, (40, 2)), 1.2)
        basis = np.unique(y)
        queries = rng.normal(0, 1, (5, 2))
        fn = lambda v: v**2 + 1.0  # noqa: E731
        direct = model.expect_fn(fn, queries)
        mapped = model.basis_map(queries, basis) @ fn(basis)
        np.testing.assert_allclose(mapped, direct, atol=1e-12)

    def test_fit_helper_accepts_pairs(self):
        pairs = [(0.0, [0.0, 0.0]), (1.0, [1.0, 1.0])]
        model = fit_cond_exp_nonparametric(pairs, KernelSpec("gaussian", 2, 1.0))
        out = model.expect_fn(lambda y: y, np.array([[0.0, 0.0]]))
        assert 0.0 <= out[0] <= 1.0


class TestNormalWorking:
    def test_unit_mass(self):
        model = NormalWorkingCondExp(lambda x: np.atleast_2d(x), np.array([0.5, -0.2]), 1.3)
        out = model.expect_fn(lambda y: np.ones_like(y), np.array([[1.0, 2.0]]))
        assert out[0] == pytest.approx(1.0, abs=1e-10)

    def test_gaussian_moments_exact(self):
        beta = np.array([1.0])
        model = NormalWorkingCondExp(lambda x: np.atleast_2d(x), beta, 2.0)
        x = np.array([[0.7]])
        mean = model.expect_fn(lambda y: y, x)[0]
        second = model.expect_fn(lambda y: y**2, x)[0]
        assert mean == pytest.approx(0.7, abs=1e-10)
        assert second == pytest.approx(2.0 + 0.49, abs=1e-8)

    def test_basis_map_interpolates(self):
        model = NormalWorkingCondExp(lambda x: np.atleast_2d(x), np.array([0.0]), 0.5)
        basis = np.linspace(-6, 6, 400)
        mat = model.basis_map(np.array([[0.0]]), basis)
        vals = mat @ (basis**2)
        assert vals[0] == pytest.approx(0.5, abs=1e-3)


class TestClassProb:
    def test_expect_by_row_index(self):
        model = ClassProbCondExp(np.array([0.0, 1.0]), np.array([[0.2, 0.8], [0.9, 0.1]]))
        out = model.expect_fn(lambda y: y, np.array([1, 0]))
        np.testing.assert_allclose(out, [0.1, 0.8])

    def test_rejects_bad_probabilities(self):
        with pytest.raises(Exception):
            ClassProbCondExp(np.array([0.0, 1.0]), np.array([[0.5, 0.6]]))
