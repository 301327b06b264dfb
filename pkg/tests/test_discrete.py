"""Finite-label estimators and the confusion-matrix baseline."""

import numpy as np
import pytest

from labelshift.condexp import NadarayaWatsonCondExp
from labelshift.data import make_dataset
from labelshift.discrete import (
    confusion_matrix_ratio,
    discrete_class_prob,
    discrete_class_probs,
    discrete_ratio_estimate,
)
from labelshift.errors import SingularSystemError
from labelshift.ratios import DiscreteRatio


def two_class_dataset(rng, n, m, p_source, p_target, signal=2.5):
    """Binary labels with a one-dimensional covariate of adjustable strength."""
    y_lab = (rng.random(n) < p_source[1]).astype(float)
    y_unl = (rng.random(m) < p_target[1]).astype(float)
    x_lab = y_lab[:, None] * signal + rng.standard_normal((n, 1))
    x_unl = y_unl[:, None] * signal + rng.standard_normal((m, 1))
    return make_dataset(y_lab, x_lab, x_unl), y_unl


class TestConstantCovariateCollapse:
    def test_reduces_to_weighted_frequency(self):
        # With a completely uninformative covariate the estimator collapses
        # to the labeled-sample importance-weighted class frequency whenever
        # the ratio satisfies the frequency-weighted normalization.
        y_lab = np.array([0.0] * 100 + [1.0] * 100)
        x_lab = np.zeros((200, 1))
        x_unl = np.zeros((150, 1))
        data = make_dataset(y_lab, x_lab, x_unl)
        condexp = NadarayaWatsonCondExp(data.y_labeled, data.x_labeled, 1.0)
        rho = DiscreteRatio(np.array([0.0, 1.0]), np.array([1.2, 0.8]))
        for k0, expected in ((0.0, 1.2 * 0.5), (1.0, 0.8 * 0.5)):
            est = discrete_class_prob(data, k0, rho, condexp, ridge=1e-10)
            # oracle: hand-rolled dense evaluation of the same quantity
            assert est == pytest.approx(expected, abs=1e-6)

    def test_hand_rolled_dense_oracle(self):
        # Brute-force evaluation of the defining sums with dense numpy,
        # independent of the class-grouped implementation.
        rng = np.random.default_rng(0)
        data, _ = two_class_dataset(rng, 60, 50, (0.5, 0.5), (0.3, 0.7))
        condexp = NadarayaWatsonCondExp(data.y_labeled, data.x_labeled, 1.2)
        classes = np.array([0.0, 1.0])
        rho = DiscreteRatio(classes, np.array([0.9, 1.1]))
        ridge = 1e-9

        est = discrete_class_prob(data, 1.0, rho, condexp, ridge=ridge)

        # oracle below: explicit weights, explicit K x K system, explicit sums
        w_all = 1.0 / condexp.expect_fn(
            lambda y: rho.as_continuous()(y) ** 2
            + (data.n_labeled / data.n_unlabeled) * rho.as_continuous()(y),
            data.x,
        )
        probs = condexp.basis_map(data.x, classes)  # P(class | x) per row
        y_lab = data.y_labeled
        lab_idx = np.flatnonzero(data.labeled)
        k = classes.size
        m = np.zeros((k, k))
        for ci, c in enumerate(classes):
            members = lab_idx[y_lab == c]
            for kk in range(k):
                m[ci, kk] = np.mean(
                    [w_all[i] * probs[i, kk] * rho.values[kk] for i in members]
                )
        rhs = np.array([0.0, 1.0])
        lam = ridge
        a = np.linalg.solve(m.T @ m + lam * np.eye(k), m.T @ rhs)
        resp = w_all * (probs @ (a * rho.values))
        lab = data.labeled
        oracle = float(
            np.mean(rho(y_lab) * ((y_lab == 1.0) - resp[lab])) + resp[~lab].mean()
        )
        assert est == pytest.approx(oracle, abs=1e-10)


class TestSeparableCovariate:
    def test_equals_unlabeled_predicted_frequency(self):
        rng = np.random.default_rng(3)
        n, m = 120, 140
        y_lab = np.array([0.0, 1.0] * (n // 2))
        y_unl = (rng.random(m) < 0.75).astype(float)
        # clusters far apart relative to the bandwidth: perfectly separable
        x_lab = y_lab[:, None] * 100.0 + rng.standard_normal((n, 1))
        x_unl = y_unl[:, None] * 100.0 + rng.standard_normal((m, 1))
        data = make_dataset(y_lab, x_lab, x_unl)
        condexp = NadarayaWatsonCondExp(data.y_labeled, data.x_labeled, 2.0)
        rho = DiscreteRatio(np.array([0.0, 1.0]), np.array([0.7, 1.3]))
        est = discrete_class_prob(data, 1.0, rho, condexp, ridge=1e-12)
        assert est == pytest.approx(float(np.mean(y_unl == 1.0)), abs=1e-6)


class TestDiscreteRatioEstimate:
    def test_no_shift_ratios_near_one(self):
        rng = np.random.default_rng(5)
        data, _ = two_class_dataset(rng, 2000, 2000, (0.5, 0.5), (0.5, 0.5))
        condexp = NadarayaWatsonCondExp(data.y_labeled, data.x_labeled, 1.0)
        star = DiscreteRatio(np.array([0.0, 1.0]), np.ones(2))
        out = discrete_ratio_estimate(data, condexp, star)
        np.testing.assert_allclose(out.values, 1.0, atol=0.15)

    def test_shift_recovered_with_informative_covariate(self):
        devs = []
        for seed in range(25):
            rng = np.random.default_rng(seed)
            data, _ = two_class_dataset(rng, 2000, 2000, (0.5, 0.5), (0.2, 0.8))
            condexp = NadarayaWatsonCondExp(data.y_labeled, data.x_labeled, 1.0)
            star = DiscreteRatio(np.array([0.0, 1.0]), np.ones(2))
            out = discrete_ratio_estimate(data, condexp, star)
            devs.append(out.values)
        mean_ratio = np.mean(devs, axis=0)
        se = np.std(devs, axis=0) / np.sqrt(len(devs))
        # true ratios 0.4 and 1.6 against realized class frequencies
        assert abs(mean_ratio[1] - 1.6) <= 3 * se[1] + 0.05
        assert abs(mean_ratio[0] - 0.4) <= 3 * se[0] + 0.05

    def test_ratio_mass_identity(self):
        rng = np.random.default_rng(11)
        data, _ = two_class_dataset(rng, 1500, 1500, (0.5, 0.5), (0.7, 0.3))
        condexp = NadarayaWatsonCondExp(data.y_labeled, data.x_labeled, 1.0)
        star = DiscreteRatio(np.array([0.0, 1.0]), np.ones(2))
        out = discrete_ratio_estimate(data, condexp, star)
        p_hat = np.array([(data.y_labeled == c).mean() for c in out.classes])
        assert 0.98 <= float(out.values @ p_hat) <= 1.02

    def test_class_probabilities_sum_to_one(self):
        rng = np.random.default_rng(2)
        data, _ = two_class_dataset(rng, 400, 400, (0.5, 0.5), (0.6, 0.4))
        condexp = NadarayaWatsonCondExp(data.y_labeled, data.x_labeled, 1.0)
        rho = DiscreteRatio(np.array([0.0, 1.0]), np.array([1.1, 0.9]))
        probs = discrete_class_probs(data, rho, condexp)
        assert probs.sum() == pytest.approx(1.0, abs=1e-6)

    def test_label_permutation_equivariance(self):
        rng = np.random.default_rng(9)
        data, _ = two_class_dataset(rng, 300, 300, (0.5, 0.5), (0.3, 0.7))
        condexp = NadarayaWatsonCondExp(data.y_labeled, data.x_labeled, 1.0)
        star = DiscreteRatio(np.array([0.0, 1.0]), np.ones(2))
        out = discrete_ratio_estimate(data, condexp, star)

        # relabel classes 0 <-> 1
        from labelshift.data import PooledDataset

        swapped = PooledDataset(data.labeled.copy(), 1.0 - data.y, data.x.copy())
        condexp2 = NadarayaWatsonCondExp(swapped.y_labeled, swapped.x_labeled, 1.0)
        out2 = discrete_ratio_estimate(swapped, condexp2, star)
        np.testing.assert_allclose(out.values, out2.values[::-1], atol=1e-10)

    def test_missing_class_rejected(self):
        y_lab = np.zeros(50)
        data = make_dataset(y_lab, np.zeros((50, 1)), np.zeros((30, 1)))
        condexp = NadarayaWatsonCondExp(data.y_labeled, data.x_labeled, 1.0)
        star = DiscreteRatio(np.array([0.0, 1.0]), np.ones(2))
        with pytest.raises(ValueError, match="class"):
            discrete_ratio_estimate(data, condexp, star)


class TestConfusionMatrixRatio:
    def test_perfect_predictor(self):
        labeled = [(0, 0)] * 60 + [(1, 1)] * 40
        preds = np.array([0] * 30 + [1] * 70)
        out = confusion_matrix_ratio(labeled, preds)
        np.testing.assert_allclose(out.values, [0.3 / 0.6, 0.7 / 0.4], atol=1e-12)

    def test_uninformative_predictor_rejected(self):
        # prediction independent of the truth: rank-one confusion matrix
        labeled = [(0, 0), (0, 1), (1, 0), (1, 1)] * 25
        preds = np.array([0, 1] * 30)
        with pytest.raises(SingularSystemError, match="not invertible"):
            confusion_matrix_ratio(labeled, preds)

    def test_two_by_two_inverse_oracle(self):
        # Exact linear-algebra oracle computed ahead of the implementation:
        # with prediction-given-truth matrix [[.9, .2], [.1, .8]], unlabeled
        # prediction frequencies (.6, .4) solve to class priors
        # (4/7, 3/7) = (0.5714, 0.4286), and dividing by labeled priors
        # (.5, .5) gives ratios (1.1429, 0.8571).
        rng = np.random.default_rng(0)
        n = 70_000
        truth = (rng.random(n) < 0.5).astype(int)
        flip = rng.random(n)
        pred = np.where(truth == 0, np.where(flip < 0.9, 0, 1), np.where(flip < 0.8, 1, 0))
        n_unl = 40_000
        pred_unl = np.concatenate([np.zeros(int(n_unl * 0.6)), np.ones(n_unl - int(n_unl * 0.6))])
        out = confusion_matrix_ratio(list(zip(truth, pred)), pred_unl)
        # Monte Carlo confusion-matrix noise at n = 70k is ~0.004
        np.testing.assert_allclose(out.values, [8.0 / 7.0, 6.0 / 7.0], atol=0.02)

    def test_exact_two_by_two_values(self):
        # deterministic counts reproducing the confusion matrix exactly
        labeled = (
            [(0, 0)] * 90 + [(0, 1)] * 10 + [(1, 1)] * 80 + [(1, 0)] * 20
        )
        preds = np.array([0] * 60 + [1] * 40)
        out = confusion_matrix_ratio(labeled, preds)
        expected_priors = np.linalg.solve(np.array([[0.9, 0.2], [0.1, 0.8]]), [0.6, 0.4])
        np.testing.assert_allclose(expected_priors, [4.0 / 7.0, 3.0 / 7.0], atol=1e-12)
        np.testing.assert_allclose(out.values, expected_priors / 0.5, atol=1e-12)


class TestContinuousEquivalence:
    def test_discrete_matches_continuous_pipeline_with_subunit_bandwidths(self):
        # Embedding integer labels in the continuous machinery with compact
        # kernels of bandwidth 0.5 turns every smoother into exact class
        # matching; the localized density estimates equal the discrete class
        # probabilities once the kernel's own scale factor K(0)/h is divided
        # out, so the per-class ratios agree to floating-point accuracy.
        from labelshift._engine import EifEngine
        from labelshift.kernels import BandwidthPolicy, KernelSpec

        rng = np.random.default_rng(21)
        data, _ = two_class_dataset(rng, 200, 180, (0.5, 0.5), (0.3, 0.7))
        condexp = NadarayaWatsonCondExp(data.y_labeled, data.x_labeled, 1.5)
        classes = np.array([0.0, 1.0])
        rho = DiscreteRatio(classes, np.array([0.8, 1.2]))
        lam = 1e-9

        disc = discrete_class_probs(data, rho, condexp, ridge=lam)

        n = data.n_labeled
        bw = BandwidthPolicy(
            h_constant=0.5 / n ** (-1.0 / 16.0), h_exponent=-1.0 / 16.0,
            l_constant=0.5 / n ** (-1.0 / 3.0), l_exponent=-1.0 / 3.0,
        )
        assert bw.h(n) == pytest.approx(0.5)
        assert bw.l(n) == pytest.approx(0.5)
        engine = EifEngine(
            data, rho.as_continuous(), condexp, bw,
            kernel=KernelSpec("epanechnikov", 2, 1.0),
            ridge_lambda=lam, mode="density",
        )
        result = engine.delta_estimates(classes)
        kernel_scale = 0.75 / 0.5  # K(0) / h for the compact kernel
        cont = result.deltas / kernel_scale
        np.testing.assert_allclose(cont, disc, atol=1e-8)
