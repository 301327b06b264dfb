"""Comparator estimators: prediction-powered, shift-dependent and model-based.

These are the reference points the efficient estimators are judged against:
the classical prediction-powered mean (valid only without shift), the naive
importance-weighted labeled average (biased whenever its ratio model is
wrong), the rectified estimator with a parametric outcome-regression model in
place of the nonparametric conditional expectation, and the oracle that runs
the efficient pipeline with the true ratio.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from ._engine import SolverConfig
from .condexp import CondExpModel, NormalWorkingCondExp
from .data import PooledDataset
from .errors import DataValidationError
from .estimators import EstimateReport, estimate_with_ratio
from .kernels import BandwidthPolicy, KernelSpec
from .ratios import DensityRatioModel


def ppi_mean(labeled, unlabeled_preds) -> float:
    """Prediction-powered mean: direct prediction average plus rectifier.

    ``labeled`` is a sequence of (outcome, prediction) pairs; the rectifier is
    the labeled-sample average prediction error.
    """
    labeled = [(float(y), float(p)) for y, p in labeled]
    preds = np.asarray(unlabeled_preds, dtype=float)
    if not labeled or preds.size == 0:
        raise ValueError("ppi_mean needs labeled pairs and unlabeled predictions")
    resid = np.array([y - p for y, p in labeled])
    return float(preds.mean() + resid.mean())


def ppi_report(labeled, unlabeled_preds, ci_level: float = 0.95) -> EstimateReport:
    """Prediction-powered mean with its classical variance estimate."""
    labeled = [(float(y), float(p)) for y, p in labeled]
    preds = np.asarray(unlabeled_preds, dtype=float)
    theta = ppi_mean(labeled, preds)
    resid = np.array([y - p for y, p in labeled])
    var = resid.var(ddof=1) / resid.size + preds.var(ddof=1) / preds.size
    sd = float(np.sqrt(var))
    z = float(stats.norm.ppf(0.5 + ci_level / 2.0))
    return EstimateReport(
        "ppi", np.array([theta]), np.array([sd]), ci_level,
        np.array([[theta - z * sd, theta + z * sd]]),
        {"rectifier_term": float(resid.mean()), "direct_term": float(preds.mean())},
    )


def shift_dependent(data: PooledDataset, v: Callable[[np.ndarray], np.ndarray], rho) -> float:
    """Importance-weighted labeled-sample average of v(Y) under a ratio model."""
    rho_lab = np.asarray(rho(data.y_labeled), dtype=float)
    if np.any(rho_lab <= 0):
        raise ValueError("density ratio must be positive at labeled outcomes")
    vals = np.asarray(v(data.y_labeled), dtype=float)
    return float(np.mean(rho_lab * vals))


def shift_dependent_report(
    data: PooledDataset, estimand, rho, ci_level: float = 0.95
) -> EstimateReport:
    """Shift-dependent estimate with a sandwich variance for the estimand.

    The mean solves directly; the variance estimand plugs the weighted mean
    into the second component and uses the joint-equation sandwich.
    """
    rho_lab = np.asarray(rho(data.y_labeled), dtype=float)
    y = data.y_labeled
    n = data.n_labeled
    if estimand.dim == 1:
        theta = np.array([shift_dependent(data, estimand.s, rho)])
    else:
        m = float(np.mean(rho_lab * y))
        v = float(np.mean(rho_lab * (y * y - m * m)))
        theta = np.array([m, v])
    u_rows = estimand.u_rows(y, None, theta)
    jac = np.mean(rho_lab[:, None, None] * estimand.jac_rows(y, None, theta), axis=0)
    a_matrix = np.linalg.inv(jac)
    scores = rho_lab[:, None] * u_rows
    meat = (scores.T @ scores) / n
    variance = a_matrix @ meat @ a_matrix.T / n
    sd = np.sqrt(np.diag(variance))
    z = float(stats.norm.ppf(0.5 + ci_level / 2.0))
    ci = np.stack([theta - z * sd, theta + z * sd], axis=1)
    return EstimateReport("shift_dependent", theta, sd, ci_level, ci, {})


@dataclass
class WorkingRegressionModel:
    """Normal linear outcome-regression working model.

    ``design`` maps covariate rows to feature rows (an intercept is added);
    fitting is maximum likelihood, so the noise variance is the mean squared
    residual.
    """

    design: Callable[[np.ndarray], np.ndarray]
    beta: np.ndarray | None = None
    sigma2: float | None = None
    fitted: bool = False

    def _features(self, x: np.ndarray) -> np.ndarray:
        feats = np.atleast_2d(np.asarray(self.design(np.atleast_2d(x)), dtype=float))
        return np.column_stack([np.ones(feats.shape[0]), feats])

    def fit(self, y: np.ndarray, x: np.ndarray) -> "WorkingRegressionModel":
        y = np.asarray(y, dtype=float)
        feats = self._features(x)
        beta, _, rank, _ = np.linalg.lstsq(feats, y, rcond=None)
        if rank < feats.shape[1]:
            raise DataValidationError("working-model design matrix is singular")
        resid = y - feats @ beta
        sigma2 = float(np.mean(resid**2))
        if sigma2 <= 0:
            raise DataValidationError("working-model residual variance is not positive")
        self.beta = beta
        self.sigma2 = sigma2
        self.fitted = True
        return self

    def cond_exp(self, quad_nodes: int = 40) -> NormalWorkingCondExp:
        if not self.fitted:
            raise ValueError("fit the working model before building expectations")
        return NormalWorkingCondExp(
            lambda x: self._features(x), np.asarray(self.beta), self.sigma2, nodes=quad_nodes
        )


def doubly_flexible(
    data: PooledDataset,
    estimand,
    rho_star: DensityRatioModel,
    working: WorkingRegressionModel,
    bandwidths: BandwidthPolicy = BandwidthPolicy(),
    kernel: KernelSpec = KernelSpec(),
    ridge_scale: float | None = None,
    quadrature_nodes: int = 40,
    ci_level: float = 0.95,
    solver: SolverConfig = SolverConfig(),
    grid_points: int = 100,
) -> EstimateReport:
    """Rectified estimate with a parametric normal regression model supplying
    the conditional expectations (fitted here if needed)."""
    if not working.fitted:
        working.fit(data.y_labeled, data.x_labeled)
    condexp = working.cond_exp(quadrature_nodes)
    return estimate_with_ratio(
        data, estimand, rho_star, condexp, bandwidths, kernel,
        ridge_scale=ridge_scale, solver=solver, ci_level=ci_level,
        estimator_name="doubly_flexible", grid_points=grid_points,
    )


def singly_flexible(
    data: PooledDataset,
    estimand,
    rho_star: DensityRatioModel,
    condexp: CondExpModel,
    bandwidths: BandwidthPolicy = BandwidthPolicy(),
    kernel: KernelSpec = KernelSpec(),
    ridge_scale: float | None = None,
    ci_level: float = 0.95,
    solver: SolverConfig = SolverConfig(),
    grid_points: int = 100,
) -> EstimateReport:
    """Rectified estimate with the working ratio model and a nonparametric
    conditional expectation."""
    return estimate_with_ratio(
        data, estimand, rho_star, condexp, bandwidths, kernel,
        ridge_scale=ridge_scale, solver=solver, ci_level=ci_level,
        estimator_name="singly_flexible", grid_points=grid_points,
    )


def oracle_efficient(
    data: PooledDataset,
    estimand,
    true_rho: DensityRatioModel,
    condexp: CondExpModel,
    bandwidths: BandwidthPolicy = BandwidthPolicy(),
    kernel: KernelSpec = KernelSpec(),
    ridge_scale: float | None = None,
    ci_level: float = 0.95,
    solver: SolverConfig = SolverConfig(),
    grid_points: int = 100,
) -> EstimateReport:
    """The efficient pipeline run with the true ratio (simulation benchmark)."""
    return estimate_with_ratio(
        data, estimand, true_rho, condexp, bandwidths, kernel,
        ridge_scale=ridge_scale, solver=solver, ci_level=ci_level,
        estimator_name="oracle", grid_points=grid_points,
    )
