"""Influence-function-based variance estimation and confidence intervals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from ._engine import EifEngine
from .condexp import CondExpModel
from .data import PooledDataset
from .errors import SingularSystemError
from .fredholm import NuisanceFunction
from .kernels import BandwidthPolicy, KernelSpec, scaled_kernel_values


@dataclass
class EifEvaluation:
    """Per-row influence values with the plug-in scaling matrix and variance."""

    values: np.ndarray       # (rows, dim) influence values
    a_matrix: np.ndarray     # (dim, dim) inverse Jacobian plug-in
    variance: np.ndarray     # (dim, dim) variance estimate of the parameter

    def __post_init__(self):
        asym = np.max(np.abs(self.variance - self.variance.T))
        if asym > 1e-10:
            raise ValueError("variance estimate is not symmetric")
        eigs = np.linalg.eigvalsh((self.variance + self.variance.T) / 2.0)
        if np.min(eigs) < -1e-10:
            raise ValueError("variance estimate is not positive semidefinite")


def influence_values(
    data: PooledDataset,
    estimand,
    theta_hat: np.ndarray,
    rho,
    condexp: CondExpModel,
    a_hat: NuisanceFunction,
    weights: np.ndarray,
    engine: EifEngine | None = None,
    equation_jacobian: np.ndarray | None = None,
    ddof: int = 0,
) -> EifEvaluation:
    """Evaluate the plug-in influence function at the solved parameter.

    The variance estimate is the pooled empirical second moment of the
    influence values divided by the pooled sample size, matching the
    root-n normal limit of the rectified estimators.

    ``equation_jacobian`` is the parameter slope of the solved estimating
    equation; pass it when available (it is exactly minus the identity for
    moment estimands).  Without it the importance-weighted labeled-sample
    Jacobian is used, which can understate the variance by the sample
    normalization of the plugged ratio.

    ``ddof`` discounts the rows consumed by in-sample nuisance fitting
    (solver degrees of freedom plus ratio knots); the plug-in residuals are
    shrunk by roughly that many dimensions.
    """
    from .estimators import predict_b

    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    if engine is not None:
        b_vals = engine.predicted_equation(estimand, theta_hat, a_hat)
    else:
        b_vals = predict_b(data, estimand, theta_hat, rho, condexp, a_hat, weights)
    if equation_jacobian is not None:
        jac = np.asarray(equation_jacobian, dtype=float)
    elif engine is not None:
        jac = engine.jacobian(estimand, theta_hat)
    else:
        rho_lab = np.asarray(rho(data.y_labeled), dtype=float)
        x_lab = None if estimand.y_only else data.x_labeled
        jac_rows = estimand.jac_rows(data.y_labeled, x_lab, theta_hat)
        jac = np.mean(rho_lab[:, None, None] * jac_rows, axis=0)

    lab = data.labeled
    pi = data.pi
    rho_lab = np.asarray(rho(data.y_labeled), dtype=float)
    x_lab = None if estimand.y_only else data.x_labeled
    u_lab = estimand.u_rows(data.y_labeled, x_lab, theta_hat)

    psi = np.empty((data.total, estimand.dim))
    psi[lab] = (rho_lab[:, None] * (u_lab - b_vals[lab])) / pi
    psi[~lab] = b_vals[~lab] / (1.0 - pi)

    try:
        a_matrix = np.linalg.inv(jac)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(
            "estimated parameter Jacobian is singular; the estimating "
            "equation does not identify the parameter on this sample"
        ) from exc

    phi = psi @ a_matrix.T
    denom = max(data.total - ddof, 1)
    second_moment = (phi.T @ phi) / denom
    variance = second_moment / data.total
    variance = (variance + variance.T) / 2.0
    return EifEvaluation(phi, a_matrix, variance)


def confidence_interval(eif: EifEvaluation, theta_hat: np.ndarray, level: float) -> np.ndarray:
    """Normal-quantile confidence intervals, one row per parameter component."""
    if not 0.0 < level < 1.0:
        raise ValueError("confidence level must lie in (0, 1)")
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    z = float(stats.norm.ppf(0.5 + level / 2.0))
    sd = np.sqrt(np.diag(eif.variance))
    return np.stack([theta_hat - z * sd, theta_hat + z * sd], axis=1)


def target_density_variance(
    data: PooledDataset,
    y0: float,
    rho,
    condexp: CondExpModel,
    a_hat: NuisanceFunction,
    weights: np.ndarray,
    bandwidths: BandwidthPolicy = BandwidthPolicy(),
    kernel: KernelSpec = KernelSpec(),
) -> float:
    """Plug-in variance of the localized target-density estimate.

    Two terms: the labeled-sample second moment of the rectifier contribution
    over n, plus the unlabeled-sample spread of the predicted response around
    the density estimate over (total - n).
    """
    weights = np.asarray(weights, dtype=float)
    spec_h = kernel.with_bandwidth(bandwidths.h(data.n_labeled))
    queries = np.arange(data.total) if condexp.query_by_index else data.x

    def integrand(y):
        return np.asarray(a_hat(y), dtype=float) * np.asarray(rho(y), dtype=float)

    responses = weights * condexp.expect_fn(integrand, queries)
    lab = data.labeled
    rho_lab = np.asarray(rho(data.y_labeled), dtype=float)
    kern_lab = scaled_kernel_values(spec_h, data.y_labeled - y0)

    delta_hat = float(np.mean(responses[~lab]) + np.mean(rho_lab * (kern_lab - responses[lab])))
    term1 = np.mean((rho_lab * (kern_lab - responses[lab])) ** 2) / data.n_labeled
    term2 = np.mean((responses[~lab] - delta_hat) ** 2) / data.n_unlabeled
    return float(term1 + term2)
