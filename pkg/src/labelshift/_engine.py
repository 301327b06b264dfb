"""Shared estimation engine.

One engine instance fixes a dataset, a density-ratio model and a
conditional-expectation model, and precomputes everything that does not
depend on the estimand: the per-row sample weights, the local-averaging
operator of the integral equation and its factorization, and the linear map
from nuisance-function values to per-row predicted responses.  Density
estimates, moment estimates and general estimating-equation solves are then
cheap repeated solves against different right-hand sides.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .condexp import CondExpModel, local_average_matrix
from .data import PooledDataset
from .errors import ConvergenceError
from .fredholm import FredholmSystem, NuisanceFunction, default_ridge, quantile_grid
from .kernels import BandwidthPolicy, KernelSpec, scaled_kernel_values

# Regularization regimes for the nuisance solve.  Localized right-hand
# sides (kernel bumps, for density functionals) need a solution basis fine
# enough to resolve the bump; smooth right-hand sides (moments, estimating
# equations) are best served by a coarse smooth basis.  "coefficient"
# penalizes the knot values; "response" penalizes the energy of the induced
# per-row predictions instead (available, not default).
SOLVE_MODES = {
    "density": {
        "dof_scale": 15.0, "dof_min": 40, "ridge_scale": 1e-2, "penalty": "coefficient",
    },
    "moment": {
        "dof_scale": 2.5, "dof_min": 8, "ridge_scale": 1e-2, "penalty": "coefficient",
    },
}


@dataclass(frozen=True)
class SolverConfig:
    """Damped-Newton settings for nonlinear estimating equations."""

    max_iter: int = 50
    tol: float = 1e-8
    max_halvings: int = 20

    def __post_init__(self):
        if self.max_iter < 1 or self.max_halvings < 0 or self.tol <= 0:
            raise ValueError("invalid solver configuration")


@dataclass
class DeltaResult:
    """Localized target-density estimates with their ingredients."""

    points: np.ndarray
    deltas: np.ndarray
    nuisance: NuisanceFunction
    responses: np.ndarray          # (rows, points) predicted responses
    residual_norm: float


@dataclass
class MomentResult:
    theta: float
    direct: float
    rectifier: float
    nuisance: NuisanceFunction             # reduced-form nuisance
    nuisance_general: NuisanceFunction     # nuisance of the general influence form
    responses: np.ndarray                  # (rows,) predicted responses
    residual_norm: float


@dataclass
class GeneralResult:
    theta: np.ndarray
    nuisance: NuisanceFunction
    b_values: np.ndarray                   # (rows, dim) predicted estimating function
    iterations: int
    equation_norm: float
    residual_norm: float


def sample_weights(data: PooledDataset, rho, condexp: CondExpModel) -> np.ndarray:
    """Inverse conditional second-moment weights for every pooled row."""
    shift = data.n_labeled / data.n_unlabeled

    def integrand(y):
        r = np.asarray(rho(y), dtype=float)
        return r * r + shift * r

    queries = np.arange(data.total) if condexp.query_by_index else data.x
    denom = condexp.expect_fn(integrand, queries)
    if np.any(denom <= 0):
        raise ValueError(
            "conditional expectation of the weight denominator is not positive; "
            "the density-ratio model is corrupt"
        )
    return 1.0 / denom


class EifEngine:
    """Precomputed influence-function machinery for one (data, rho, condexp)."""

    def __init__(
        self,
        data: PooledDataset,
        rho,
        condexp: CondExpModel,
        bandwidths: BandwidthPolicy = BandwidthPolicy(),
        kernel: KernelSpec = KernelSpec(),
        grid_points: int = 100,
        ridge_lambda: float | None = None,
        ridge_scale: float | None = None,
        eval_grid: np.ndarray | None = None,
        smooth_dof: int | None = None,
        mode: str = "moment",
        penalty: str | None = None,
    ):
        if mode not in SOLVE_MODES:
            raise ValueError(f"unknown solve mode {mode!r}")
        regime = SOLVE_MODES[mode]
        if penalty is None:
            penalty = regime["penalty"]
        self.data = data
        self.rho = rho
        self.condexp = condexp
        n = data.n_labeled
        self.spec_h = kernel.with_bandwidth(bandwidths.h(n))
        self.spec_l = kernel.with_bandwidth(bandwidths.l(n))
        self.shift = data.n_labeled / data.n_unlabeled

        self.y_lab = data.y_labeled
        self.rho_lab = np.asarray(rho(self.y_lab), dtype=float)
        if np.any(self.rho_lab <= 0):
            raise ValueError("density ratio must be positive at labeled outcomes")

        self.weights = sample_weights(data, rho, condexp)
        self.w_lab = self.weights[data.labeled]

        self.basis = np.unique(self.y_lab)
        self.grid = (
            quantile_grid(self.y_lab, grid_points)
            if eval_grid is None
            else np.unique(np.asarray(eval_grid, dtype=float))
        )
        self.smoother = local_average_matrix(self.grid, self.y_lab, self.spec_l)

        if condexp.query_by_index:
            self._q_lab = np.flatnonzero(data.labeled)
            self._q_all = np.arange(data.total)
        else:
            self._q_lab, self._q_all = data.x_labeled, data.x
        self.response_map = condexp.basis_map(self._q_all, self.basis, scale=rho)
        operator = (self.smoother * self.w_lab[None, :]) @ self.response_map[data.labeled]
        if smooth_dof is None:
            smooth_dof = max(regime["dof_min"], math.ceil(regime["dof_scale"] * n**0.25))
        smooth_dof = min(smooth_dof, self.basis.size)
        scale = regime["ridge_scale"] if ridge_scale is None else ridge_scale
        if penalty == "response" and ridge_lambda is None:
            # Penalize the energy of the labeled-row responses the solution
            # induces: solutions that fit the equation but oscillate across
            # rows are pure noise for the downstream estimator.
            from .condexp import interpolation_matrix

            knots = quantile_grid(self.basis, smooth_dof)
            proj = interpolation_matrix(self.basis, knots)
            resp_lab = self.response_map[data.labeled]
            b_eff = operator @ proj
            pen_eff = resp_lab @ proj
            denom = float(np.sum(pen_eff * pen_eff))
            lam = scale * float(np.sum(b_eff * b_eff)) / max(denom, 1e-300)
            self.system = FredholmSystem(
                self.grid, self.basis, operator, np.zeros((self.grid.size, 1)),
                lam, regularizer="seminorm", smooth_dof=smooth_dof,
                penalty_matrix=resp_lab,
            )
        else:
            if ridge_lambda is None:
                ridge_lambda = default_ridge(operator, scale)
            self.system = FredholmSystem(
                self.grid, self.basis, operator, np.zeros((self.grid.size, 1)),
                float(ridge_lambda), regularizer="smooth", smooth_dof=smooth_dof,
            )

    # -- building blocks ----------------------------------------------------

    def expect_fn(self, fn, labeled_only: bool = False) -> np.ndarray:
        q = self._q_lab if labeled_only else self._q_all
        return self.condexp.expect_fn(fn, q)

    def solve(self, rhs: np.ndarray) -> NuisanceFunction:
        return NuisanceFunction(self.basis, self.system.solve_columns(rhs))

    def responses(self, nuisance: NuisanceFunction) -> np.ndarray:
        """(rows, dim) array of w_i * E{a(Y) rho(Y) | row i}."""
        return self.weights[:, None] * (self.response_map @ nuisance.values)

    def solve_residual(self, nuisance: NuisanceFunction, rhs: np.ndarray) -> float:
        rhs = rhs if rhs.ndim == 2 else rhs[:, None]
        return float(np.linalg.norm(self.system.operator_matrix @ nuisance.values - rhs))

    # -- density estimation ---------------------------------------------------

    def delta_estimates(self, points) -> DeltaResult:
        """Estimates of the localized target-density functional at each point."""
        points = np.atleast_1d(np.asarray(points, dtype=float))
        rhs = scaled_kernel_values(self.spec_h, self.grid[:, None] - points[None, :])
        nuisance = self.solve(rhs)
        resp = self.responses(nuisance)
        kern_lab = scaled_kernel_values(self.spec_h, self.y_lab[:, None] - points[None, :])
        lab = self.data.labeled
        direct = resp[~lab].mean(axis=0)
        rect = np.mean(self.rho_lab[:, None] * (kern_lab - resp[lab]), axis=0)
        return DeltaResult(points, direct + rect, nuisance, resp, self.solve_residual(nuisance, rhs))

    # -- scalar moments --------------------------------------------------------

    def moment_estimate(self, s_fn, s_cross=None) -> MomentResult:
        """Estimate the target-population mean of s(Y) (or s(Y, X)).

        ``s_fn`` evaluates s at outcomes when s depends on y alone; for
        covariate-dependent moments supply ``s_cross(y_points, x_rows)``
        returning the (len(y), len(rows)) cross-evaluation used to smooth the
        right-hand side, and ``s_fn`` is ignored.
        """
        if s_cross is None:
            rhs = np.asarray(s_fn(self.grid), dtype=float)
            s_lab = np.asarray(s_fn(self.y_lab), dtype=float)
        else:
            rhs = np.sum(self.smoother * s_cross(self.grid, self.data.x_labeled), axis=1)
            cross_lab = np.asarray(s_cross(self.y_lab, self.data.x_labeled), dtype=float)
            s_lab = np.diagonal(cross_lab).copy()
        nuisance = self.solve(rhs)
        resp = self.responses(nuisance)[:, 0]
        lab = self.data.labeled
        direct = float(resp[~lab].mean())
        rect = float(np.mean(self.rho_lab * (s_lab - resp[lab])))
        theta = direct + rect

        if s_cross is None:
            gen_vals = (
                nuisance.values[:, 0]
                - np.asarray(s_fn(self.basis), dtype=float)
                * np.asarray(self.rho(self.basis), dtype=float)
                - theta * self.shift
            )
            nuisance_general = NuisanceFunction(self.basis, gen_vals)
        else:
            nuisance_general = nuisance
        return MomentResult(
            theta, direct, rect, nuisance, nuisance_general, resp,
            self.solve_residual(nuisance, rhs),
        )

    # -- general estimating equations -------------------------------------------

    def _u_rho2_expect(self, estimand, theta: np.ndarray) -> np.ndarray:
        """E{U(Y, x_i, theta) rho^2(Y) | x_i} for every pooled row, (rows, dim)."""
        if estimand.y_only:
            rho = self.rho

            def integrand(y):
                vals = estimand.u_rows(y, None, theta)
                r = np.asarray(rho(y), dtype=float)
                return vals * (r * r)[:, None]

            return self.expect_fn(integrand)
        anchors = getattr(self.condexp, "y", None)
        if anchors is None:
            anchors = getattr(self.condexp, "classes", None)
        weight_of = getattr(self.condexp, "weight_matrix", None)
        if anchors is None or (weight_of is None and not hasattr(self.condexp, "probs")):
            raise NotImplementedError(
                "covariate-dependent estimating functions need an anchor-based "
                "conditional-expectation model"
            )
        w = weight_of(self._q_all) if weight_of else self.condexp.probs[self._q_all]
        r2 = np.asarray(self.rho(anchors), dtype=float) ** 2
        cross = estimand.u_cross(anchors, self.data.x, theta)  # (anchors, rows, dim)
        return np.einsum("qa,aqd->qd", w * r2[None, :], cross)

    def equation_rhs(self, estimand, theta: np.ndarray) -> np.ndarray:
        """Right-hand side of the nuisance equation at the current theta."""
        if estimand.y_only:
            term1 = estimand.u_rows(self.grid, None, theta)
        else:
            cross = estimand.u_cross(self.grid, self.data.x_labeled, theta)
            term1 = np.einsum("ga,gad->gd", self.smoother, cross)
        expect = self._u_rho2_expect(estimand, theta)
        term2 = self.smoother @ (self.w_lab[:, None] * expect[self.data.labeled])
        return term1 - term2

    def predicted_equation(self, estimand, theta: np.ndarray, nuisance: NuisanceFunction) -> np.ndarray:
        """Predicted estimating-function values b(x_i) for every pooled row."""
        expect_u = self._u_rho2_expect(estimand, theta)
        return self.weights[:, None] * (expect_u + self.response_map @ nuisance.values)

    def equation_value(self, estimand, theta: np.ndarray):
        """Estimating-equation value, predicted components and nuisance at theta."""
        rhs = self.equation_rhs(estimand, theta)
        nuisance = self.solve(rhs)
        b_vals = self.predicted_equation(estimand, theta, nuisance)
        lab = self.data.labeled
        x_lab = None if estimand.y_only else self.data.x_labeled
        u_lab = estimand.u_rows(self.y_lab, x_lab, theta)
        value = b_vals[~lab].mean(axis=0) + np.mean(
            self.rho_lab[:, None] * (u_lab - b_vals[lab]), axis=0
        )
        return value, b_vals, nuisance, rhs

    def jacobian(self, estimand, theta: np.ndarray) -> np.ndarray:
        """Importance-weighted labeled-sample estimate of the target Jacobian."""
        x_lab = None if estimand.y_only else self.data.x_labeled
        jac = estimand.jac_rows(self.y_lab, x_lab, theta)
        return np.mean(self.rho_lab[:, None, None] * jac, axis=0)

    def _equation_jacobian(self, estimand, theta: np.ndarray, value: np.ndarray) -> np.ndarray:
        """Forward-difference Jacobian of the full estimating equation.

        The plug-in Jacobian ignores how the predicted estimating function
        responds to the parameter, which can stall the Newton iteration when
        the ratio model is off; differencing the equation itself restores a
        contraction.
        """
        d = theta.size
        jac = np.empty((d, d))
        for k in range(d):
            eps = 1e-6 * (1.0 + abs(theta[k]))
            shifted = theta.copy()
            shifted[k] += eps
            v_k, _, _, _ = self.equation_value(estimand, shifted)
            jac[:, k] = (v_k - value) / eps
        return jac

    def general_solve(
        self, estimand, theta0, solver: SolverConfig = SolverConfig()
    ) -> GeneralResult:
        """Damped-Newton solve of the rectified estimating equation."""
        theta = np.atleast_1d(np.asarray(theta0, dtype=float)).copy()
        value, b_vals, nuisance, rhs = self.equation_value(estimand, theta)
        norm = float(np.max(np.abs(value)))
        iterations = 0
        while norm > solver.tol * (1.0 + float(np.max(np.abs(theta)))):
            if iterations >= solver.max_iter:
                raise ConvergenceError(
                    f"estimating equation did not converge after {solver.max_iter} "
                    f"iterations (residual norm {norm:.3e}, theta {theta})",
                    last_iterate=theta,
                    residual_norm=norm,
                )
            jac = self._equation_jacobian(estimand, theta, value)
            try:
                step = np.linalg.solve(jac, value)
            except np.linalg.LinAlgError:
                # Fall back to the plug-in Jacobian of the target equation.
                try:
                    step = np.linalg.solve(self.jacobian(estimand, theta), value)
                except np.linalg.LinAlgError as exc:
                    raise ConvergenceError(
                        "singular Jacobian in the estimating-equation solve",
                        last_iterate=theta,
                        residual_norm=norm,
                    ) from exc
            scale = 1.0
            improved = False
            for _ in range(solver.max_halvings + 1):
                trial = theta - scale * step
                t_value, t_b, t_nuis, t_rhs = self.equation_value(estimand, trial)
                t_norm = float(np.max(np.abs(t_value)))
                if t_norm < norm:
                    improved = True
                    break
                scale *= 0.5
            if not improved:
                raise ConvergenceError(
                    f"no step reduces the estimating-equation residual "
                    f"(residual norm {norm:.3e}, theta {theta})",
                    last_iterate=theta,
                    residual_norm=norm,
                )
            theta, value, b_vals, nuisance, rhs, norm = trial, t_value, t_b, t_nuis, t_rhs, t_norm
            iterations += 1
        return GeneralResult(
            theta, nuisance, b_vals, iterations, norm, self.solve_residual(nuisance, rhs)
        )
