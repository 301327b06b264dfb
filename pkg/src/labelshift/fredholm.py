"""Discretized first-kind integral equation for the nuisance function.

The estimating machinery repeatedly needs a function a(y) satisfying

    local-average over labeled rows of  w_i * E{a(Y) s(Y) | x_i}  =  rhs(y)

imposed at grid points.  Representing a by its values at the distinct
labeled outcomes turns this into a dense linear system; first-kind equations
are ill-posed, so the solve is ridge-regularized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .condexp import CondExpModel, local_average_matrix
from .data import PooledDataset
from .errors import SingularSystemError
from .kernels import KernelSpec

DEFAULT_RIDGE_SCALE = 1e-6

# Singular values below this fraction of the largest are treated as zero
# when solving with no regularization.
_RCOND = 1e-12


@dataclass(frozen=True)
class NuisanceFunction:
    """Function represented by values on an increasing basis grid.

    Piecewise-linear between basis points, constant outside; one column per
    output dimension.
    """

    basis_points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        basis = np.asarray(self.basis_points, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if basis.ndim != 1 or basis.size != values.shape[0]:
            raise ValueError("basis and values must agree in length")
        if basis.size > 1 and np.any(np.diff(basis) <= 0):
            raise ValueError("basis points must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("nuisance values must be finite")
        object.__setattr__(self, "basis_points", basis)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        cols = [np.interp(y, self.basis_points, self.values[:, k]) for k in range(self.dim)]
        out = np.stack(cols, axis=-1)
        return out[..., 0] if self.dim == 1 else out


@dataclass
class FredholmSystem:
    """Assembled linear system for the nuisance function.

    ``operator_matrix`` has one row per evaluation-grid point and one column
    per basis point; ``rhs`` has matching rows and one column per output
    dimension of the unknown.

    ``regularizer`` selects how ill-posedness is handled: "ridge" shrinks
    the basis values directly; "smooth" restricts the solution to
    piecewise-linear interpolants of ``smooth_dof`` coarse quantile knots
    (with a light ridge on the knot values); "seminorm" additionally
    replaces the ridge by a generalized Tikhonov penalty
    ||penalty_matrix a||^2, used by the pipelines to shrink the energy of
    the induced per-row responses rather than the solution values.  The
    smooth restriction recovers the smooth solutions the theory posits
    without the noise a 1-per-observation parameterization admits.
    """

    eval_grid: np.ndarray
    basis_points: np.ndarray
    operator_matrix: np.ndarray
    rhs: np.ndarray
    ridge_lambda: float
    regularizer: str = "ridge"
    smooth_dof: int | None = None
    penalty_matrix: np.ndarray | None = None

    _solver: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.eval_grid = np.asarray(self.eval_grid, dtype=float)
        self.basis_points = np.asarray(self.basis_points, dtype=float)
        self.operator_matrix = np.asarray(self.operator_matrix, dtype=float)
        rhs = np.asarray(self.rhs, dtype=float)
        if rhs.ndim == 1:
            rhs = rhs[:, None]
        self.rhs = rhs
        m, b = self.operator_matrix.shape
        if m != self.eval_grid.size or b != self.basis_points.size:
            raise ValueError("operator dimensions inconsistent with grids")
        if rhs.shape[0] != m:
            raise ValueError("rhs rows must match the evaluation grid")
        if self.eval_grid.size > 1 and np.any(np.diff(self.eval_grid) <= 0):
            raise ValueError("eval_grid must be strictly increasing")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be nonnegative")
        if self.regularizer not in ("ridge", "smooth", "seminorm"):
            raise ValueError("regularizer must be 'ridge', 'smooth' or 'seminorm'")
        if self.regularizer in ("smooth", "seminorm") and (
            self.smooth_dof is None or self.smooth_dof < 2
        ):
            raise ValueError(f"{self.regularizer} regularizer needs smooth_dof >= 2")
        if self.regularizer == "seminorm" and self.penalty_matrix is None:
            raise ValueError("seminorm regularizer needs a penalty matrix")

    def factor(self):
        """Cache and return the factorization used by ``solve_columns``."""
        if self._solver is None:
            m = self.operator_matrix
            if self.regularizer == "seminorm":
                from .condexp import interpolation_matrix

                knots = quantile_grid(self.basis_points, self.smooth_dof)
                proj = interpolation_matrix(self.basis_points, knots)
                b = m @ proj
                pen = np.asarray(self.penalty_matrix, dtype=float) @ proj
                normal = b.T @ b + self.ridge_lambda * (pen.T @ pen)
                try:
                    cho = np.linalg.cholesky(normal)
                except np.linalg.LinAlgError as exc:
                    raise SingularSystemError(
                        "seminorm-regularized system is singular; increase "
                        "ridge_lambda or reduce smooth_dof"
                    ) from exc
                self._solver = ("chol", (proj, b, cho))
            elif self.regularizer == "smooth":
                knots = quantile_grid(self.basis_points, self.smooth_dof)
                from .condexp import interpolation_matrix

                proj = interpolation_matrix(self.basis_points, knots)
                u, s, vt = np.linalg.svd(m @ proj, full_matrices=False)
                self._solver = ("svd", (proj, u, s, vt))
            else:
                u, s, vt = np.linalg.svd(m, full_matrices=False)
                self._solver = ("svd", (None, u, s, vt))
        return self._solver

    def solve_columns(self, rhs: np.ndarray) -> np.ndarray:
        """Regularized solution for an arbitrary right-hand side (rows = grid)."""
        kind, fac = self.factor()
        rhs = np.asarray(rhs, dtype=float)
        squeeze = rhs.ndim == 1
        if squeeze:
            rhs = rhs[:, None]
        if kind == "chol":
            proj, b, cho = fac
            coef = np.linalg.solve(cho.T, np.linalg.solve(cho, b.T @ rhs))
            sol = proj @ coef
        else:
            proj, u, s, vt = fac
            if self.ridge_lambda == 0.0:
                smax = s[0] if s.size else 0.0
                if smax == 0.0 or s[-1] < _RCOND * smax:
                    raise SingularSystemError(
                        "operator is numerically singular with no regularization; "
                        "set ridge_lambda > 0"
                    )
                filt = 1.0 / s
            else:
                filt = s / (s**2 + self.ridge_lambda)
            sol = vt.T @ (filt[:, None] * (u.T @ rhs))
            if proj is not None:
                sol = proj @ sol
        return sol[:, 0] if squeeze else sol

    def residual_norm(self, solution: np.ndarray) -> float:
        sol = np.asarray(solution, dtype=float)
        if sol.ndim == 1:
            sol = sol[:, None]
        return float(np.linalg.norm(self.operator_matrix @ sol - self.rhs))


def default_ridge(operator: np.ndarray, scale: float = DEFAULT_RIDGE_SCALE) -> float:
    """Default Tikhonov strength, scale * trace(M'M) / columns."""
    m = np.asarray(operator, dtype=float)
    return float(scale * np.sum(m * m) / m.shape[1])


def quantile_grid(y_labeled: np.ndarray, points: int = 100) -> np.ndarray:
    """Deduplicated quantile grid of the labeled outcomes."""
    y = np.asarray(y_labeled, dtype=float)
    levels = np.linspace(0.0, 1.0, min(points, y.size))
    return np.unique(np.quantile(y, levels))


def assemble_system(
    data: PooledDataset,
    rho: Callable[[np.ndarray], np.ndarray],
    condexp: CondExpModel,
    weights: np.ndarray,
    rhs_fn: Callable[[np.ndarray], np.ndarray],
    spec_l: KernelSpec,
    ridge_lambda: float | None = None,
    eval_grid: np.ndarray | None = None,
) -> FredholmSystem:
    """Assemble the discretized integral equation on a labeled-outcome grid.

    ``weights`` are the per-row sample weights (length = total rows); only
    the labeled entries enter the operator.  ``rhs_fn`` maps grid points to
    right-hand-side rows.  ``ridge_lambda`` of None selects the default
    trace-scaled strength.
    """
    y_lab = data.y_labeled
    weights = np.asarray(weights, dtype=float)
    if weights.size != data.total:
        raise ValueError("weights must have one entry per dataset row")
    basis = np.unique(y_lab)
    grid = quantile_grid(y_lab) if eval_grid is None else np.asarray(eval_grid, dtype=float)
    w_lab = weights[data.labeled]
    rho_lab = np.asarray(rho(y_lab), dtype=float)
    if np.any(rho_lab <= 0):
        raise ValueError("density ratio must be positive at labeled outcomes")

    smoother = local_average_matrix(grid, y_lab, spec_l)
    queries = np.flatnonzero(data.labeled) if condexp.query_by_index else data.x_labeled
    cond_map = condexp.basis_map(queries, basis, scale=rho)
    operator = (smoother * w_lab[None, :]) @ cond_map

    rhs = np.asarray(rhs_fn(grid), dtype=float)
    lam = default_ridge(operator) if ridge_lambda is None else float(ridge_lambda)
    return FredholmSystem(grid, basis, operator, rhs, lam)


def solve(system: FredholmSystem) -> NuisanceFunction:
    """Ridge least-squares solution of the assembled system."""
    sol = system.solve_columns(system.rhs)
    return NuisanceFunction(system.basis_points, sol)
