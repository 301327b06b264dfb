"""Conditional-expectation models for the outcome given covariates.

Every model estimates the source-population operator g -> E{g(Y) | x} and
exposes two views of it:

* ``expect_fn``  -- apply the operator to an arbitrary function of y;
* ``basis_map``  -- the operator restricted to functions represented by
  values on a fixed basis grid (piecewise-linear in between), returned as a
  dense matrix.  This linearization is what lets the integral-equation
  assembly treat the unknown nuisance function as a finite vector.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import DataValidationError
from .kernels import KernelSpec, local_average_weights, radial_weights


def interpolation_matrix(points: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Dense matrix L with L @ values = piecewise-linear interpolant at points.

    Constant extrapolation outside the basis range, matching how nuisance
    functions are evaluated elsewhere.
    """
    points = np.asarray(points, dtype=float)
    basis = np.asarray(basis, dtype=float)
    m, b = points.size, basis.size
    out = np.zeros((m, b))
    if b == 1:
        out[:, 0] = 1.0
        return out
    idx = np.clip(np.searchsorted(basis, points, side="right") - 1, 0, b - 2)
    left = basis[idx]
    right = basis[idx + 1]
    frac = np.clip((points - left) / (right - left), 0.0, 1.0)
    rows = np.arange(m)
    np.add.at(out, (rows, idx), 1.0 - frac)
    np.add.at(out, (rows, idx + 1), frac)
    return out


class CondExpModel:
    """Base class; see module docstring for the two operator views."""

    # When True the model is queried with dataset row indices instead of
    # covariate rows (used by models holding precomputed per-row tables).
    query_by_index = False

    def expect_fn(self, fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
        """E{fn(Y) | x} for each query row; fn must be numpy-vectorized."""
        raise NotImplementedError

    def basis_map(
        self,
        x: np.ndarray,
        basis: np.ndarray,
        scale: Callable[[np.ndarray], np.ndarray] | None = None,
    ) -> np.ndarray:
        """Matrix M with (M @ a)[q] = E{a(Y) * s(Y) | x_q} for a on the basis.

        ``scale`` is the function s, evaluated wherever the model evaluates
        integrands; pass None for s = 1.
        """
        raise NotImplementedError


class NadarayaWatsonCondExp(CondExpModel):
    """Kernel-smoothed conditional expectation over the labeled sample.

    Uses a radial Gaussian kernel on the Euclidean distance between
    covariates, one shared bandwidth.  Integrands are evaluated at the
    labeled outcomes, so the operator is an exact linear map on those values.
    """

    def __init__(self, y: np.ndarray, x: np.ndarray, bandwidth: float, family: str = "gaussian"):
        self.y = np.asarray(y, dtype=float)
        self.x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.y.size != self.x.shape[0]:
            raise DataValidationError("y and x must have the same number of rows")
        if self.y.size == 0:
            raise DataValidationError("conditional-expectation fit needs data")
        if bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        self.bandwidth = float(bandwidth)
        self.family = family
        # Weight matrices keyed by id of the query array; the array itself is
        # kept alive in the cache so ids cannot be recycled underneath us.
        self._weights_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def weight_matrix(self, x: np.ndarray) -> np.ndarray:
        cached = self._weights_cache.get(id(x))
        if cached is not None:
            return cached[1]
        w = radial_weights(x, self.x, self.bandwidth, self.family)
        self._weights_cache[id(x)] = (x, w)
        return w

    def expect_fn(self, fn, x):
        vals = np.asarray(fn(self.y), dtype=float)
        return self.weight_matrix(x) @ vals

    def basis_map(self, x, basis, scale=None):
        w = self.weight_matrix(x)
        if scale is not None:
            w = w * np.asarray(scale(self.y), dtype=float)[None, :]
        return w @ interpolation_matrix(self.y, basis)

    def anchor_values(self, fn) -> np.ndarray:
        """fn evaluated at the labeled outcomes (the operator's anchor points)."""
        return np.asarray(fn(self.y), dtype=float)


class NormalWorkingCondExp(CondExpModel):
    """Conditional expectation under a fitted normal regression model.

    The outcome given covariates is modeled as N(design(x) @ beta, sigma2);
    expectations are computed by Gauss-Hermite quadrature, so integrands are
    evaluated at per-query quadrature nodes.
    """

    def __init__(
        self,
        design: Callable[[np.ndarray], np.ndarray],
        beta: np.ndarray,
        sigma2: float,
        nodes: int = 40,
    ):
        if sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        self.design = design
        self.beta = np.asarray(beta, dtype=float)
        self.sigma2 = float(sigma2)
        t, w = np.polynomial.hermite.hermgauss(nodes)
        self._gh_nodes = t
        self._gh_weights = w / np.sqrt(np.pi)

    def mean(self, x: np.ndarray) -> np.ndarray:
        features = np.atleast_2d(self.design(np.atleast_2d(np.asarray(x, dtype=float))))
        return features @ self.beta

    def _quad_points(self, x) -> np.ndarray:
        mu = self.mean(x)
        sd = np.sqrt(2.0 * self.sigma2)
        return mu[:, None] + sd * self._gh_nodes[None, :]

    def expect_fn(self, fn, x):
        pts = self._quad_points(x)
        vals = np.asarray(fn(pts.ravel()), dtype=float)
        if vals.ndim == 1:
            return vals.reshape(pts.shape) @ self._gh_weights
        return np.einsum(
            "qkd,k->qd", vals.reshape(pts.shape + (vals.shape[-1],)), self._gh_weights
        )

    def basis_map(self, x, basis, scale=None):
        pts = self._quad_points(x)
        q, k = pts.shape
        interp = interpolation_matrix(pts.ravel(), basis)
        w = np.repeat(self._gh_weights[None, :], q, axis=0).ravel()
        if scale is not None:
            w = w * np.asarray(scale(pts.ravel()), dtype=float)
        out = (interp * w[:, None]).reshape(q, k, -1).sum(axis=1)
        return out


class ClassProbCondExp(CondExpModel):
    """Conditional expectation from per-row class probabilities.

    Suits discrete outcomes whose posterior class probabilities come from an
    upstream classifier (for example a softmax layer).  Rows are addressed by
    dataset row index, in the order the probability table was supplied.
    """

    query_by_index = True

    def __init__(self, classes: np.ndarray, probs: np.ndarray):
        self.classes = np.asarray(classes, dtype=float)
        self.probs = np.atleast_2d(np.asarray(probs, dtype=float))
        if self.probs.shape[1] != self.classes.size:
            raise DataValidationError("probability columns must match classes")
        if np.any(self.probs < 0):
            raise DataValidationError("class probabilities must be nonnegative")
        rows = self.probs.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-6):
            raise DataValidationError("class probabilities must sum to one per row")

    def expect_fn(self, fn, x):
        vals = np.asarray(fn(self.classes), dtype=float)
        return self.probs[np.asarray(x, dtype=int)] @ vals

    def basis_map(self, x, basis, scale=None):
        w = self.probs[np.asarray(x, dtype=int)]
        if scale is not None:
            w = w * np.asarray(scale(self.classes), dtype=float)[None, :]
        return w @ interpolation_matrix(self.classes, basis)


def fit_cond_exp_nonparametric(labeled, spec: KernelSpec) -> NadarayaWatsonCondExp:
    """Fit the kernel-smoothed conditional-expectation model on labeled pairs.

    ``labeled`` is a sequence of (y, x) pairs or a (y_array, x_matrix) tuple;
    the kernel spec supplies the covariate bandwidth.
    """
    if isinstance(labeled, tuple) and len(labeled) == 2:
        y, x = labeled
    else:
        pairs = list(labeled)
        if not pairs:
            raise DataValidationError("need at least one labeled observation")
        y = np.array([p[0] for p in pairs], dtype=float)
        x = np.array([np.atleast_1d(p[1]) for p in pairs], dtype=float)
    family = "epanechnikov" if spec.family == "epanechnikov" else "gaussian"
    return NadarayaWatsonCondExp(
        np.asarray(y, dtype=float), np.asarray(x, dtype=float), spec.bandwidth, family
    )


def local_average_matrix(grid: np.ndarray, y: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Row-normalized kernel weights of grid points over labeled outcomes."""
    return local_average_weights(grid, y, spec, label="grid point")
