"""Kernel functions, kernel density estimation and local averaging.

Provides the one-dimensional smoothing kernels used for density estimation
and for local (Nadaraya-Watson) conditional-expectation estimates, together
with the bandwidth schedules used throughout the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SupportError

# Kernel evaluations below this magnitude are treated as exactly zero to
# avoid denormal slowdowns in the hot weight-matrix loops.
_UNDERFLOW = 1e-300

# Nadaraya-Watson denominators below this are treated as "no data nearby".
_NW_DENOM_FLOOR = 1e-12

_SQRT_2PI = math.sqrt(2.0 * math.pi)

# Polynomial factors p(u) such that p(u) * phi(u) is a kernel of order m
# (Gaussian-based higher-order construction).
_GAUSSIAN_ORDER_POLY = {
    2: (1.0,),
    4: (1.5, -0.5),          # (3 - u^2) / 2
    6: (1.875, -1.25, 0.125),  # (15 - 10 u^2 + u^4) / 8
}


@dataclass(frozen=True)
class KernelSpec:
    """A smoothing kernel with its order and bandwidth.

    family: "gaussian", "epanechnikov" or "higher_order_gaussian".
    order:  number of vanishing moments (even, >= 2); only the
            higher-order Gaussian family supports order > 2.
    bandwidth: positive smoothing bandwidth.
    """

    family: str = "gaussian"
    order: int = 2
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.family not in ("gaussian", "epanechnikov", "higher_order_gaussian"):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.order < 2 or self.order % 2 != 0:
            raise ValueError("kernel order must be an even integer >= 2")
        if self.family != "higher_order_gaussian" and self.order != 2:
            raise ValueError(f"{self.family} kernel only supports order 2")
        if self.family == "higher_order_gaussian" and self.order not in _GAUSSIAN_ORDER_POLY:
            raise ValueError(
                f"higher_order_gaussian supports orders {sorted(_GAUSSIAN_ORDER_POLY)}"
            )

    def with_bandwidth(self, bandwidth: float) -> "KernelSpec":
        return KernelSpec(self.family, self.order, float(bandwidth))

    def validate_moments(self, tol: float = 1e-4, integral_tol: float = 1e-6) -> None:
        """Numerically confirm unit mass and the vanishing-moment structure."""
        grid = np.linspace(-10.0, 10.0, 40001)
        vals = kernel_values(self, grid)
        mass = np.trapezoid(vals, grid)
        if abs(mass - 1.0) > integral_tol:
            raise ValueError(f"kernel mass {mass} deviates from 1 beyond {integral_tol}")
        for j in range(1, self.order):
            moment = np.trapezoid(grid**j * vals, grid)
            if abs(moment) > tol:
                raise ValueError(f"moment {j} = {moment} exceeds {tol}")


@dataclass(frozen=True)
class BandwidthPolicy:
    """Sample-size-driven bandwidth schedule, constant * n**exponent.

    Three bandwidths are scheduled: ``h`` for density-style smoothing of the
    outcome, ``l`` for local averaging over the outcome, and ``nw`` for the
    covariate kernel of the conditional-expectation model.
    """

    h_constant: float = 0.5
    h_exponent: float = -1.0 / 16.0
    l_constant: float = 1.5
    l_exponent: float = -1.0 / 3.0
    nw_constant: float = 3.0
    nw_exponent: float = -1.0 / 7.0

    def __post_init__(self):
        for name in ("h", "l", "nw"):
            c = getattr(self, f"{name}_constant")
            e = getattr(self, f"{name}_exponent")
            if c <= 0:
                raise ValueError(f"{name}_constant must be positive")
            if not -1.0 < e < 0.0:
                raise ValueError(f"{name}_exponent must lie in (-1, 0)")

    def h(self, n: int) -> float:
        return self.h_constant * n**self.h_exponent

    def l(self, n: int) -> float:
        return self.l_constant * n**self.l_exponent

    def nw(self, n: int) -> float:
        return self.nw_constant * n**self.nw_exponent


def kernel_values(spec: KernelSpec, u: np.ndarray) -> np.ndarray:
    """Evaluate the kernel at an array of points."""
    u = np.asarray(u, dtype=float)
    if spec.family == "epanechnikov":
        out = 0.75 * (1.0 - u * u)
        out[np.abs(u) > 1.0] = 0.0
    else:
        out = np.exp(-0.5 * u * u) / _SQRT_2PI
        if spec.family == "higher_order_gaussian":
            poly = _GAUSSIAN_ORDER_POLY[spec.order]
            factor = np.zeros_like(u)
            for k, coef in enumerate(poly):
                factor += coef * u ** (2 * k)
            out = out * factor
    out[np.abs(out) < _UNDERFLOW] = 0.0
    return out


def kernel_eval(spec: KernelSpec, u: float) -> float:
    """Evaluate the kernel at a single point."""
    return float(kernel_values(spec, np.array([u]))[0])


def scaled_kernel_values(spec: KernelSpec, diffs: np.ndarray) -> np.ndarray:
    """Evaluate K(d / bandwidth) / bandwidth for an array of differences."""
    return kernel_values(spec, np.asarray(diffs, dtype=float) / spec.bandwidth) / spec.bandwidth


def kde(samples, y0: float, spec: KernelSpec) -> float:
    """Kernel density estimate at ``y0`` from a one-dimensional sample."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("kde requires at least one sample")
    return float(np.mean(scaled_kernel_values(spec, samples - y0)))


def kde_values(samples: np.ndarray, points: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Kernel density estimate evaluated at many points at once."""
    samples = np.asarray(samples, dtype=float)
    points = np.asarray(points, dtype=float)
    if samples.size == 0:
        raise ValueError("kde requires at least one sample")
    diffs = points[:, None] - samples[None, :]
    return scaled_kernel_values(spec, diffs).mean(axis=1)


def local_average_weights(
    queries: np.ndarray, anchors: np.ndarray, spec: KernelSpec, label: str = "query"
) -> np.ndarray:
    """Row-normalized kernel weights of each query point over the anchors.

    Raises SupportError for any query whose total kernel mass underflows,
    naming the offending point.
    """
    queries = np.asarray(queries, dtype=float)
    anchors = np.asarray(anchors, dtype=float)
    raw = scaled_kernel_values(spec, queries[:, None] - anchors[None, :])
    denom = raw.sum(axis=1)
    bad = np.flatnonzero(denom < _NW_DENOM_FLOOR)
    if bad.size:
        raise SupportError(
            f"{label} {queries[bad[0]]:g} is outside the data support "
            "(all kernel weights vanish)"
        )
    return raw / denom[:, None]


def nw_regress(anchors, query: float, spec: KernelSpec) -> np.ndarray:
    """Nadaraya-Watson local average of vector values attached to anchors.

    ``anchors`` is a sequence of (y, value) pairs; returns the kernel-weighted
    average of the values at ``query``.
    """
    ys = np.array([a[0] for a in anchors], dtype=float)
    vals = np.array([np.atleast_1d(a[1]) for a in anchors], dtype=float)
    weights = local_average_weights(np.array([query]), ys, spec)[0]
    return weights @ vals


def radial_weights(
    queries: np.ndarray,
    anchors: np.ndarray,
    bandwidth: float,
    family: str = "epanechnikov",
) -> np.ndarray:
    """Row-normalized radial kernel weights on Euclidean distance.

    Used for conditional-expectation smoothing over a multivariate covariate.
    With the compact Epanechnikov kernel a query can fall outside every
    anchor's reach; such queries fall back to their nearest anchor, keeping
    the smoother defined (if noisy) at the fringe of the data.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    if queries.shape[1] != anchors.shape[1]:
        raise ValueError(
            f"covariate dimension mismatch: query has {queries.shape[1]}, "
            f"anchors have {anchors.shape[1]}"
        )
    sq = (
        np.sum(queries**2, axis=1)[:, None]
        + np.sum(anchors**2, axis=1)[None, :]
        - 2.0 * queries @ anchors.T
    )
    np.maximum(sq, 0.0, out=sq)
    if family == "gaussian":
        raw = np.exp(-0.5 * sq / bandwidth**2)
        raw[raw < _UNDERFLOW] = 0.0
    elif family == "epanechnikov":
        raw = 1.0 - sq / bandwidth**2
        np.maximum(raw, 0.0, out=raw)
    else:
        raise ValueError(f"unknown covariate kernel family {family!r}")
    denom = raw.sum(axis=1)
    empty = denom < _NW_DENOM_FLOOR
    if np.any(empty):
        if family == "gaussian":
            raise SupportError(
                f"covariate query at row {int(np.flatnonzero(empty)[0])} is "
                "outside the data support"
            )
        nearest = np.argmin(sq[empty], axis=1)
        raw[empty] = 0.0
        raw[np.flatnonzero(empty), nearest] = 1.0
        denom = raw.sum(axis=1)
    return raw / denom[:, None]
