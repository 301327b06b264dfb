"""Density-ratio models: closed-form working models and grid estimates.

A density-ratio model is a positive function of the outcome, either given in
closed form or represented by values on a knot grid with piecewise-linear
interpolation (constant beyond the outermost knots).  Values are floored at
``clip_floor`` so the ratio stays bounded away from zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

DEFAULT_CLIP_FLOOR = 1e-3


@dataclass(frozen=True)
class DensityRatioModel:
    """Positive outcome density ratio (target over source).

    Exactly one of ``fn`` (closed form) or ``knots``/``values`` (grid) is set.
    ``diagnostics`` carries estimation by-products such as raw unclipped knot
    values; it never affects evaluation.
    """

    fn: Callable[[np.ndarray], np.ndarray] | None = None
    knots: np.ndarray | None = None
    values: np.ndarray | None = None
    clip_floor: float = DEFAULT_CLIP_FLOOR
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.clip_floor <= 0:
            raise ValueError("clip_floor must be positive")
        if (self.fn is None) == (self.knots is None):
            raise ValueError("provide either a closed form or a knot grid")
        if self.knots is not None:
            knots = np.asarray(self.knots, dtype=float)
            values = np.asarray(self.values, dtype=float)
            if knots.ndim != 1 or knots.size != values.size:
                raise ValueError("knots and values must be 1-d and equal length")
            if knots.size < 2 or np.any(np.diff(knots) <= 0):
                raise ValueError("knots must be strictly increasing (>= 2 points)")
            if not np.all(np.isfinite(values)):
                raise ValueError("grid values must be finite")
            values = np.maximum(values, self.clip_floor)
            object.__setattr__(self, "knots", knots)
            object.__setattr__(self, "values", values)
            knots.setflags(write=False)
            values.setflags(write=False)

    @property
    def kind(self) -> str:
        return "closed-form" if self.fn is not None else "grid"

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.fn is not None:
            out = np.asarray(self.fn(y), dtype=float)
        else:
            out = np.interp(y, self.knots, self.values)
        return np.maximum(out, self.clip_floor)


def constant_ratio(value: float = 1.0, clip_floor: float = DEFAULT_CLIP_FLOOR) -> DensityRatioModel:
    """The trivial no-shift ratio model."""
    return DensityRatioModel(fn=lambda y: np.full_like(np.asarray(y, dtype=float), value), clip_floor=clip_floor)


@dataclass(frozen=True)
class RatioGridPlan:
    """Where a grid ratio estimate places its knots.

    ``num_points`` of None means the sample-size default
    max(3, ceil(1.5 * n ** 0.25)); placement spreads knots over the labeled
    outcome range between the ``lo_quantile`` and ``hi_quantile`` empirical
    quantiles, either at evenly spaced values ("uniform", the default,
    covering the whole observed support) or at evenly spaced quantile levels
    ("quantile").
    """

    num_points: int | None = None
    placement: str = "uniform"
    lo_quantile: float = 0.0
    hi_quantile: float = 1.0

    def __post_init__(self):
        if self.num_points is not None and self.num_points < 3:
            raise ValueError("num_points must be at least 3")
        if self.placement not in ("quantile", "uniform"):
            raise ValueError("placement must be 'quantile' or 'uniform'")
        if not 0.0 <= self.lo_quantile < self.hi_quantile <= 1.0:
            raise ValueError("quantile bounds must satisfy 0 <= lo < hi <= 1")

    def resolve_count(self, n: int) -> int:
        if self.num_points is not None:
            return self.num_points
        return max(3, math.ceil(1.5 * n**0.25))

    def knots(self, y_labeled: np.ndarray) -> np.ndarray:
        y = np.asarray(y_labeled, dtype=float)
        m = self.resolve_count(y.size)
        if self.placement == "quantile":
            levels = np.linspace(self.lo_quantile, self.hi_quantile, m)
            pts = np.quantile(y, levels)
        else:
            lo, hi = np.quantile(y, [self.lo_quantile, self.hi_quantile])
            pts = np.linspace(lo, hi, m)
        return np.unique(pts)


@dataclass(frozen=True)
class DiscreteRatio:
    """Density ratio over a finite label set."""

    classes: np.ndarray
    values: np.ndarray
    clip_floor: float = DEFAULT_CLIP_FLOOR

    def __post_init__(self):
        classes = np.asarray(self.classes)
        values = np.asarray(self.values, dtype=float)
        if classes.size < 2:
            raise ValueError("need at least two classes")
        if classes.size != values.size:
            raise ValueError("classes and values must have equal length")
        order = np.argsort(classes)
        classes = classes[order]
        values = np.maximum(values[order], self.clip_floor)
        if np.unique(classes).size != classes.size:
            raise ValueError("classes must be distinct")
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "values", values)

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y)
        idx = np.searchsorted(self.classes, y)
        idx = np.clip(idx, 0, self.classes.size - 1)
        if not np.all(self.classes[idx] == y):
            raise ValueError("ratio queried at a label outside the class set")
        return self.values[idx]

    def as_continuous(self, clip_floor: float | None = None) -> DensityRatioModel:
        """View the discrete ratio as a piecewise-linear model on the classes."""
        return DensityRatioModel(
            knots=np.asarray(self.classes, dtype=float),
            values=self.values.copy(),
            clip_floor=clip_floor if clip_floor is not None else self.clip_floor,
        )
