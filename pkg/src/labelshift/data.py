"""Pooled source/target dataset container."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataValidationError


@dataclass(frozen=True)
class PooledDataset:
    """Labeled source rows pooled with unlabeled target rows.

    ``labeled`` marks source rows (outcome observed); ``y`` must be finite on
    those rows and is ignored (may be NaN) elsewhere.  ``x`` holds the
    covariates for every row.
    """

    labeled: np.ndarray
    y: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        labeled = np.asarray(self.labeled, dtype=bool)
        y = np.asarray(self.y, dtype=float)
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        if x.shape[0] != labeled.size or y.size != labeled.size:
            raise DataValidationError("labeled, y and x must agree in length")
        n = int(labeled.sum())
        if n == 0:
            raise DataValidationError("dataset has no labeled rows")
        if n == labeled.size:
            raise DataValidationError("dataset has no unlabeled rows")
        if not np.all(np.isfinite(y[labeled])):
            raise DataValidationError("labeled rows must have finite outcomes")
        if not np.all(np.isfinite(x)):
            raise DataValidationError("covariates must be finite")
        object.__setattr__(self, "labeled", labeled)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        for arr in (labeled, y, x):
            arr.setflags(write=False)

    @property
    def total(self) -> int:
        """Total number of rows (labeled + unlabeled)."""
        return self.labeled.size

    @property
    def n_labeled(self) -> int:
        return int(self.labeled.sum())

    @property
    def n_unlabeled(self) -> int:
        return self.total - self.n_labeled

    @property
    def pi(self) -> float:
        """Labeled fraction of the pooled sample."""
        return self.n_labeled / self.total

    @property
    def y_labeled(self) -> np.ndarray:
        return self.y[self.labeled]

    @property
    def x_labeled(self) -> np.ndarray:
        return self.x[self.labeled]

    @property
    def x_unlabeled(self) -> np.ndarray:
        return self.x[~self.labeled]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def permuted(self, order: np.ndarray) -> "PooledDataset":
        """Row-permuted copy (estimates must be invariant to this)."""
        order = np.asarray(order, dtype=int)
        return PooledDataset(self.labeled[order].copy(), self.y[order].copy(), self.x[order].copy())


def make_dataset(y_labeled, x_labeled, x_unlabeled) -> PooledDataset:
    """Assemble a pooled dataset from separate source and target pieces."""
    y_labeled = np.asarray(y_labeled, dtype=float)
    x_labeled = np.atleast_2d(np.asarray(x_labeled, dtype=float))
    x_unlabeled = np.atleast_2d(np.asarray(x_unlabeled, dtype=float))
    n, m = x_labeled.shape[0], x_unlabeled.shape[0]
    labeled = np.concatenate([np.ones(n, dtype=bool), np.zeros(m, dtype=bool)])
    y = np.concatenate([y_labeled, np.full(m, np.nan)])
    x = np.vstack([x_labeled, x_unlabeled])
    return PooledDataset(labeled, y, x)
