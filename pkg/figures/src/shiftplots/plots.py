"""Figures from study output CSVs.

Two figure kinds are supported, matching the CSV files the estimation CLI
writes: pointwise density-ratio bands from ``rho_curves.csv`` (columns
replicate, y, rho_star, rho_tilde, rho_hat and optionally rho_true) and
estimator boxplots from ``raw_estimates.csv`` (columns replicate,
estimator, estimate, sd, ci_lo, ci_hi).  Rendering is deterministic so a
rerun reproduces the image byte for byte.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SERIES_LABELS = {
    "rho_star": "working model",
    "rho_tilde": "consistent estimate",
    "rho_hat": "refined estimate",
}
SERIES_COLORS = {
    "rho_star": "#888888",
    "rho_tilde": "#1f77b4",
    "rho_hat": "#d62728",
}


class SchemaError(ValueError):
    """Raised when an input CSV does not carry the expected columns."""


@dataclass
class FigureJob:
    """One figure request: where to read, what to draw, where to write."""

    input_path: str
    kind: str  # "rho-band" | "boxplot"
    output_path: str
    band_level: float = 0.90
    reference: float | None = None
    estimators: tuple = ()
    title: str | None = None
    dpi: int = 150
    figsize: tuple = (7.0, 4.5)

    def __post_init__(self):
        if self.kind not in ("rho-band", "boxplot"):
            raise ValueError(f"unknown figure kind {self.kind!r}")
        if not 0.0 < self.band_level < 1.0:
            raise ValueError("band_level must lie in (0, 1)")


@dataclass
class RhoBandResult:
    """Computed band summaries for the rendered ratio figure."""

    output_path: str
    y: np.ndarray
    band_widths: dict = field(default_factory=dict)  # series -> mean width

    def width_ratio(self, numerator="rho_hat", denominator="rho_tilde") -> float:
        return self.band_widths[numerator] / self.band_widths[denominator]


def _read_csv(path):
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"input file not found: {path}")
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = list(reader)
    return [h.strip() for h in header], rows


def _require(header, needed, path):
    missing = [c for c in needed if c not in header]
    if missing:
        raise SchemaError(
            f"{path}: missing columns {missing}; expected at least {needed}"
        )


def _save(fig, job: FigureJob) -> None:
    out = Path(job.output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    kwargs = {"dpi": job.dpi}
    if out.suffix == ".svg":
        # pin the id salt so vector output is reproducible
        matplotlib.rcParams["svg.hashsalt"] = "shiftplots"
        kwargs["metadata"] = {"Date": None}
    else:
        kwargs["metadata"] = {"Software": "shiftplots"}
    fig.savefig(out, **kwargs)
    plt.close(fig)


def plot_rho_band(job: FigureJob) -> RhoBandResult:
    """Mean ratio curves with pointwise empirical confidence bands.

    One line and band per estimate series; the true ratio is overlaid when
    the input carries it.  Returns the mean band width per series so callers
    can compare variability across stages numerically.
    """
    header, rows = _read_csv(job.input_path)
    _require(header, ["replicate", "y", "rho_star", "rho_tilde", "rho_hat"], job.input_path)
    idx = {name: header.index(name) for name in header}
    series_names = [c for c in ("rho_star", "rho_tilde", "rho_hat") if c in header]
    has_truth = "rho_true" in header

    by_rep: dict = {}
    for row in rows:
        rep = row[idx["replicate"]]
        by_rep.setdefault(rep, []).append(row)
    reps = sorted(by_rep)
    if len(reps) < 2:
        raise SchemaError(f"{job.input_path}: need at least 2 replicates for a band")

    y = np.array([float(r[idx["y"]]) for r in by_rep[reps[0]]])
    order = np.argsort(y)
    y = y[order]
    curves = {name: [] for name in series_names}
    truth = None
    for rep in reps:
        block = by_rep[rep]
        if len(block) != y.size:
            raise SchemaError(
                f"{job.input_path}: replicate {rep} has {len(block)} rows, expected {y.size}"
            )
        for name in series_names:
            vals = np.array([float(r[idx[name]]) for r in block])[order]
            curves[name].append(vals)
        if has_truth and truth is None:
            truth = np.array([float(r[idx["rho_true"]]) for r in block])[order]

    lo_q = (1.0 - job.band_level) / 2.0
    hi_q = 1.0 - lo_q
    fig, ax = plt.subplots(figsize=job.figsize)
    widths = {}
    for name in series_names:
        arr = np.array(curves[name])
        mean = arr.mean(axis=0)
        lo = np.quantile(arr, lo_q, axis=0)
        hi = np.quantile(arr, hi_q, axis=0)
        widths[name] = float(np.mean(hi - lo))
        color = SERIES_COLORS.get(name, None)
        ax.plot(y, mean, label=SERIES_LABELS.get(name, name), color=color, lw=1.6)
        ax.fill_between(y, lo, hi, alpha=0.18, color=color, linewidth=0)
    if truth is not None:
        ax.plot(y, truth, "k--", lw=1.4, label="true ratio")
    ax.set_xlabel("outcome")
    ax.set_ylabel("density ratio")
    ax.set_title(job.title or f"density-ratio estimates ({len(reps)} replicates)")
    ax.legend(frameon=False)
    fig.tight_layout()
    _save(fig, job)
    return RhoBandResult(job.output_path, y, widths)


def plot_boxplot(job: FigureJob) -> list:
    """One box of estimates per estimator, optional true-value reference line.

    Returns the estimator names actually drawn.
    """
    header, rows = _read_csv(job.input_path)
    _require(header, ["replicate", "estimator", "estimate"], job.input_path)
    idx = {name: header.index(name) for name in header}

    groups: dict = {}
    seen = []
    for row in rows:
        name = row[idx["estimator"]]
        if name not in groups:
            groups[name] = []
            seen.append(name)
        groups[name].append(float(row[idx["estimate"]]))
    names = [n for n in seen if not job.estimators or n in job.estimators]
    if not names:
        raise SchemaError(f"{job.input_path}: no matching estimator series")

    fig, ax = plt.subplots(figsize=job.figsize)
    ax.boxplot(
        [groups[n] for n in names],
        tick_labels=[n.replace("_", "\n") for n in names],
        showfliers=True,
        flierprops={"markersize": 3, "alpha": 0.5},
    )
    if job.reference is not None:
        ax.axhline(job.reference, color="#d62728", lw=1.2, ls="--", label="true value")
        ax.legend(frameon=False)
    ax.set_ylabel("estimate")
    ax.set_title(job.title or "estimates by estimator")
    fig.tight_layout()
    _save(fig, job)
    return names
