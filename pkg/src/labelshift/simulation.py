"""Monte Carlo harness: data generation, replicate execution, summary tables.

The generating mechanism draws a population indicator, an outcome whose law
depends on the indicator (this is the label shift), and covariates whose law
given the outcome is shared across populations.  Replicates are seeded
independently by index so any execution order or worker split reproduces the
same study.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._engine import SolverConfig
from .baselines import (
    WorkingRegressionModel,
    doubly_flexible,
    shift_dependent_report,
    singly_flexible,
)
from .condexp import NadarayaWatsonCondExp
from .data import PooledDataset
from .density_ratio import ratio_curves
from .errors import LabelShiftError
from .estimators import (
    estimate_with_ratio,
    mean_estimand,
    variance_estimand,
)
from .kernels import BandwidthPolicy, KernelSpec
from .ratios import DensityRatioModel, RatioGridPlan

DEFAULT_ESTIMATORS = (
    "shift_dependent",
    "doubly_flexible",
    "singly_flexible",
    "efficient_consistent",
    "efficient_refined",
    "oracle",
)


@dataclass(frozen=True)
class GaussianRatio:
    """Closed-form normal-density ratio, target over source."""

    target_mean: float
    target_var: float
    source_mean: float
    source_var: float

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        lq = -0.5 * (y - self.target_mean) ** 2 / self.target_var - 0.5 * math.log(
            2.0 * math.pi * self.target_var
        )
        lp = -0.5 * (y - self.source_mean) ** 2 / self.source_var - 0.5 * math.log(
            2.0 * math.pi * self.source_var
        )
        return np.exp(lq - lp)


@dataclass(frozen=True)
class DistortedRatio:
    """A true ratio warped by a log-quadratic factor and renormalized."""

    base: GaussianRatio
    linear: float
    quadratic: float
    scale: float

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return self.scale * self.base(y) * np.exp(self.linear * y + self.quadratic * y * y)


@dataclass(frozen=True)
class SimConfig:
    """Study settings: generating mechanism, estimators and numerics."""

    n_total: int = 500
    label_prob: float = 0.5
    source_mean: float = 0.0
    source_var: float = 2.0
    target_mean: float = 1.0
    target_var: float = 1.0
    alpha: tuple = (-0.5, 0.5, 1.0)
    distortion: tuple = (0.2, 0.1)
    replicates: int = 1000
    seed: int = 20240801
    estimand: str = "mean"
    estimators: tuple = DEFAULT_ESTIMATORS
    bandwidths: BandwidthPolicy = BandwidthPolicy()
    kernel: KernelSpec = KernelSpec()
    ratio_grid: RatioGridPlan = RatioGridPlan()
    solver: SolverConfig = SolverConfig()
    ridge_scale: float | None = None
    grid_points: int = 100
    quadrature_nodes: int = 40
    ci_level: float = 0.95
    curve_lo: float = -1.0
    curve_hi: float = 3.0
    curve_points: int = 41
    strict_failures: bool = True
    workers: int | None = None

    def __post_init__(self):
        if self.n_total < 10:
            raise ValueError("n_total must be at least 10")
        if self.replicates < 1:
            raise ValueError("replicates must be positive")
        if not 0.0 < self.label_prob < 1.0:
            raise ValueError("label_prob must lie in (0, 1)")
        if min(self.source_var, self.target_var) <= 0:
            raise ValueError("variances must be positive")
        if self.estimand not in ("mean", "variance"):
            raise ValueError("estimand must be 'mean' or 'variance'")

    @property
    def true_value(self) -> float:
        return self.target_mean if self.estimand == "mean" else self.target_var

    def true_ratio(self) -> GaussianRatio:
        return GaussianRatio(
            self.target_mean, self.target_var, self.source_mean, self.source_var
        )


@dataclass
class ReplicateData:
    """One simulated pooled dataset plus oracle-only extras."""

    dataset: PooledDataset
    true_ratio: GaussianRatio
    y_unlabeled_true: np.ndarray
    attempts: int = 1


@dataclass(frozen=True)
class MetricsRow:
    """One summary-table line for one estimator."""

    estimator: str
    mse_x100: float
    bias_x10: float
    se_x10: float
    are: float
    coverage: float
    failures: int = 0

    def __post_init__(self):
        if self.mse_x100 < 0:
            raise ValueError("MSE cannot be negative")
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError("coverage must lie in [0, 1]")


def generate_replicate(config: SimConfig, replicate: int) -> ReplicateData:
    """Draw one pooled dataset; deterministic in (config.seed, replicate)."""
    for attempt in range(100):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=config.seed, spawn_key=(replicate, attempt))
        )
        n_total = config.n_total
        labeled = rng.random(n_total) < config.label_prob
        n = int(labeled.sum())
        if n == 0 or n == n_total:
            continue
        y = np.where(
            labeled,
            rng.normal(config.source_mean, math.sqrt(config.source_var), n_total),
            rng.normal(config.target_mean, math.sqrt(config.target_var), n_total),
        )
        alpha = np.asarray(config.alpha, dtype=float)
        x = y[:, None] * alpha[None, :] + rng.standard_normal((n_total, alpha.size))
        y_obs = np.where(labeled, y, np.nan)
        data = PooledDataset(labeled, y_obs, x)
        return ReplicateData(data, config.true_ratio(), y[~labeled], attempt + 1)
    raise RuntimeError("could not draw a dataset with both labeled and unlabeled rows")


def working_rho_star(config: SimConfig, data: PooledDataset, true_ratio=None) -> DensityRatioModel:
    """The study's deliberately misspecified working ratio model.

    The true ratio is warped by a log-quadratic factor, then rescaled so the
    labeled-sample average of the working ratio is exactly one.
    """
    if true_ratio is None:
        true_ratio = config.true_ratio()
    e1, e2 = config.distortion
    y = data.y_labeled
    norm = float(np.mean(true_ratio(y) * np.exp(e1 * y + e2 * y * y)))
    distorted = DistortedRatio(true_ratio, e1, e2, 1.0 / norm)
    return DensityRatioModel(fn=distorted)


def _wrong_transform(x: np.ndarray) -> np.ndarray:
    """Deliberately wrong covariate transformation for the parametric model."""
    x = np.atleast_2d(x)
    return np.column_stack(
        [x[:, 0], np.exp(x[:, 1] / 2.0), x[:, 2] / (1.0 + np.exp(x[:, 1])) + 10.0]
    )


def _replicate_estimates(config: SimConfig, replicate: int) -> dict:
    """All configured estimators on one replicate, plus ratio curves."""
    rep = generate_replicate(config, replicate)
    data = rep.dataset
    n = data.n_labeled
    condexp = NadarayaWatsonCondExp(
        data.y_labeled, data.x_labeled, config.bandwidths.nw(n)
    )
    true_rho = DensityRatioModel(fn=rep.true_ratio)
    rho_star = working_rho_star(config, data, rep.true_ratio)
    estimand = mean_estimand() if config.estimand == "mean" else variance_estimand()
    component = 0 if config.estimand == "mean" else 1

    needs_ratio = any(e.startswith("efficient") for e in config.estimators)
    tilde = hat = None
    curves = None
    if needs_ratio:
        tilde, hat = ratio_curves(
            data, config.ratio_grid, rho_star, condexp,
            config.bandwidths, config.kernel,
            ridge_scale=config.ridge_scale, grid_points=config.grid_points,
        )
        grid = np.linspace(config.curve_lo, config.curve_hi, config.curve_points)
        curves = np.column_stack(
            [grid, rho_star(grid), tilde(grid), hat(grid), true_rho(grid)]
        )

    common = dict(
        bandwidths=config.bandwidths,
        kernel=config.kernel,
        ridge_scale=config.ridge_scale,
        ci_level=config.ci_level,
        solver=config.solver,
        grid_points=config.grid_points,
    )
    results: dict = {}
    errors: dict = {}
    for name in config.estimators:
        try:
            if name == "shift_dependent":
                report = shift_dependent_report(data, estimand, rho_star, config.ci_level)
            elif name == "singly_flexible":
                report = singly_flexible(data, estimand, rho_star, condexp, **common)
            elif name == "doubly_flexible":
                working = WorkingRegressionModel(_wrong_transform)
                report = doubly_flexible(
                    data, estimand, rho_star, working,
                    quadrature_nodes=config.quadrature_nodes, **common,
                )
            elif name == "efficient_consistent":
                report = estimate_with_ratio(
                    data, estimand, tilde, condexp, estimator_name=name, **common
                )
            elif name == "efficient_refined":
                report = estimate_with_ratio(
                    data, estimand, hat, condexp, estimator_name=name, **common
                )
            elif name == "oracle":
                report = estimate_with_ratio(
                    data, estimand, true_rho, condexp, estimator_name=name, **common
                )
            else:
                raise ValueError(f"unknown estimator {name!r}")
        except (LabelShiftError, np.linalg.LinAlgError, ValueError) as exc:
            if config.strict_failures:
                raise
            errors[name] = repr(exc)
            continue
        results[name] = (
            float(report.theta_hat[component]),
            float(report.std_err[component]),
            float(report.ci[component, 0]),
            float(report.ci[component, 1]),
        )
    return {"replicate": replicate, "results": results, "errors": errors, "curves": curves}


def _worker(args):
    config, replicate = args
    return _replicate_estimates(config, replicate)


@dataclass
class StudyResult:
    config: SimConfig
    summary: list
    raw: list = field(default_factory=list)       # (replicate, estimator, est, sd, lo, hi)
    curves: list = field(default_factory=list)    # (replicate, y, star, consistent, refined, true)

    def row(self, estimator: str) -> MetricsRow:
        for row in self.summary:
            if row.estimator == estimator:
                return row
        raise KeyError(estimator)


def resolve_workers(requested: int | None, replicates: int) -> int:
    cap = os.environ.get("LABELSHIFT_THREADS")
    if requested is None:
        requested = os.cpu_count() or 1
    if cap is not None:
        requested = min(requested, max(1, int(cap)))
    return max(1, min(requested, replicates))


def run_study(config: SimConfig) -> StudyResult:
    """Run every configured estimator on every replicate and summarize.

    Per-replicate seeds derive from the master seed by index, so splitting
    the replicates across any number of workers reproduces the serial study
    exactly.
    """
    workers = resolve_workers(config.workers, config.replicates)
    jobs = [(config, i) for i in range(config.replicates)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_worker, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        outputs = [_worker(j) for j in jobs]
    outputs.sort(key=lambda o: o["replicate"])

    raw = []
    curves = []
    failures = {name: 0 for name in config.estimators}
    estimates = {name: [] for name in config.estimators}
    covered = {name: [] for name in config.estimators}
    sds = {name: [] for name in config.estimators}
    truth = config.true_value
    for out in outputs:
        for name in config.estimators:
            if name not in out["results"]:
                failures[name] += 1
                continue
            est, sd, lo, hi = out["results"][name]
            raw.append((out["replicate"], name, est, sd, lo, hi))
            estimates[name].append(est)
            sds[name].append(sd)
            covered[name].append(lo <= truth <= hi)
        if out["curves"] is not None:
            for row in out["curves"]:
                curves.append((out["replicate"], *map(float, row)))

    total_failures = sum(failures.values())
    if total_failures and not config.strict_failures:
        worst = max(failures.values()) / config.replicates
        if worst > 0.01:
            raise RuntimeError(
                f"estimator failure rate {worst:.1%} exceeds the 1% tolerance: {failures}"
            )

    oracle_mse = None
    if "oracle" in estimates and estimates["oracle"]:
        arr = np.asarray(estimates["oracle"])
        oracle_mse = float(np.mean((arr - truth) ** 2))

    summary = []
    for name in config.estimators:
        arr = np.asarray(estimates[name], dtype=float)
        if arr.size == 0:
            raise RuntimeError(f"estimator {name!r} failed on every replicate")
        mse = float(np.mean((arr - truth) ** 2))
        bias = float(np.mean(arr) - truth)
        se = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
        are = mse / oracle_mse if oracle_mse else float("nan")
        coverage = float(np.mean(covered[name]))
        summary.append(
            MetricsRow(name, 100.0 * mse, 10.0 * bias, 10.0 * se, are, coverage, failures[name])
        )
    return StudyResult(config, summary, raw, curves)


def no_shift_config(**overrides) -> SimConfig:
    """Convenience configuration with identical source and target laws."""
    base = dict(
        source_mean=0.0, source_var=1.0, target_mean=0.0, target_var=1.0,
        distortion=(0.0, 0.0),
    )
    base.update(overrides)
    return SimConfig(**base)


def study_config_table(estimand: str, replicates: int = 1000, **overrides) -> SimConfig:
    """The headline study configuration for a given estimand."""
    return SimConfig(estimand=estimand, replicates=replicates, **overrides)


def replace_config(config: SimConfig, **overrides) -> SimConfig:
    return replace(config, **overrides)
