"""Command-line interface.

Subcommands: ``simulate`` (Monte Carlo study), ``estimate`` (one dataset,
one estimand), ``density-ratio`` (ratio curves for a dataset) and
``compare`` (several estimators side by side on a dataset).  Every run
echoes its fully resolved configuration next to the outputs so it can be
reproduced exactly.  Exit codes: 0 success, 1 usage or input error, 2
numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .baselines import ppi_report, shift_dependent_report
from .condexp import NadarayaWatsonCondExp
from .config import RunConfig, load_config, resolved_config_json
from .data import PooledDataset
from .dataio import (
    LoadedData,
    atomic_write_text,
    load_dataset,
    write_csv,
    write_raw_estimates_csv,
    write_rho_curves_csv,
    write_summary_csv,
)
from .density_ratio import ratio_curves
from .discrete import discrete_ratio_estimate
from .errors import ConfigError, DataValidationError, LabelShiftError
from .estimators import (
    EstimateReport,
    estimate_with_ratio,
    mean_estimand,
    moment_estimand,
    variance_estimand,
)
from .ratios import DensityRatioModel, DiscreteRatio, constant_ratio
from .simulation import run_study

USAGE_ERROR = 1
NUMERICAL_ERROR = 2


def _fit_condexp(config: RunConfig, dataset: PooledDataset) -> NadarayaWatsonCondExp:
    return NadarayaWatsonCondExp(
        dataset.y_labeled, dataset.x_labeled,
        config.bandwidths.nw(dataset.n_labeled),
    )


def _build_estimand(config: RunConfig):
    if config.estimand == "mean":
        return mean_estimand()
    if config.estimand == "variance":
        return variance_estimand()
    expr = config.custom_moment
    allowed = {"np": np, "__builtins__": {}}

    def fn(y, _expr=expr):
        return np.asarray(eval(_expr, allowed, {"y": y}), dtype=float)  # noqa: S307

    try:
        fn(np.array([0.0, 1.0]))
    except Exception as exc:
        raise ConfigError(f"custom_moment expression failed to evaluate: {exc}") from exc
    return moment_estimand(fn, name="custom")


def _working_ratio(config: RunConfig) -> DensityRatioModel:
    if config.rho_star is None:
        return constant_ratio(clip_floor=config.clip_floor)
    expr = config.rho_star
    allowed = {"np": np, "__builtins__": {}}

    def fn(y, _expr=expr):
        return np.asarray(eval(_expr, allowed, {"y": y}), dtype=float)  # noqa: S307

    try:
        fn(np.array([0.0, 1.0]))
    except Exception as exc:
        raise ConfigError(f"rho_star expression failed to evaluate: {exc}") from exc
    return DensityRatioModel(fn=fn, clip_floor=config.clip_floor)


def _echo_config(config: RunConfig, outdir: Path) -> None:
    atomic_write_text(outdir / "resolved_config.json", resolved_config_json(config))


def _load_config_arg(args) -> RunConfig:
    return load_config(args.config) if args.config else RunConfig()


def cmd_simulate(args) -> int:
    config = _load_config_arg(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    result = run_study(config.sim_config())
    write_summary_csv(outdir / "summary.csv", result.summary)
    write_raw_estimates_csv(outdir / "raw_estimates.csv", result.raw)
    if result.curves:
        write_rho_curves_csv(outdir / "rho_curves.csv", result.curves)
    _echo_config(config, outdir)
    for row in result.summary:
        print(
            f"{row.estimator:24s} mse_x100={row.mse_x100:9.4f} bias_x10={row.bias_x10:8.4f} "
            f"se_x10={row.se_x10:7.4f} are={row.are:6.3f} coverage={row.coverage:5.3f}"
        )
    print(f"outputs written to {outdir}")
    return 0


def _estimate_continuous(config: RunConfig, loaded: LoadedData) -> EstimateReport:
    dataset = loaded.dataset
    estimand = _build_estimand(config)
    condexp = _fit_condexp(config, dataset)
    rho_star = _working_ratio(config)
    tilde, hat = ratio_curves(
        dataset, config.ratio_grid, rho_star, condexp,
        config.bandwidths, config.kernel,
        ridge_scale=config.ridge_scale, clip_floor=config.clip_floor,
        grid_points=config.grid_points,
    )
    report = estimate_with_ratio(
        dataset, estimand, hat, condexp, config.bandwidths, config.kernel,
        ridge_scale=config.ridge_scale, solver=config.solver,
        ci_level=config.ci_level, estimator_name="efficient",
        grid_points=config.grid_points,
    )
    report.diagnostics["ratio_knots"] = tilde.knots
    report.diagnostics["ratio_consistent"] = tilde.values
    report.diagnostics["ratio_refined"] = hat.values
    return report


def _estimate_discrete(
    config: RunConfig, loaded: LoadedData, confusion_baseline: bool = False
) -> EstimateReport:
    dataset = loaded.dataset
    classes = np.unique(dataset.y_labeled)
    condexp = _fit_condexp(config, dataset)
    if confusion_baseline:
        if loaded.predictions is None:
            raise DataValidationError(
                "the confusion-matrix baseline needs a y_pred column"
            )
        from .discrete import confusion_matrix_ratio

        star = confusion_matrix_ratio(
            list(zip(dataset.y_labeled, loaded.labeled_predictions)),
            loaded.unlabeled_predictions,
            clip_floor=config.clip_floor,
        )
    else:
        star = DiscreteRatio(classes, np.ones(classes.size), config.clip_floor)
    ratio = discrete_ratio_estimate(dataset, condexp, star, clip_floor=config.clip_floor)
    estimand = _build_estimand(config)
    report = estimate_with_ratio(
        dataset, estimand, ratio.as_continuous(), condexp,
        config.bandwidths, config.kernel,
        ridge_scale=config.ridge_scale, solver=config.solver,
        ci_level=config.ci_level, estimator_name="efficient_discrete",
        grid_points=config.grid_points,
    )
    report.diagnostics["classes"] = classes
    report.diagnostics["class_ratio"] = ratio.values
    if confusion_baseline:
        report.diagnostics["confusion_ratio_seed"] = star.values
    return report


def cmd_estimate(args) -> int:
    config = _load_config_arg(args)
    if args.estimand:
        overrides = {"estimand": args.estimand}
        if args.estimand == "custom" and not config.custom_moment:
            raise ConfigError("custom estimand needs custom_moment in the config file")
        import dataclasses

        config = dataclasses.replace(config, **overrides)
    if args.discrete:
        import dataclasses

        config = dataclasses.replace(config, discrete=True)
    loaded = load_dataset(args.data)
    report = (
        _estimate_discrete(config, loaded, confusion_baseline=args.confusion_baseline)
        if config.discrete
        else _estimate_continuous(config, loaded)
    )
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(outdir / "report.json", json.dumps(report.to_dict(), indent=2))
    _echo_config(config, outdir)
    theta = ", ".join(f"{v:.6g}" for v in report.theta_hat)
    sd = ", ".join(f"{v:.6g}" for v in report.std_err)
    print(f"theta_hat = [{theta}]  std_err = [{sd}]")
    print(f"report written to {outdir / 'report.json'}")
    return 0


def cmd_density_ratio(args) -> int:
    config = _load_config_arg(args)
    loaded = load_dataset(args.data)
    dataset = loaded.dataset
    condexp = _fit_condexp(config, dataset)
    rho_star = _working_ratio(config)
    tilde, hat = ratio_curves(
        dataset, config.ratio_grid, rho_star, condexp,
        config.bandwidths, config.kernel,
        ridge_scale=config.ridge_scale, clip_floor=config.clip_floor,
        grid_points=config.grid_points,
    )
    lo, hi = np.quantile(dataset.y_labeled, [0.01, 0.99])
    grid = np.linspace(lo, hi, args.points)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_csv(
        outdir / "density_ratio.csv",
        ["y", "rho_star", "rho_tilde", "rho_hat"],
        [
            (float(y), float(s), float(t), float(h))
            for y, s, t, h in zip(grid, rho_star(grid), tilde(grid), hat(grid))
        ],
    )
    _echo_config(config, outdir)
    print(f"density ratio curve written to {outdir / 'density_ratio.csv'}")
    return 0


def cmd_compare(args) -> int:
    config = _load_config_arg(args)
    loaded = load_dataset(args.data)
    dataset = loaded.dataset
    names = [n.strip() for n in args.estimators.split(",") if n.strip()]
    if not names:
        raise ConfigError("no estimators requested")
    estimand = _build_estimand(config)
    condexp = _fit_condexp(config, dataset)
    rho_star = _working_ratio(config)
    tilde = hat = None

    def ratio_stages():
        nonlocal tilde, hat
        if tilde is None:
            tilde, hat = ratio_curves(
                dataset, config.ratio_grid, rho_star, condexp,
                config.bandwidths, config.kernel,
                ridge_scale=config.ridge_scale, clip_floor=config.clip_floor,
                grid_points=config.grid_points,
            )
        return tilde, hat

    common = dict(
        bandwidths=config.bandwidths, kernel=config.kernel,
        ridge_scale=config.ridge_scale, solver=config.solver,
        ci_level=config.ci_level, grid_points=config.grid_points,
    )
    rows = []
    for name in names:
        if name == "ppi":
            if loaded.predictions is None:
                raise DataValidationError(
                    "the ppi estimator needs a y_pred column in the dataset"
                )
            if estimand.name != "mean":
                raise ConfigError("the ppi estimator only handles the mean estimand")
            report = ppi_report(
                list(zip(dataset.y_labeled, loaded.labeled_predictions)),
                loaded.unlabeled_predictions, config.ci_level,
            )
        elif name == "shift":
            report = shift_dependent_report(dataset, estimand, rho_star, config.ci_level)
        elif name == "singly":
            report = estimate_with_ratio(
                dataset, estimand, rho_star, condexp,
                estimator_name="singly_flexible", **common,
            )
        elif name == "efficient":
            t, _ = ratio_stages()
            report = estimate_with_ratio(
                dataset, estimand, t, condexp,
                estimator_name="efficient", **common,
            )
        elif name == "efficient_refined":
            _, h = ratio_stages()
            report = estimate_with_ratio(
                dataset, estimand, h, condexp,
                estimator_name="efficient_refined", **common,
            )
        else:
            raise ConfigError(
                f"unknown estimator {name!r}; choose from "
                "ppi, shift, singly, efficient, efficient_refined"
            )
        component = 1 if estimand.name == "variance" else 0
        rows.append(
            (
                name,
                float(report.theta_hat[component]),
                float(report.std_err[component]),
                float(report.ci[component, 0]),
                float(report.ci[component, 1]),
            )
        )
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_csv(outdir / "comparison.csv", ["estimator", "estimate", "sd", "ci_lo", "ci_hi"], rows)
    _echo_config(config, outdir)
    for row in rows:
        print(f"{row[0]:20s} estimate={row[1]:.6g} sd={row[2]:.6g} ci=[{row[3]:.6g}, {row[4]:.6g}]")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="labelshift",
        description="Efficient estimation for unlabeled target populations under label shift.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo study")
    sim.add_argument("--config", help="JSON configuration file")
    sim.add_argument("--out", default="simulate_out", help="output directory")
    sim.set_defaults(func=cmd_simulate)

    est = sub.add_parser("estimate", help="estimate a target parameter from a dataset")
    est.add_argument("--data", required=True, help="dataset CSV")
    est.add_argument("--config", help="JSON configuration file")
    est.add_argument("--estimand", choices=["mean", "variance", "custom"])
    est.add_argument("--discrete", action="store_true", help="treat the outcome as discrete")
    est.add_argument(
        "--confusion-baseline", action="store_true",
        help="seed the discrete ratio stages with the confusion-matrix "
        "baseline built from the y_pred column",
    )
    est.add_argument("--out", default="estimate_out", help="output directory")
    est.set_defaults(func=cmd_estimate)

    dr = sub.add_parser("density-ratio", help="estimate the outcome density ratio")
    dr.add_argument("--data", required=True, help="dataset CSV")
    dr.add_argument("--config", help="JSON configuration file")
    dr.add_argument("--points", type=int, default=201, help="evaluation grid size")
    dr.add_argument("--out", default="density_ratio_out", help="output directory")
    dr.set_defaults(func=cmd_density_ratio)

    cmp_ = sub.add_parser("compare", help="compare estimators on one dataset")
    cmp_.add_argument("--data", required=True, help="dataset CSV")
    cmp_.add_argument("--config", help="JSON configuration file")
    cmp_.add_argument(
        "--estimators", default="shift,singly,efficient",
        help="comma-separated: ppi,shift,singly,efficient,efficient_refined",
    )
    cmp_.add_argument("--out", default="compare_out", help="output directory")
    cmp_.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ConfigError, DataValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (LabelShiftError, ValueError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
