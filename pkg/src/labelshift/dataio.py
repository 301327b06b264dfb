"""Dataset and result file handling.

The dataset format is a headed CSV with columns ``r`` (1 = labeled source
row, 0 = unlabeled target row), ``y`` (required on labeled rows, may be
empty elsewhere), covariate columns ``x1..xd``, and an optional ``y_pred``
column for prediction-based flows.  Reals are written with 17 significant
digits so a round trip reproduces them bit for bit; all writes go through a
temp-file rename so readers never see partial output.
"""

from __future__ import annotations

import csv
import os
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import PooledDataset
from .errors import DataValidationError


@dataclass
class LoadedData:
    """A parsed dataset plus the optional prediction column."""

    dataset: PooledDataset
    predictions: np.ndarray | None = None  # aligned with dataset rows

    @property
    def labeled_predictions(self) -> np.ndarray | None:
        if self.predictions is None:
            return None
        return self.predictions[self.dataset.labeled]

    @property
    def unlabeled_predictions(self) -> np.ndarray | None:
        if self.predictions is None:
            return None
        return self.predictions[~self.dataset.labeled]


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str | Path, header: list, rows) -> None:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) if isinstance(v, float) else v for v in row])
    atomic_write_text(path, buf.getvalue())


def load_dataset(path: str | Path) -> LoadedData:
    """Parse a dataset CSV, validating the schema row by row."""
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"dataset file not found: {path}")
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if "r" not in header or "y" not in header:
            raise DataValidationError(f"{path}: header must contain 'r' and 'y'")
        x_cols = [h for h in header if h.startswith("x") and h[1:].isdigit()]
        expected = [f"x{i}" for i in range(1, len(x_cols) + 1)]
        if sorted(x_cols) != sorted(expected) or not x_cols:
            raise DataValidationError(
                f"{path}: covariate columns must be named x1..xd (found {x_cols})"
            )
        idx = {name: header.index(name) for name in header}
        has_pred = "y_pred" in header

        labeled, ys, xs, preds = [], [], [], []
        for row_num, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataValidationError(
                    f"{path}: row {row_num} has {len(row)} cells, expected {len(header)}"
                )
            r_raw = row[idx["r"]].strip()
            if r_raw not in ("0", "1"):
                raise DataValidationError(
                    f"{path}: r must be 0 or 1, row {row_num}"
                )
            r = r_raw == "1"
            y_raw = row[idx["y"]].strip()
            if r:
                if not y_raw:
                    raise DataValidationError(
                        f"{path}: labeled row {row_num} is missing y"
                    )
                y = _parse_cell(y_raw, path, row_num, "y")
            elif y_raw:
                warnings.warn(
                    f"{path}: row {row_num} is unlabeled but carries y; "
                    "the value is ignored",
                    stacklevel=2,
                )
                y = np.nan
            else:
                y = np.nan
            x = [
                _parse_cell(row[idx[c]], path, row_num, c)
                for c in (f"x{i}" for i in range(1, len(x_cols) + 1))
            ]
            if has_pred:
                preds.append(_parse_cell(row[idx["y_pred"]], path, row_num, "y_pred"))
            labeled.append(r)
            ys.append(y)
            xs.append(x)

    if not labeled:
        raise DataValidationError(f"{path}: no data rows")
    if not any(labeled):
        raise DataValidationError(f"{path}: no labeled rows")
    if all(labeled):
        raise DataValidationError(f"{path}: no unlabeled rows")
    dataset = PooledDataset(
        np.array(labeled, dtype=bool), np.array(ys, dtype=float), np.array(xs, dtype=float)
    )
    return LoadedData(dataset, np.array(preds, dtype=float) if has_pred else None)


def _parse_cell(raw: str, path, row_num: int, col: str) -> float:
    raw = raw.strip()
    try:
        return float(raw)
    except ValueError:
        raise DataValidationError(
            f"{path}: non-numeric value {raw!r} at row {row_num}, column {col}"
        ) from None


def save_dataset(
    path: str | Path,
    dataset: PooledDataset,
    predictions: np.ndarray | None = None,
) -> None:
    header = ["r", "y"] + [f"x{i}" for i in range(1, dataset.dim + 1)]
    if predictions is not None:
        header.append("y_pred")
    rows = []
    for i in range(dataset.total):
        row = [int(dataset.labeled[i])]
        row.append(_fmt(dataset.y[i]) if dataset.labeled[i] else "")
        row.extend(float(v) for v in dataset.x[i])
        if predictions is not None:
            row.append(float(predictions[i]))
        rows.append(row)
    write_csv(path, header, rows)


def write_summary_csv(path: str | Path, rows) -> None:
    write_csv(
        path,
        ["estimator", "mse_x100", "bias_x10", "se_x10", "are", "coverage", "failures"],
        [
            (r.estimator, float(r.mse_x100), float(r.bias_x10), float(r.se_x10),
             float(r.are), float(r.coverage), r.failures)
            for r in rows
        ],
    )


def write_raw_estimates_csv(path: str | Path, raw) -> None:
    write_csv(
        path,
        ["replicate", "estimator", "estimate", "sd", "ci_lo", "ci_hi"],
        [(rep, name, float(a), float(b), float(c), float(d)) for rep, name, a, b, c, d in raw],
    )


def write_rho_curves_csv(path: str | Path, curves) -> None:
    write_csv(
        path,
        ["replicate", "y", "rho_star", "rho_tilde", "rho_hat", "rho_true"],
        [(rep, float(y), float(s), float(t), float(h), float(tr)) for rep, y, s, t, h, tr in curves],
    )
