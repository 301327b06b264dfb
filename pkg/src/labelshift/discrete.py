"""Finite-label specialization of the estimators.

With a discrete outcome the local averages collapse to within-class means
and the integral equation becomes a small linear system over the classes,
so class probabilities and the per-class density ratio are estimated at
parametric rates with closed-form linear algebra.
"""

from __future__ import annotations

import numpy as np

from .condexp import CondExpModel
from .data import PooledDataset
from .errors import SingularSystemError
from .fredholm import FredholmSystem, default_ridge
from .ratios import DEFAULT_CLIP_FLOOR, DiscreteRatio

_CONDITION_LIMIT = 1e8


def _class_setup(data: PooledDataset, rho: DiscreteRatio, condexp: CondExpModel):
    """Weights, class-membership smoother and class-probability map."""
    classes = rho.classes.astype(float)
    y_lab = data.y_labeled
    missing = np.setdiff1d(np.unique(y_lab), classes)
    if missing.size:
        raise ValueError(f"labeled outcome {missing[0]!r} is not in the ratio's class set")

    rho_cont = rho.as_continuous()
    shift = data.n_labeled / data.n_unlabeled

    def weight_integrand(y):
        r = np.asarray(rho_cont(y), dtype=float)
        return r * r + shift * r

    queries = np.arange(data.total) if condexp.query_by_index else data.x
    weights = 1.0 / condexp.expect_fn(weight_integrand, queries)

    # (rows, classes) conditional class probabilities under the model.
    prob_map = condexp.basis_map(queries, classes)
    return classes, weights, prob_map, rho_cont


def _class_prob_system(
    data: PooledDataset, rho: DiscreteRatio, condexp: CondExpModel, ridge: float | None
):
    classes, weights, prob_map, rho_cont = _class_setup(data, rho, condexp)
    y_lab = data.y_labeled
    lab = data.labeled
    k = classes.size

    member = (y_lab[:, None] == classes[None, :]).astype(float)  # (n, K)
    counts = member.sum(axis=0)
    absent = np.flatnonzero(counts == 0)
    if absent.size:
        raise ValueError(f"class {classes[absent[0]]:g} never occurs in the labeled data")
    group_mean = member.T / counts[:, None]  # (K, n) within-class averaging

    response_map = weights[:, None] * prob_map * rho.values[None, :]  # (rows, K)
    operator = group_mean @ response_map[lab]
    lam = default_ridge(operator) if ridge is None else float(ridge)
    if lam == 0.0:
        cond = np.linalg.cond(operator)
        if not np.isfinite(cond) or cond > _CONDITION_LIMIT:
            raise SingularSystemError(
                "class-probability system is ill-conditioned; pass a positive ridge"
            )
    system = FredholmSystem(classes, classes, operator, np.eye(k), lam)
    return classes, weights, response_map, member, system


def discrete_class_probs(
    data: PooledDataset,
    rho: DiscreteRatio,
    condexp: CondExpModel,
    ridge: float | None = None,
) -> np.ndarray:
    """Target-population probability estimates for every class at once."""
    classes, weights, response_map, member, system = _class_prob_system(
        data, rho, condexp, ridge
    )
    lab = data.labeled
    rho_lab = rho(data.y_labeled)
    solutions = system.solve_columns(np.eye(classes.size))  # column per target class
    responses = response_map @ solutions  # (rows, K)
    direct = responses[~lab].mean(axis=0)
    rect = np.mean(rho_lab[:, None] * (member - responses[lab]), axis=0)
    return direct + rect


def discrete_class_prob(
    data: PooledDataset,
    k0,
    rho: DiscreteRatio,
    condexp: CondExpModel,
    ridge: float | None = None,
) -> float:
    """Target-population probability of one class."""
    classes = rho.classes
    matches = np.flatnonzero(classes == k0)
    if matches.size == 0:
        raise ValueError(f"class {k0!r} is not in the ratio's class set")
    if not np.any(data.y_labeled == k0):
        raise ValueError(f"class {k0!r} never occurs in the labeled data")
    return float(discrete_class_probs(data, rho, condexp, ridge)[matches[0]])


def discrete_ratio_estimate(
    data: PooledDataset,
    condexp: CondExpModel,
    rho_star: DiscreteRatio,
    ridge: float | None = None,
    clip_floor: float = DEFAULT_CLIP_FLOOR,
) -> DiscreteRatio:
    """Two-stage per-class density-ratio estimate.

    Stage one runs the class-probability estimator under the working ratio;
    stage two reruns it under the stage-one estimate.  The returned ratio is
    target class probability over labeled frequency, floored at
    ``clip_floor``.
    """
    classes = rho_star.classes
    y_lab = data.y_labeled
    p_hat = np.array([(y_lab == c).mean() for c in classes])
    if np.any(p_hat == 0):
        raise ValueError("every class must occur in the labeled data")

    q_stage1 = discrete_class_probs(data, rho_star, condexp, ridge)
    tilde = DiscreteRatio(classes, np.maximum(q_stage1 / p_hat, clip_floor), clip_floor)
    q_stage2 = discrete_class_probs(data, tilde, condexp, ridge)
    return DiscreteRatio(classes, np.maximum(q_stage2 / p_hat, clip_floor), clip_floor)


def confusion_matrix_ratio(
    labeled, unlabeled_preds, clip_floor: float = DEFAULT_CLIP_FLOOR
) -> DiscreteRatio:
    """Class-prior ratio from inverting the labeled confusion matrix.

    ``labeled`` holds (true, predicted) pairs; the confusion matrix of
    prediction given truth is inverted against the unlabeled predicted-class
    frequencies to recover target class priors, which are divided by the
    labeled true-class frequencies.
    """
    pairs = list(labeled)
    if not pairs:
        raise ValueError("need labeled (true, predicted) pairs")
    truth = np.asarray([p[0] for p in pairs])
    pred = np.asarray([p[1] for p in pairs])
    preds_unlab = np.asarray(unlabeled_preds)
    classes = np.unique(np.concatenate([truth, pred, preds_unlab]))
    k = classes.size

    confusion = np.zeros((k, k))
    for col, true_class in enumerate(classes):
        mask = truth == true_class
        denom = int(mask.sum())
        if denom == 0:
            raise ValueError(f"class {true_class!r} never occurs among the true labels")
        for row, pred_class in enumerate(classes):
            confusion[row, col] = np.sum(mask & (pred == pred_class)) / denom

    cond = np.linalg.cond(confusion)
    if not np.isfinite(cond) or cond > _CONDITION_LIMIT:
        raise SingularSystemError("confusion matrix not invertible")

    q_pred = np.array([(preds_unlab == c).mean() for c in classes])
    q_target = np.linalg.solve(confusion, q_pred)
    p_true = np.array([(truth == c).mean() for c in classes])
    ratio = np.maximum(q_target / p_true, clip_floor)
    return DiscreteRatio(classes, ratio, clip_floor)
