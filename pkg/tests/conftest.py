"""Shared fixtures: simulated datasets and heavyweight study results."""

import numpy as np
import pytest

from labelshift.condexp import NadarayaWatsonCondExp
from labelshift.ratios import DensityRatioModel
from labelshift.simulation import SimConfig, generate_replicate, working_rho_star


@pytest.fixture(scope="session")
def study_replicate():
    """One shifted-population replicate with its fitted ingredients."""
    cfg = SimConfig()
    rep = generate_replicate(cfg, 0)
    data = rep.dataset
    condexp = NadarayaWatsonCondExp(
        data.y_labeled, data.x_labeled, cfg.bandwidths.nw(data.n_labeled)
    )
    return {
        "config": cfg,
        "data": data,
        "condexp": condexp,
        "true_rho": DensityRatioModel(fn=rep.true_ratio),
        "rho_star": working_rho_star(cfg, data, rep.true_ratio),
        "true_ratio_fn": rep.true_ratio,
    }


def make_toy_dataset(seed=0, n=40, m=40, dim=2, shift=0.0):
    """Small well-conditioned dataset for exact-identity tests."""
    rng = np.random.default_rng(seed)
    y_lab = np.sort(rng.normal(0.0, 1.0, n))
    x_lab = y_lab[:, None] * np.ones(dim)[None, :] * 0.5 + rng.standard_normal((n, dim))
    y_unl = rng.normal(shift, 1.0, m)
    x_unl = y_unl[:, None] * np.ones(dim)[None, :] * 0.5 + rng.standard_normal((m, dim))
    from labelshift.data import make_dataset

    return make_dataset(y_lab, x_lab, x_unl)
