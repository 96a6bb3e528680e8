"""Bundled synthetic source data.

The stand-in mimics the shape of a 10-item, 4-category symptom checklist
with 3376 respondents: skewed toward the lowest category with weak positive
associations between all items.  It is generated from a fully connected
ordinal MRF with

* thresholds ``mu_i = (-0.5, -1.5, -3.0) + 0.1 * ((i mod 3) - 1)``
* interactions ``theta_ij = 0.02 + 0.01 * ((7 i + 3 j) mod 10)``

by Gibbs synthesis from random starts (seed 20240101, 100 sweeps after burn-in).
Any CSV of category codes with the same layout can be used in its place.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from .model import Dataset, ModelSpec

STANDIN_P = 10
STANDIN_M = 3
STANDIN_N = 3376
STANDIN_SEED = 20240101
_FILE = "scs_standin.csv"


def standin_parameters() -> np.ndarray:
    spec = ModelSpec(STANDIN_P, STANDIN_M)
    i = np.arange(STANDIN_P)
    mu = np.array([-0.5, -1.5, -3.0])[None, :] + 0.1 * ((i % 3) - 1)[:, None]
    iu, ju = spec.pairs
    inter = 0.02 + 0.01 * ((7 * iu + 3 * ju) % 10)
    return np.concatenate([mu.ravel(), inter])


def make_scs_standin(seed: int = STANDIN_SEED, n: int = STANDIN_N) -> Dataset:
    from .simulate import gibbs_synthesize

    spec = ModelSpec(STANDIN_P, STANDIN_M)
    return gibbs_synthesize(standin_parameters(), spec, n, 100, rng=np.random.default_rng(seed))


def load_scs_standin() -> Dataset:
    """The bundled 3376 x 10 stand-in dataset (categories 0..3)."""
    with resources.files("omrf.data").joinpath(_FILE).open("r") as fh:
        values = np.loadtxt(fh, delimiter=",", skiprows=1, dtype=np.int64)
    return Dataset(values, ModelSpec(STANDIN_P, STANDIN_M))


def dichotomize(data: Dataset, cut: int = 1) -> Dataset:
    """Binary recode: 1 where the category is at least ``cut``."""
    return Dataset((data.values >= cut).astype(np.int64), ModelSpec(data.p, 1))
