"""Shared builders for tests: small synthetic samples and the purpose-built
datasets that trip each cross-validation feasibility gate."""

from __future__ import annotations

import numpy as np
import pytest

from rcdens.panel import DifferencedSample, StackedSample
from rcdens.tuning_cv import CvConfig, IrregularFixedParams


def small_irregular_sample(seed: int = 0, n: int = 300) -> DifferencedSample:
    """Mixture design: a clump of near-zero regressor changes plus movers
    bounded away from zero; outcomes follow the random-coefficient model."""
    rng = np.random.default_rng(seed)
    n_stayers = n // 5
    x = np.concatenate(
        [
            0.05 * rng.standard_normal(n_stayers),
            rng.choice([-1.0, 1.0], n - n_stayers) * rng.uniform(0.5, 2.0, n - n_stayers),
        ]
    )
    slope = 0.5 * rng.standard_normal(n)
    noise = 0.3 * rng.standard_normal(n)
    return DifferencedSample(y=x * slope + noise, x=x)


def small_stacked_sample(seed: int = 0, n: int = 80) -> StackedSample:
    rng = np.random.default_rng(seed)
    x1 = rng.standard_normal(n)
    x2 = rng.standard_normal(n) + 0.5
    slope = 0.7 + 0.3 * rng.standard_normal(n)
    d1 = 0.4 * rng.standard_normal(n)
    d2 = 0.4 * rng.standard_normal(n)
    return StackedSample(y1=x1 * slope + d1, y2=x2 * slope + d2, x1=x1, x2=x2)


@pytest.fixture(name="small_irregular_sample")
def _small_irregular_sample_fixture() -> DifferencedSample:
    return small_irregular_sample(0)


@pytest.fixture(name="small_stacked_sample")
def _small_stacked_sample_fixture() -> StackedSample:
    return small_stacked_sample(0)


def infeasible_cv_case(reason: str):
    """(sample, fixed_params, config) whose repeated CV trips the named gate.

    Each construction controls the disturbance scale so the fold-level
    denominators land firmly on one side of the relevant threshold.
    """
    rng = np.random.default_rng(99)
    if reason == "empty evaluation set":
        # 40 stayers but only 2 movers: a 3-fold split must leave at least
        # one fold without a validation mover.
        sample = DifferencedSample(
            y=np.concatenate([0.3 * rng.standard_normal(40), [0.5, -0.2]]),
            x=np.concatenate([0.01 * rng.standard_normal(40), [0.9, 1.1]]),
        )
        fixed = IrregularFixedParams(stayer_threshold=0.5)
        config = CvConfig(
            n_folds=3,
            n_repeats=1,
            candidate_bandwidths=(0.5,),
            candidate_dimensions=(3,),
            rng_seed=1,
        )
        return sample, fixed, config
    if reason == "excessive trimming":
        # Standard normal disturbances fall below a trim threshold of 0.5
        # beyond frequency ~1.18, which covers most of a [-4, 4] grid.
        n_stayers, n_movers = 1600, 120
        sample = DifferencedSample(
            y=np.concatenate(
                [rng.standard_normal(n_stayers), 0.5 * rng.standard_normal(n_movers)]
            ),
            x=np.concatenate(
                [np.zeros(n_stayers), rng.uniform(0.8, 1.2, n_movers)]
            ),
        )
        fixed = IrregularFixedParams(stayer_threshold=0.5, trim_threshold=0.5)
        config = CvConfig(
            n_folds=2,
            n_repeats=1,
            candidate_bandwidths=(0.5,),
            candidate_dimensions=(3,),
            max_instability=1e6,
            rng_seed=2,
        )
        return sample, fixed, config
    if reason == "exploding instability":
        # Nothing is trimmed, but the denominator at the top frequency is
        # about exp(-2), far above the cap's reciprocal.
        n_stayers, n_movers = 1600, 120
        sample = DifferencedSample(
            y=np.concatenate(
                [rng.standard_normal(n_stayers), 0.5 * rng.standard_normal(n_movers)]
            ),
            x=np.concatenate(
                [np.zeros(n_stayers), rng.uniform(0.8, 1.2, n_movers)]
            ),
        )
        fixed = IrregularFixedParams(stayer_threshold=0.5)
        config = CvConfig(
            n_folds=2,
            n_repeats=1,
            candidate_bandwidths=(0.5,),
            candidate_dimensions=(3,),
            max_instability=5.0,
            rng_seed=3,
        )
        return sample, fixed, config
    if reason == "degenerate frequency":
        # Disturbance SD of 3 pushes every nonzero node's denominator under
        # a 0.1 trim threshold for every mover, while a loose trim-fraction
        # cap keeps the earlier gate quiet.
        n_stayers, n_movers = 6000, 100
        sample = DifferencedSample(
            y=np.concatenate(
                [3.0 * rng.standard_normal(n_stayers), 0.5 * rng.standard_normal(n_movers)]
            ),
            x=np.concatenate(
                [np.zeros(n_stayers), rng.uniform(0.95, 1.05, n_movers)]
            ),
        )
        fixed = IrregularFixedParams(stayer_threshold=0.5, trim_threshold=0.1)
        config = CvConfig(
            n_folds=2,
            n_repeats=1,
            candidate_bandwidths=(0.5,),
            candidate_dimensions=(3,),
            max_trim_fraction=0.9,
            rng_seed=4,
        )
        return sample, fixed, config
    raise ValueError(f"unknown case {reason!r}")
