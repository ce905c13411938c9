"""Pairs bootstrap for the two-stage density estimator.

Units are resampled with replacement and the whole pipeline is re-run with
the tuning frozen at its original-sample values; only the data vary across
replications. Confidence intervals are basic (reverse-percentile), with
density bands truncated below at zero afterward. Replications whose
resample degenerates (no stayers or movers, or an ill-conditioned sieve
solve) are redrawn under a global retry budget.

Per-replication RNG streams derive from (seed, replication, retry), so a
parallel execution would reproduce the serial results draw for draw.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate

from .numerics import FrequencyGrid, HermiteBasis
from .panel import DifferencedSample, StackedSample
from .stage1_irregular import IrregularConfig, first_stage_irregular
from .stage1_regular import RegularConfig, first_stage_regular
from .stage2_sieve import (
    DensityEstimate,
    SieveSolver,
    default_eval_grid,
    evaluate_and_postprocess,
)

__all__ = [
    "DEFAULT_N_DRAWS",
    "RETRY_BUDGET_FACTOR",
    "FrozenPipeline",
    "BootstrapRun",
    "pairs_bootstrap",
    "basic_ci",
    "density_bands",
    "bootstrap_se",
    "moment_inference",
    "bootstrap_report",
]

DEFAULT_N_DRAWS: int = 499
# Total resampling attempts allowed across all replications.
RETRY_BUDGET_FACTOR: int = 10


@dataclass(frozen=True)
class FrozenPipeline:
    """First stage + sieve + post-processing with every tuning choice fixed.

    `fit` maps a sample straight to a DensityEstimate; nothing inside is
    data-adaptive, which is what makes bootstrap replications comparable.
    """

    design: str
    config: IrregularConfig | RegularConfig
    grid: FrequencyGrid
    dimension: int
    eval_grid: np.ndarray = field(default_factory=default_eval_grid)

    def __post_init__(self) -> None:
        if self.design not in ("irregular", "regular"):
            raise ValueError(f"unknown design {self.design!r}")
        expected = IrregularConfig if self.design == "irregular" else RegularConfig
        if not isinstance(self.config, expected):
            raise ValueError(f"{self.design} design expects {expected.__name__}")
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ValueError("dimension must be a positive integer")
        object.__setattr__(
            self, "eval_grid", np.asarray(self.eval_grid, dtype=float).ravel()
        )

    @cached_property
    def _solver(self) -> SieveSolver:
        return SieveSolver(self.grid, HermiteBasis(int(self.dimension)))

    def fit(self, sample) -> DensityEstimate:
        if self.design == "irregular":
            target = first_stage_irregular(sample, self.config, self.grid)
        else:
            target = first_stage_regular(sample, self.config, self.grid)
        coeffs = self._solver.solve(target.values)
        return evaluate_and_postprocess(coeffs, self.eval_grid)

    @property
    def tuning(self) -> dict:
        """Frozen-tuning metadata recorded on every bootstrap run."""
        out = {"design": self.design, "dimension": int(self.dimension)}
        if self.design == "irregular":
            bw = self.config.numerator_bandwidth
            out["numerator_bandwidth"] = (
                {"neighbor_count": bw.count} if hasattr(bw, "count") else float(bw)
            )
            out["stayer_threshold"] = self.config.stayer_threshold
            out["stayer_bandwidth"] = self.config.effective_stayer_bandwidth
        else:
            out["regressor_bandwidth"] = self.config.regressor_bandwidth
            out["direction_bandwidth"] = self.config.direction_bandwidth
        out["trim_threshold"] = self.config.trim_threshold
        out["cutoff"] = self.grid.cutoff
        out["n_nodes"] = self.grid.n_nodes
        return out


@dataclass(frozen=True)
class BootstrapRun:
    """Original estimate plus per-replication densities on a shared grid."""

    point: DensityEstimate
    draws: np.ndarray
    seed: int
    tuning: dict
    n_redrawn: int = 0

    def __post_init__(self) -> None:
        draws = np.atleast_2d(np.asarray(self.draws, dtype=float))
        object.__setattr__(self, "draws", draws)
        grid = self.point.eval_grid
        if draws.shape[1] != grid.size:
            raise ValueError("draws must live on the point estimate's grid")
        if draws.shape[0] < 1:
            raise ValueError("need at least one draw")
        if np.any(draws < 0.0):
            raise ValueError("bootstrap draws must be post-processed densities")
        masses = integrate.trapezoid(draws, grid, axis=1)
        if np.any(np.abs(masses - 1.0) > 1e-8):
            raise ValueError("bootstrap draws must integrate to one")

    @property
    def n_draws(self) -> int:
        return int(self.draws.shape[0])


def _resample(sample, indices: np.ndarray):
    if isinstance(sample, DifferencedSample):
        return DifferencedSample(y=sample.y[indices], x=sample.x[indices])
    if isinstance(sample, StackedSample):
        return StackedSample(
            y1=sample.y1[indices],
            y2=sample.y2[indices],
            x1=sample.x1[indices],
            x2=sample.x2[indices],
        )
    raise ValueError("sample must be a DifferencedSample or StackedSample")


def _n_units(sample) -> int:
    if isinstance(sample, DifferencedSample):
        return int(sample.y.size)
    return int(sample.x1.size)


def pairs_bootstrap(
    sample,
    pipeline: FrozenPipeline,
    n_draws: int = DEFAULT_N_DRAWS,
    seed: int = 0,
    index_sampler=None,
) -> BootstrapRun:
    """Resample units with replacement and refit under frozen tuning.

    A replication whose refit raises (degenerate stayer/mover partition or a
    failed sieve solve) is redrawn from a fresh stream; the total attempt
    budget is RETRY_BUDGET_FACTOR * n_draws, and exhausting it raises with
    the accumulated failure count. `index_sampler(rng, n)` exists so tests
    can force specific resamples; the default draws uniform indices.
    """
    if n_draws < 1:
        raise ValueError("need at least one replication")
    point = pipeline.fit(sample)
    n = _n_units(sample)
    sampler = index_sampler
    if sampler is None:
        sampler = lambda rng, size: rng.integers(0, size, size)  # noqa: E731
    draws = np.empty((n_draws, point.eval_grid.size))
    budget = RETRY_BUDGET_FACTOR * n_draws
    attempts = 0
    failures = 0
    n_redrawn = 0
    for b in range(n_draws):
        retry = 0
        while True:
            if attempts >= budget:
                raise RuntimeError(
                    f"bootstrap retry budget exhausted after {failures} failed "
                    f"replications ({attempts} attempts for {b} completed draws)"
                )
            attempts += 1
            key = [seed, b] if retry == 0 else [seed, b, retry]
            rng = np.random.default_rng(np.random.SeedSequence(key))
            indices = np.asarray(sampler(rng, n))
            try:
                estimate = pipeline.fit(_resample(sample, indices))
            except ValueError:
                failures += 1
                retry += 1
                n_redrawn += retry == 1
                continue
            draws[b] = estimate.processed_values
            break
    return BootstrapRun(
        point=point,
        draws=draws,
        seed=seed,
        tuning=pipeline.tuning,
        n_redrawn=n_redrawn,
    )


def basic_ci(
    point_estimate: float,
    draws: np.ndarray,
    alpha: float,
    nonnegative: bool = False,
) -> tuple[float, float]:
    """Reverse-percentile interval [2f - q(1-a/2), 2f - q(a/2)].

    `nonnegative` truncates both endpoints below at zero afterward, the rule
    for density values.
    """
    values = np.asarray(draws, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("need at least one draw")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    hi_q = float(np.quantile(values, 1.0 - alpha / 2.0))
    lo_q = float(np.quantile(values, alpha / 2.0))
    lower = 2.0 * point_estimate - hi_q
    upper = 2.0 * point_estimate - lo_q
    if nonnegative:
        lower = max(lower, 0.0)
        upper = max(upper, 0.0)
    return lower, upper


def density_bands(
    run: BootstrapRun,
    alpha: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise basic intervals at every grid point, truncated at zero."""
    point = run.point.processed_values
    hi_q = np.quantile(run.draws, 1.0 - alpha / 2.0, axis=0)
    lo_q = np.quantile(run.draws, alpha / 2.0, axis=0)
    lower = np.clip(2.0 * point - hi_q, 0.0, None)
    upper = np.clip(2.0 * point - lo_q, 0.0, None)
    return lower, upper


def bootstrap_se(draws: np.ndarray) -> float:
    """Sample standard deviation of the draws (N-1 denominator)."""
    values = np.asarray(draws, dtype=float).ravel()
    if values.size < 2:
        raise ValueError("need at least 2 draws for a standard error")
    # Center on the first draw before reducing.  The spread is shift
    # invariant, and the shift makes the result exactly zero when every
    # draw coincides (a plain std picks up summation round-off there).
    return float(np.std(values - values[0], ddof=1))


def _draw_moments(run: BootstrapRun) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    grid = run.point.eval_grid
    means = integrate.trapezoid(grid * run.draws, grid, axis=1)
    seconds = integrate.trapezoid(grid * grid * run.draws, grid, axis=1)
    variances = np.clip(seconds - means * means, 0.0, None)
    return means, variances, np.sqrt(variances)


def moment_inference(run: BootstrapRun, alpha: float = 0.10) -> dict:
    """Mean, variance and SD of the fitted density with bootstrap SEs.

    Estimates come from the original sample; SEs are draw standard
    deviations; intervals are basic. The SD's standard error uses the delta
    method se(var) / (2 * sd), skipped with a note when the point SD is
    zero.
    """
    mean_draws, var_draws, sd_draws = _draw_moments(run)
    out = {
        "mean": {
            "estimate": run.point.mean,
            "se": bootstrap_se(mean_draws),
            "ci": basic_ci(run.point.mean, mean_draws, alpha),
        },
        "variance": {
            "estimate": run.point.variance,
            "se": bootstrap_se(var_draws),
            "ci": basic_ci(run.point.variance, var_draws, alpha),
        },
    }
    sd_entry = {
        "estimate": run.point.sd,
        "ci": basic_ci(run.point.sd, sd_draws, alpha),
    }
    if run.point.sd > 0.0:
        sd_entry["se"] = out["variance"]["se"] / (2.0 * run.point.sd)
        sd_entry["se_method"] = "delta"
    else:
        sd_entry["se"] = None
        sd_entry["se_method"] = "skipped (zero point standard deviation)"
    out["sd"] = sd_entry
    return out


def bootstrap_report(run: BootstrapRun, alpha: float = 0.10) -> dict:
    """JSON-ready report: per-gridpoint bands and the moment table."""
    lower, upper = density_bands(run, alpha)
    pointwise_se = (
        np.std(run.draws - run.draws[0], axis=0, ddof=1)
        if run.n_draws >= 2
        else None
    )
    moments = moment_inference(run, alpha)
    return {
        "n_draws": run.n_draws,
        "seed": run.seed,
        "alpha": alpha,
        "tuning": run.tuning,
        "n_redrawn": run.n_redrawn,
        "eval_grid": run.point.eval_grid.tolist(),
        "point": run.point.processed_values.tolist(),
        "band_lower": lower.tolist(),
        "band_upper": upper.tolist(),
        "pointwise_se": None if pointwise_se is None else pointwise_se.tolist(),
        "moments": {
            name: {
                "estimate": entry["estimate"],
                "se": entry["se"],
                "ci_lower": entry["ci"][0],
                "ci_upper": entry["ci"][1],
                **(
                    {"se_method": entry["se_method"]}
                    if "se_method" in entry
                    else {}
                ),
            }
            for name, entry in moments.items()
        },
    }
