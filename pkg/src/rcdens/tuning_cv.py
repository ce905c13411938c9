"""Repeated K-fold cross-validation for the numerator bandwidth and the
sieve dimension.

The selection problem is nonstandard because a naive holdout target would be
as noisy as the candidate estimates it judges. Three stabilizers are built
in: the validation target smooths its numerator with an oversmoothed pilot
bandwidth while keeping the fixed denominator bandwidth, the whole search
aborts when a fold-level feasibility gate fails, and the final choice
follows a one-standard-error rule that prefers heavier smoothing followed by
the smallest basis dimension.

The fixed inputs (stayer threshold, denominator bandwidth, trim threshold)
are shared by every candidate, so the fold partitions, validation targets
and per-fold denominators are computed once per repetition and reused across
the candidate grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import FrequencyGrid, HermiteBasis
from .panel import DifferencedSample, StackedSample, partition_stayers, robust_spread
from .stage1_irregular import (
    DEFAULT_TRIM_THRESHOLD,
    NearestNeighborRule,
    denominator_matrix,
    numerator_matrix,
    stayer_weights,
    target_from_half_grid,
    trimmed_ratio_average,
)
from .stage1_regular import (
    RegularPrecompute,
    bivariate_reference_bandwidth,
    directional_denominator_matrix,
    precompute_regular,
    stacked_numerator_matrix,
)
from .stage2_sieve import SieveSolver

__all__ = [
    "DESIGNS",
    "DEFAULT_BANDWIDTH_MULTIPLIERS",
    "DEFAULT_DIMENSIONS",
    "KNN_NEIGHBOR_COUNTS",
    "KNN_DIMENSIONS",
    "InfeasibleCvError",
    "PilotRule",
    "CvConfig",
    "FoldDiagnostics",
    "CvResult",
    "IrregularFixedParams",
    "RegularFixedParams",
    "reference_bandwidth",
    "pilot_bandwidth",
    "pilot_bandwidth_stacked",
    "default_bandwidth_candidates",
    "default_knn_candidates",
    "fold_partition",
    "feasibility_check",
    "cv_fold_loss",
    "one_se_select",
    "repeated_cv",
    "cv_report",
]

DESIGNS = ("irregular", "regular")

DEFAULT_BANDWIDTH_MULTIPLIERS = (0.5, 0.75, 1.0, 1.5, 2.0)
DEFAULT_DIMENSIONS = (3, 5, 7, 9, 11, 13, 15)
# Adaptive-bandwidth grid for multimodal targets.
KNN_NEIGHBOR_COUNTS = (5, 10, 15, 20, 30)
KNN_DIMENSIONS = (7, 9, 11, 13, 15, 17, 19)


class InfeasibleCvError(ValueError):
    """A feasibility gate failed; revise the fixed thresholds before tuning."""

    def __init__(self, reason: str, detail: str) -> None:
        super().__init__(f"infeasible cross-validation environment: {reason} ({detail})")
        self.reason = reason
        self.detail = detail


@dataclass(frozen=True)
class PilotRule:
    """Oversmoothed validation-numerator bandwidth rule.

    The rate exponent shrinks slower than the Silverman rate, so the pilot
    bandwidth exceeds the reference for every admissible scale.
    """

    scale: float = 2.0
    rate: float = 7.0

    def __post_init__(self) -> None:
        if not 1.5 <= self.scale <= 3.0:
            raise ValueError("pilot scale must lie in [1.5, 3]")
        if not self.rate > 5.0:
            raise ValueError("pilot rate must exceed 5")


@dataclass(frozen=True)
class CvConfig:
    """Search-space and stability settings for `repeated_cv`.

    `candidate_bandwidths` holds fixed widths and/or NearestNeighborRule
    entries; None resolves to the multiplier grid around the sample's
    reference bandwidth at run time.
    """

    n_folds: int = 5
    n_repeats: int = 20
    candidate_bandwidths: tuple | None = None
    candidate_dimensions: tuple[int, ...] = DEFAULT_DIMENSIONS
    pilot: PilotRule = field(default_factory=PilotRule)
    max_instability: float = 100.0
    max_trim_fraction: float = 0.5
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if int(self.n_folds) != self.n_folds or self.n_folds < 2:
            raise ValueError("need at least 2 folds")
        if int(self.n_repeats) != self.n_repeats or self.n_repeats < 1:
            raise ValueError("need at least 1 repetition")
        if self.candidate_bandwidths is not None:
            object.__setattr__(
                self, "candidate_bandwidths", tuple(self.candidate_bandwidths)
            )
            if len(self.candidate_bandwidths) == 0:
                raise ValueError("empty bandwidth grid")
            for b in self.candidate_bandwidths:
                if not isinstance(b, NearestNeighborRule) and not float(b) > 0.0:
                    raise ValueError("candidate bandwidths must be positive")
        dims = tuple(int(s) for s in self.candidate_dimensions)
        object.__setattr__(self, "candidate_dimensions", dims)
        if len(dims) == 0:
            raise ValueError("empty dimension grid")
        if any(s < 1 or s % 2 == 0 for s in dims):
            raise ValueError("candidate dimensions must be odd positive integers")
        if not self.max_instability > 0.0:
            raise ValueError("instability cap must be positive")
        if not 0.0 < self.max_trim_fraction <= 1.0:
            raise ValueError("trim-fraction cap must lie in (0, 1]")


@dataclass(frozen=True)
class FoldDiagnostics:
    """Per-fold feasibility inputs, computed on the fixed parameters only."""

    n_validation_movers: int
    trim_fraction: float
    instability: float
    min_node_retention: int

    def as_dict(self) -> dict:
        return {
            "n_validation_movers": self.n_validation_movers,
            "trim_fraction": self.trim_fraction,
            "instability": self.instability,
            "min_node_retention": self.min_node_retention,
        }


@dataclass(frozen=True)
class CvResult:
    """Scores, the one-standard-error set, and the selected pair.

    Candidates are (bandwidth, dimension) pairs in fixed grid order;
    `selected` always belongs to `one_se_set`.
    """

    candidates: tuple
    mean_scores: np.ndarray
    se_scores: np.ndarray
    selected: tuple
    one_se_set: tuple
    feasibility_report: dict

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean_scores, dtype=float)
        se = np.asarray(self.se_scores, dtype=float)
        object.__setattr__(self, "mean_scores", mean)
        object.__setattr__(self, "se_scores", se)
        object.__setattr__(self, "candidates", tuple(self.candidates))
        object.__setattr__(self, "one_se_set", tuple(self.one_se_set))
        n = len(self.candidates)
        if mean.shape != (n,) or se.shape != (n,):
            raise ValueError("score length mismatch")
        if len(self.one_se_set) == 0:
            raise ValueError("empty one-standard-error set")
        if self.selected not in self.one_se_set:
            raise ValueError("selected pair must belong to the one-standard-error set")


@dataclass(frozen=True)
class IrregularFixedParams:
    """Fixed inputs for the scalar design: stayer threshold, denominator
    bandwidth (defaults to the threshold), trim threshold."""

    stayer_threshold: float
    stayer_bandwidth: float | None = None
    trim_threshold: float = DEFAULT_TRIM_THRESHOLD

    def __post_init__(self) -> None:
        if not self.stayer_threshold > 0.0:
            raise ValueError("stayer threshold must be positive")
        if self.stayer_bandwidth is not None and not self.stayer_bandwidth > 0.0:
            raise ValueError("stayer bandwidth must be positive")
        if not self.trim_threshold > 0.0:
            raise ValueError("trim threshold must be positive")

    @property
    def effective_stayer_bandwidth(self) -> float:
        if self.stayer_bandwidth is None:
            return self.stayer_threshold
        return float(self.stayer_bandwidth)


@dataclass(frozen=True)
class RegularFixedParams:
    """Fixed inputs for the stacked design: direction bandwidth and trim
    threshold. The candidate grid varies the regressor bandwidth only."""

    direction_bandwidth: float
    trim_threshold: float = DEFAULT_TRIM_THRESHOLD

    def __post_init__(self) -> None:
        if not self.direction_bandwidth > 0.0:
            raise ValueError("direction bandwidth must be positive")
        if not self.trim_threshold > 0.0:
            raise ValueError("trim threshold must be positive")


def reference_bandwidth(values: np.ndarray) -> float:
    """Silverman reference 0.9 * min(SD, IQR/1.34) * n^(-1/5)."""
    x = np.asarray(values, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("need at least 2 observations for a bandwidth rule")
    spread = robust_spread(x)
    if spread <= 0.0:
        raise ValueError("degenerate regressor")
    return 0.9 * spread * x.size ** (-0.2)


def pilot_bandwidth(movers_x: np.ndarray, pilot: PilotRule | None = None) -> float:
    """Oversmoothed pilot bandwidth scale * 0.9 * min(SD, IQR/1.34) * n^(-1/rate).

    Must exceed the Silverman reference on the same data; with scale >= 1.5
    and rate > 5 that holds for every sample size, and it is still checked.
    """
    rule = PilotRule() if pilot is None else pilot
    x = np.asarray(movers_x, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("need at least 2 observations for a bandwidth rule")
    spread = robust_spread(x)
    if spread <= 0.0:
        raise ValueError("degenerate regressor")
    g = rule.scale * 0.9 * spread * x.size ** (-1.0 / rule.rate)
    if not g > reference_bandwidth(x):
        raise ValueError("pilot bandwidth fails to oversmooth")
    return g


def pilot_bandwidth_stacked(sample: StackedSample, pilot: PilotRule | None = None) -> float:
    """Pilot rule for the bivariate numerator: same scale and rate applied
    to the averaged per-component spread."""
    rule = PilotRule() if pilot is None else pilot
    n = sample.x1.size
    if n < 2:
        raise ValueError("need at least 2 observations for a bandwidth rule")
    spread = 0.5 * (robust_spread(sample.x1) + robust_spread(sample.x2))
    if spread <= 0.0:
        raise ValueError("degenerate regressor")
    g = rule.scale * 0.9 * spread * n ** (-1.0 / rule.rate)
    if not g > bivariate_reference_bandwidth(sample):
        raise ValueError("pilot bandwidth fails to oversmooth")
    return g


def default_bandwidth_candidates(movers_x: np.ndarray) -> tuple[float, ...]:
    """Multiplier grid around the Silverman reference."""
    ref = reference_bandwidth(movers_x)
    return tuple(m * ref for m in DEFAULT_BANDWIDTH_MULTIPLIERS)


def default_knn_candidates() -> tuple[NearestNeighborRule, ...]:
    """Adaptive nearest-neighbor grid for multimodal targets."""
    return tuple(NearestNeighborRule(k) for k in KNN_NEIGHBOR_COUNTS)


def fold_partition(
    n_units: int,
    n_folds: int,
    rng_seed: int,
    repetition: int,
) -> list[np.ndarray]:
    """Seeded uniform shuffle split into folds whose sizes differ by <= 1.

    The stream depends on (rng_seed, repetition) only, so partitions are
    reproducible and independent of execution order.
    """
    if n_units < 1:
        raise ValueError("need at least one unit")
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed, repetition]))
    return np.array_split(rng.permutation(n_units), n_folds)


def feasibility_check(
    diagnostics: list[FoldDiagnostics],
    max_trim_fraction: float,
    max_instability: float,
) -> dict:
    """Evaluate the four fold-level gates; raise InfeasibleCvError on the
    first violated one, otherwise return a summary.

    Gate order: empty evaluation set, excessive trimming, exploding
    instability, degenerate frequency.
    """
    if len(diagnostics) == 0:
        raise ValueError("no fold diagnostics")
    n_movers = [d.n_validation_movers for d in diagnostics]
    if min(n_movers) == 0:
        bad = int(np.argmin(n_movers))
        raise InfeasibleCvError(
            "empty evaluation set", f"fold {bad} has no validation movers"
        )
    mean_trim = float(np.mean([d.trim_fraction for d in diagnostics]))
    if mean_trim > max_trim_fraction:
        raise InfeasibleCvError(
            "excessive trimming",
            f"mean trim fraction {mean_trim:.4f} exceeds {max_trim_fraction}",
        )
    worst_gamma = float(np.max([d.instability for d in diagnostics]))
    if worst_gamma > max_instability:
        raise InfeasibleCvError(
            "exploding instability",
            f"max inverse denominator {worst_gamma:.4g} exceeds {max_instability}",
        )
    least_kept = int(np.min([d.min_node_retention for d in diagnostics]))
    if least_kept < 1:
        raise InfeasibleCvError(
            "degenerate frequency",
            "some frequency node retains no validation movers after trimming",
        )
    return {
        "min_fold_movers": int(min(n_movers)),
        "mean_trim_fraction": mean_trim,
        "max_instability": worst_gamma,
        "min_node_retention": least_kept,
    }


def cv_fold_loss(
    validation_values: np.ndarray,
    trained_values: np.ndarray,
    grid_weights: np.ndarray,
) -> float:
    """Weighted squared holdout discrepancy on the frequency grid."""
    val = np.asarray(validation_values, dtype=complex).ravel()
    fit = np.asarray(trained_values, dtype=complex).ravel()
    w = np.asarray(grid_weights, dtype=float).ravel()
    if val.shape != fit.shape or val.shape != w.shape:
        raise ValueError("grid mismatch")
    return float(np.sum(w * np.abs(val - fit) ** 2))


def _bandwidth_key(bandwidth) -> float:
    # A larger neighbor count means heavier smoothing, the same direction as
    # a larger fixed width; the two kinds are not mixed in practice.
    if isinstance(bandwidth, NearestNeighborRule):
        return float(bandwidth.count)
    return float(bandwidth)


def one_se_select(
    mean_scores: np.ndarray,
    se_scores: np.ndarray,
    candidates,
) -> tuple[tuple, tuple]:
    """One-standard-error rule over (bandwidth, dimension) candidates.

    The set keeps every candidate within one SE of the best mean score; the
    pick is the largest bandwidth in the set, then the smallest dimension at
    that bandwidth. Ties in the best mean are broken the same way, so the
    outcome never depends on candidate ordering.

    Returns
    -------
    (selected, one_se_set)
    """
    mean = np.asarray(mean_scores, dtype=float).ravel()
    se = np.asarray(se_scores, dtype=float).ravel()
    cands = list(candidates)
    if len(cands) == 0:
        raise ValueError("no candidates")
    if mean.shape != (len(cands),) or se.shape != (len(cands),):
        raise ValueError("score length mismatch")
    finite = np.isfinite(mean)
    if not np.any(finite):
        raise ValueError("every candidate failed")
    best_score = mean[finite].min()
    best_pool = [
        i for i in range(len(cands)) if finite[i] and mean[i] == best_score
    ]
    best = max(best_pool, key=lambda i: (_bandwidth_key(cands[i][0]), -cands[i][1]))
    threshold = mean[best] + se[best]
    in_set = [i for i in range(len(cands)) if finite[i] and mean[i] <= threshold]
    one_se_set = tuple(cands[i] for i in sorted(in_set))
    top_bw = max(_bandwidth_key(c[0]) for c in one_se_set)
    selected = min(
        (c for c in one_se_set if _bandwidth_key(c[0]) == top_bw),
        key=lambda c: c[1],
    )
    return selected, one_se_set


def _denominator_diagnostics(
    den_half: np.ndarray,
    trim_threshold: float,
) -> tuple[float, int, float]:
    """Trim fraction and node retention on the full grid, max inverse
    modulus over untrimmed pairs; all derived from the nonnegative half of
    the grid since moduli are symmetric in the frequency."""
    mod = np.abs(den_half)
    trimmed = mod <= trim_threshold
    n_units, n_half = trimmed.shape
    full_nodes = 2 * (n_half - 1) + 1
    n_trimmed_full = 2 * int(trimmed[:, 1:].sum()) + int(trimmed[:, 0].sum())
    trim_fraction = n_trimmed_full / (full_nodes * n_units)
    retention = n_units - trimmed.sum(axis=0)
    kept_mod = mod[~trimmed]
    gamma = float(1.0 / kept_mod.min()) if kept_mod.size else 0.0
    return trim_fraction, int(retention.min()), gamma


def _subset_stacked(sample: StackedSample, idx: np.ndarray) -> StackedSample:
    return StackedSample(
        y1=sample.y1[idx], y2=sample.y2[idx], x1=sample.x1[idx], x2=sample.x2[idx]
    )


def _subset_precompute(pre: RegularPrecompute, idx: np.ndarray) -> RegularPrecompute:
    return RegularPrecompute(
        transformed_outcome=pre.transformed_outcome[idx],
        annihilator=pre.annihilator[idx],
        norm=pre.norm[idx],
        direction=pre.direction[idx],
        projected_outcome=pre.projected_outcome[idx],
    )


class _IrregularFoldFactory:
    """Builds per-fold validation targets, shared denominators and training
    numerators for the scalar design."""

    def __init__(self, sample, fixed, config, grid):
        self.sample = sample
        self.fixed = fixed
        self.grid = grid
        self.half = grid.nodes[grid.nonnegative_indices()]
        part = partition_stayers(sample, fixed.stayer_threshold)
        self.stayer_mask = np.zeros(sample.y.size, dtype=bool)
        self.stayer_mask[part.stayer_indices] = True
        # The pilot bandwidth is a property of the full mover sample, not of
        # any particular fold.
        self.g_pilot = pilot_bandwidth(sample.x[part.mover_indices], config.pilot)

    def resolve_candidates(self, requested):
        if requested is not None:
            return tuple(requested)
        return default_bandwidth_candidates(self.sample.x[~self.stayer_mask])

    def split(self, val_idx):
        in_val = np.zeros(self.sample.y.size, dtype=bool)
        in_val[val_idx] = True
        return {
            "val_stayers": np.flatnonzero(in_val & self.stayer_mask),
            "val_movers": np.flatnonzero(in_val & ~self.stayer_mask),
            "train_stayers": np.flatnonzero(~in_val & self.stayer_mask),
            "train_movers": np.flatnonzero(~in_val & ~self.stayer_mask),
        }

    def _denominator(self, stayer_idx, mover_idx):
        y, x = self.sample.y, self.sample.x
        weights = stayer_weights(x[stayer_idx], self.fixed.effective_stayer_bandwidth)
        return denominator_matrix(y[stayer_idx], weights, x[mover_idx], self.half)

    def build_fold(self, val_idx):
        parts = self.split(val_idx)
        vm, ts, tm = parts["val_movers"], parts["train_stayers"], parts["train_movers"]
        n_vm = vm.size
        if n_vm == 0 or parts["val_stayers"].size == 0 or ts.size == 0 or tm.size == 0:
            # No usable denominator or evaluation set: report the fold as
            # fully trimmed so the gates abort with a named condition.
            diag = FoldDiagnostics(
                n_validation_movers=n_vm,
                trim_fraction=1.0,
                instability=0.0,
                min_node_retention=0,
            )
            return None, diag
        den_val = self._denominator(parts["val_stayers"], vm)
        den_train = self._denominator(ts, tm)
        tau = self.fixed.trim_threshold
        trim_frac, min_kept, gamma_val = _denominator_diagnostics(den_val, tau)
        _, _, gamma_train = _denominator_diagnostics(den_train, tau)
        diag = FoldDiagnostics(
            n_validation_movers=n_vm,
            trim_fraction=trim_frac,
            instability=max(gamma_val, gamma_train),
            min_node_retention=min_kept,
        )
        ratios_val = self.sample.y[vm] / self.sample.x[vm]
        num_val = numerator_matrix(ratios_val, self.sample.x[vm], self.g_pilot, self.half)
        values, trims, kept = trimmed_ratio_average(num_val, den_val, tau)
        target = target_from_half_grid(self.grid, values, trims, kept)
        env = {
            "target": target,
            "den_train": den_train,
            "train_movers": tm,
        }
        return env, diag

    def train_values(self, env, bandwidth):
        tm = env["train_movers"]
        x = self.sample.x[tm]
        ratios = self.sample.y[tm] / x
        num = numerator_matrix(ratios, x, bandwidth, self.half)
        values, trims, kept = trimmed_ratio_average(
            num, env["den_train"], self.fixed.trim_threshold
        )
        return target_from_half_grid(self.grid, values, trims, kept).values


class _RegularFoldFactory:
    """Same interface for the stacked design: folds split units, the
    direction bandwidth plays the fixed denominator role and candidates vary
    the regressor bandwidth."""

    def __init__(self, sample, fixed, config, grid):
        self.sample = sample
        self.fixed = fixed
        self.grid = grid
        self.half = grid.nodes[grid.nonnegative_indices()]
        self.pre = precompute_regular(sample)
        self.g_pilot = pilot_bandwidth_stacked(sample, config.pilot)

    def resolve_candidates(self, requested):
        if requested is not None:
            candidates = tuple(requested)
            if any(isinstance(b, NearestNeighborRule) for b in candidates):
                raise ValueError(
                    "nearest-neighbor bandwidths are not defined for the stacked design"
                )
            return candidates
        ref = bivariate_reference_bandwidth(self.sample)
        return tuple(m * ref for m in DEFAULT_BANDWIDTH_MULTIPLIERS)

    def build_fold(self, val_idx):
        n_units = self.sample.x1.size
        in_val = np.zeros(n_units, dtype=bool)
        in_val[val_idx] = True
        train_idx = np.flatnonzero(~in_val)
        val_idx = np.flatnonzero(in_val)
        if val_idx.size == 0 or train_idx.size == 0:
            diag = FoldDiagnostics(
                n_validation_movers=val_idx.size,
                trim_fraction=1.0,
                instability=0.0,
                min_node_retention=0,
            )
            return None, diag
        h_s = self.fixed.direction_bandwidth
        tau = self.fixed.trim_threshold
        den_val = directional_denominator_matrix(
            _subset_precompute(self.pre, val_idx), h_s, self.half
        )
        den_train = directional_denominator_matrix(
            _subset_precompute(self.pre, train_idx), h_s, self.half
        )
        trim_frac, min_kept, gamma_val = _denominator_diagnostics(den_val, tau)
        _, _, gamma_train = _denominator_diagnostics(den_train, tau)
        diag = FoldDiagnostics(
            n_validation_movers=int(val_idx.size),
            trim_fraction=trim_frac,
            instability=max(gamma_val, gamma_train),
            min_node_retention=min_kept,
        )
        val_sample = _subset_stacked(self.sample, val_idx)
        num_val = stacked_numerator_matrix(
            val_sample, self.pre.transformed_outcome[val_idx], self.g_pilot, self.half
        )
        values, trims, kept = trimmed_ratio_average(num_val, den_val, tau)
        target = target_from_half_grid(self.grid, values, trims, kept)
        env = {
            "target": target,
            "den_train": den_train,
            "train_idx": train_idx,
        }
        return env, diag

    def train_values(self, env, bandwidth):
        idx = env["train_idx"]
        num = stacked_numerator_matrix(
            _subset_stacked(self.sample, idx),
            self.pre.transformed_outcome[idx],
            float(bandwidth),
            self.half,
        )
        values, trims, kept = trimmed_ratio_average(
            num, env["den_train"], self.fixed.trim_threshold
        )
        return target_from_half_grid(self.grid, values, trims, kept).values


def repeated_cv(
    sample,
    fixed_params,
    config: CvConfig,
    grid: FrequencyGrid,
    design: str = "irregular",
) -> CvResult:
    """Run the full repeated K-fold search and apply the one-SE rule.

    Per repetition: a seeded fold partition, per-fold feasibility
    diagnostics on the fixed parameters, an abort if any gate fails, then
    one validation target and one training denominator per fold shared by
    every candidate. A candidate whose sieve system is ill conditioned
    scores +inf instead of aborting the search.

    With a single repetition the SE is undefined; selection falls back to
    the plain minimizer with the same tie-breaks.
    """
    if design not in DESIGNS:
        raise ValueError(f"unknown design {design!r}")
    if design == "irregular":
        if not isinstance(sample, DifferencedSample):
            raise ValueError("irregular design expects a DifferencedSample")
        if not isinstance(fixed_params, IrregularFixedParams):
            raise ValueError("irregular design expects IrregularFixedParams")
        factory = _IrregularFoldFactory(sample, fixed_params, config, grid)
        n_units = sample.y.size
    else:
        if not isinstance(sample, StackedSample):
            raise ValueError("stacked design expects a StackedSample")
        if not isinstance(fixed_params, RegularFixedParams):
            raise ValueError("stacked design expects RegularFixedParams")
        factory = _RegularFoldFactory(sample, fixed_params, config, grid)
        n_units = sample.x1.size

    bandwidths = factory.resolve_candidates(config.candidate_bandwidths)
    dims = config.candidate_dimensions
    candidates = tuple((b, s) for b in bandwidths for s in dims)

    # The normal matrix depends only on (grid, dimension); factor it once
    # per dimension. A dimension that fails conditioning poisons all of its
    # candidates rather than the whole search.
    solvers: dict[int, SieveSolver | None] = {}
    for s in dims:
        try:
            solvers[s] = SieveSolver(grid, HermiteBasis(s))
        except ValueError:
            solvers[s] = None

    rep_scores = np.zeros((config.n_repeats, len(candidates)))
    report_reps = []
    for rep in range(config.n_repeats):
        folds = fold_partition(n_units, config.n_folds, config.rng_seed, rep)
        envs, diagnostics = [], []
        for val_idx in folds:
            env, diag = factory.build_fold(val_idx)
            envs.append(env)
            diagnostics.append(diag)
        summary = feasibility_check(
            diagnostics, config.max_trim_fraction, config.max_instability
        )
        report_reps.append(
            {"folds": [d.as_dict() for d in diagnostics], "summary": summary}
        )
        for env in envs:
            target = env["target"]
            for b_idx, bandwidth in enumerate(bandwidths):
                trained = factory.train_values(env, bandwidth)
                for s_idx, s in enumerate(dims):
                    col = b_idx * len(dims) + s_idx
                    solver = solvers[s]
                    if solver is None:
                        rep_scores[rep, col] = np.inf
                        continue
                    try:
                        coeffs = solver.solve(trained)
                    except ValueError:
                        rep_scores[rep, col] = np.inf
                        continue
                    loss = cv_fold_loss(
                        target.values, solver.fitted(coeffs), grid.weights
                    )
                    rep_scores[rep, col] += loss / config.n_folds

    mean = rep_scores.mean(axis=0)
    if config.n_repeats >= 2:
        with np.errstate(invalid="ignore"):
            se = np.std(rep_scores, axis=0, ddof=1) / np.sqrt(config.n_repeats)
        se[~np.isfinite(mean)] = np.inf
    else:
        se = np.zeros(len(candidates))
    if config.n_repeats < 2:
        # SE undefined: shrink the one-SE set to the minimizer itself.
        selected, _ = one_se_select(mean, np.zeros(len(candidates)), candidates)
        one_se_set = (selected,)
    else:
        selected, one_se_set = one_se_select(mean, se, candidates)
    feasibility_report = {
        "n_repeats": config.n_repeats,
        "n_folds": config.n_folds,
        "repetitions": report_reps,
    }
    return CvResult(
        candidates=candidates,
        mean_scores=mean,
        se_scores=se,
        selected=selected,
        one_se_set=one_se_set,
        feasibility_report=feasibility_report,
    )


def _bandwidth_json(bandwidth):
    if isinstance(bandwidth, NearestNeighborRule):
        return {"neighbor_count": bandwidth.count}
    return float(bandwidth)


def cv_report(result: CvResult) -> dict:
    """JSON-ready report: scores, SEs, the one-SE set, and the selection."""
    return {
        "candidates": [
            {"bandwidth": _bandwidth_json(b), "dimension": s}
            for b, s in result.candidates
        ],
        "mean_scores": [float(v) for v in result.mean_scores],
        "se_scores": [float(v) for v in result.se_scores],
        "one_se_set": [
            {"bandwidth": _bandwidth_json(b), "dimension": s}
            for b, s in result.one_se_set
        ],
        "selected": {
            "bandwidth": _bandwidth_json(result.selected[0]),
            "dimension": result.selected[1],
        },
        "feasibility": result.feasibility_report,
    }
