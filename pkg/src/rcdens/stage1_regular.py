"""First-stage frequency-domain estimator for the two-period stacked design
with continuously distributed regressor changes.

Each unit's regressor 2-vector defines an annihilator direction; outcomes
projected on it are free of the random coefficient and identify the
disturbance characteristic function through smoothing over directions on the
unit circle. The coefficient characteristic function is again a trimmed
ratio, averaged over the full sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import FrequencyGrid
from .panel import StackedSample, robust_spread
from .stage1_irregular import (
    DEFAULT_TRIM_THRESHOLD,
    FirstStageTarget,
    target_from_half_grid,
    trimmed_ratio_average,
)

__all__ = [
    "RegularPrecompute",
    "RegularConfig",
    "precompute_regular",
    "directional_disturbance_cf",
    "circular_silverman_bandwidth",
    "bivariate_reference_bandwidth",
    "directional_denominator_matrix",
    "stacked_numerator_matrix",
    "first_stage_regular",
]


@dataclass(frozen=True)
class RegularPrecompute:
    """Per-unit transforms of a stacked sample.

    transformed_outcome is the unit-level least-squares slope X'Y/(X'X);
    annihilator is the 2-vector orthogonal to X; direction is its unit
    version; projected_outcome is the outcome component along the
    annihilator, which carries no coefficient signal.
    """

    transformed_outcome: np.ndarray
    annihilator: np.ndarray
    norm: np.ndarray
    direction: np.ndarray
    projected_outcome: np.ndarray

    def __post_init__(self) -> None:
        n = self.transformed_outcome.size
        if self.annihilator.shape != (n, 2) or self.direction.shape != (n, 2):
            raise ValueError("2-vector field shape mismatch")
        if self.norm.shape != (n,) or self.projected_outcome.shape != (n,):
            raise ValueError("per-unit field length mismatch")
        if np.any(self.norm <= 0.0):
            raise ValueError("zero regressor norm")
        unit_err = np.abs(np.sum(self.direction**2, axis=1) - 1.0)
        if np.max(unit_err) > 1e-12:
            raise ValueError("direction must have unit norm")

    @property
    def n(self) -> int:
        return int(self.norm.size)


@dataclass(frozen=True)
class RegularConfig:
    """Tuning constants for the regular-design first stage."""

    regressor_bandwidth: float
    direction_bandwidth: float
    trim_threshold: float = DEFAULT_TRIM_THRESHOLD

    def __post_init__(self) -> None:
        for name in ("regressor_bandwidth", "direction_bandwidth", "trim_threshold"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name.replace('_', ' ')} must be positive")


def precompute_regular(sample: StackedSample) -> RegularPrecompute:
    """Compute all per-unit transforms; asserts annihilator orthogonality."""
    x = np.column_stack([sample.x1, sample.x2])
    y = np.column_stack([sample.y1, sample.y2])
    annihilator = np.column_stack([sample.x2, -sample.x1])
    sq = np.sum(x * x, axis=1)
    norm = np.sqrt(sq)
    ortho = np.abs(np.sum(annihilator * x, axis=1))
    if np.max(ortho) > 1e-12 * np.max(sq):
        raise ValueError("annihilator not orthogonal to regressor")
    return RegularPrecompute(
        transformed_outcome=np.sum(x * y, axis=1) / sq,
        annihilator=annihilator,
        norm=norm,
        direction=annihilator / norm[:, None],
        projected_outcome=(sample.x2 * sample.y1 - sample.x1 * sample.y2) / norm,
    )


def _direction_weights(
    directions: np.ndarray,
    at: np.ndarray,
    bandwidth: float,
) -> np.ndarray:
    """Rows: normalized Gaussian weights of all unit directions around each
    row of `at`, using chordal (straight-line) distance on the circle."""
    # Chordal distance between unit vectors: d^2 = 2 - 2 cos.
    cos = at @ directions.T
    d2 = np.clip(2.0 - 2.0 * cos, 0.0, None)
    raw = np.exp(-0.5 * d2 / (bandwidth * bandwidth))
    total = raw.sum(axis=1, keepdims=True)
    if np.any(total == 0.0):
        bad = int(np.flatnonzero(total.ravel() == 0.0)[0])
        raise ValueError(f"empty kernel neighborhood at unit {bad}")
    return raw / total


def directional_disturbance_cf(
    pre: RegularPrecompute,
    direction_bandwidth: float,
    xi: np.ndarray,
) -> complex:
    """Disturbance characteristic function at a frequency 2-vector.

    Exactly 1 at xi = 0; otherwise a weighted ECF of the projected outcomes,
    weighted by how close each unit's annihilator direction lies to the
    direction of xi.
    """
    if not direction_bandwidth > 0.0:
        raise ValueError("direction bandwidth must be positive")
    v = np.asarray(xi, dtype=float).ravel()
    if v.shape != (2,):
        raise ValueError("xi must be a 2-vector")
    radius = float(np.hypot(v[0], v[1]))
    if radius == 0.0:
        return 1.0 + 0.0j
    w = _direction_weights(pre.direction, (v / radius)[None, :], direction_bandwidth)[0]
    return complex(np.sum(w * np.exp(1j * radius * pre.projected_outcome)))


def circular_silverman_bandwidth(directions: np.ndarray) -> float:
    """Rule-of-thumb chordal bandwidth from the spread of direction angles.

    Documented default, not a canonical rule: angles via atan2, then
    0.9 * min(SD, IQR/1.34) * N^(-1/5) applied as a chordal width.
    """
    d = np.asarray(directions, dtype=float)
    angles = np.arctan2(d[:, 1], d[:, 0])
    spread = robust_spread(angles)
    if spread <= 0.0:
        raise ValueError("degenerate direction distribution")
    return 0.9 * spread * d.shape[0] ** (-0.2)


def bivariate_reference_bandwidth(sample: StackedSample) -> float:
    """Rule-of-thumb common bandwidth for the two regressor-change columns:
    0.9 * mean of the columns' robust spreads * N^(-1/6)."""
    spread = 0.5 * (robust_spread(sample.x1) + robust_spread(sample.x2))
    if spread <= 0.0:
        raise ValueError("degenerate regressor")
    return 0.9 * spread * sample.n ** (-1.0 / 6.0)


def directional_denominator_matrix(
    pre: RegularPrecompute,
    direction_bandwidth: float,
    nodes: np.ndarray,
) -> np.ndarray:
    """Denominator at every (unit, nonnegative node) pair.

    Entry (i, l) is the directional disturbance CF at the frequency vector
    nodes[l] * X_i / ||X_i||^2: direction weights centered at X_i's own unit
    vector, ECF radius nodes[l] / ||X_i||. A zero node gives exactly 1.
    """
    u = np.asarray(nodes, dtype=float).ravel()
    if np.any(u < 0.0) or np.any(np.diff(u) <= 0.0):
        raise ValueError("nodes must be nonnegative and increasing")
    # For positive u the frequency vector points along X_i, so each row of
    # the weight matrix is fixed across nodes.
    xhat = np.column_stack([-pre.direction[:, 1], pre.direction[:, 0]])
    weights = _direction_weights(pre.direction, xhat, direction_bandwidth)
    base = np.outer(1.0 / pre.norm, pre.projected_outcome)
    out = np.empty((pre.n, u.size), dtype=complex)

    # n x n working arrays dominate the bootstrap runtime, so the loop
    # reduces real and imaginary parts separately instead of allocating a
    # complex product matrix per node.
    def reduce_rows(mat: np.ndarray) -> np.ndarray:
        return np.einsum("ij,ij->i", weights, mat.real) + 1j * np.einsum(
            "ij,ij->i", weights, mat.imag
        )

    if u[0] == 0.0:
        running = np.ones_like(base, dtype=complex)
        out[:, 0] = 1.0 + 0.0j
    else:
        running = np.exp(1j * u[0] * base)
        out[:, 0] = reduce_rows(running)
    # Nominally uniform grids produce a handful of distinct float steps,
    # so the recursion caches one phase increment per exact step value.
    increments: dict[float, np.ndarray] = {}
    for ell in range(1, u.size):
        step = float(u[ell] - u[ell - 1])
        increment = increments.get(step)
        if increment is None:
            increment = np.exp(1j * step * base)
            increments[step] = increment
        running *= increment
        out[:, ell] = reduce_rows(running)
    return out


def stacked_numerator_matrix(
    sample: StackedSample,
    transformed_outcome: np.ndarray,
    regressor_bandwidth: float,
    nodes: np.ndarray,
) -> np.ndarray:
    """Kernel regression of the transformed-outcome phases at every unit's
    own regressor 2-vector; product Gaussian with a common bandwidth."""
    u = np.asarray(nodes, dtype=float).ravel()
    h2 = regressor_bandwidth * regressor_bandwidth
    d1 = sample.x1[None, :] - sample.x1[:, None]
    d2 = sample.x2[None, :] - sample.x2[:, None]
    weight = np.exp(-0.5 * (d1 * d1 + d2 * d2) / h2)
    weight /= weight.sum(axis=1, keepdims=True)
    phases = np.exp(1j * np.outer(transformed_outcome, u))
    out = weight.astype(complex) @ phases
    out[:, u == 0.0] = 1.0 + 0.0j
    return out


def first_stage_regular(
    sample: StackedSample,
    config: RegularConfig,
    grid: FrequencyGrid,
) -> FirstStageTarget:
    """Run the full regular-design first stage on a stacked sample.

    No stayer/mover split: the trimmed ratio is averaged over every unit.
    Values on the negative half-grid follow by conjugation.
    """
    if sample.n < 2:
        raise ValueError("need at least 2 units")
    pre = precompute_regular(sample)
    half = grid.nodes[grid.nonnegative_indices()]
    den = directional_denominator_matrix(pre, config.direction_bandwidth, half)
    num = stacked_numerator_matrix(
        sample, pre.transformed_outcome, config.regressor_bandwidth, half
    )
    values, trim, kept = trimmed_ratio_average(num, den, config.trim_threshold)
    return target_from_half_grid(grid, values, trim, kept)
