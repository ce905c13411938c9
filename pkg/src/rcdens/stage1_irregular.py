"""First-stage frequency-domain estimator for the scalar design with a mass
of near-zero regressor changes.

The coefficient characteristic function is estimated node by node as a
trimmed ratio: the numerator is a kernel regression of the mover outcome
ratios' phases on the regressor change, the denominator is the disturbance
characteristic function estimated from stayers, and the ratio is averaged
over movers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import FrequencyGrid, gaussian_kernel_weights, weighted_ecf
from .panel import DifferencedSample, partition_stayers

__all__ = [
    "NearestNeighborRule",
    "IrregularConfig",
    "FirstStageTarget",
    "stayer_weights",
    "disturbance_cf",
    "numerator_cf",
    "knn_bandwidth",
    "knn_bandwidths",
    "denominator_matrix",
    "numerator_matrix",
    "trimmed_ratio_average",
    "target_from_half_grid",
    "first_stage_irregular",
]

DEFAULT_TRIM_THRESHOLD: float = 1e-4


@dataclass(frozen=True)
class NearestNeighborRule:
    """Adaptive numerator bandwidth: distance to the k-th nearest mover."""

    count: int

    def __post_init__(self) -> None:
        if int(self.count) != self.count or self.count < 1:
            raise ValueError("neighbor count must be a positive integer")
        object.__setattr__(self, "count", int(self.count))


@dataclass(frozen=True)
class IrregularConfig:
    """Tuning constants for the irregular-design first stage.

    `numerator_bandwidth` is either a fixed positive width or a
    NearestNeighborRule. `stayer_bandwidth` defaults to the stayer
    threshold itself.
    """

    stayer_threshold: float
    numerator_bandwidth: float | NearestNeighborRule
    stayer_bandwidth: float | None = None
    trim_threshold: float = DEFAULT_TRIM_THRESHOLD

    def __post_init__(self) -> None:
        if not self.stayer_threshold > 0.0:
            raise ValueError("stayer threshold must be positive")
        if isinstance(self.numerator_bandwidth, NearestNeighborRule):
            pass
        elif not float(self.numerator_bandwidth) > 0.0:
            raise ValueError("numerator bandwidth must be positive")
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
class FirstStageTarget:
    """Estimated coefficient characteristic function on a frequency grid.

    `values[center] == 1` exactly and the values are Hermitian across the
    grid. `trim_fraction` and `retained_count` record, per node, how many
    ratio terms the denominator trim removed.
    """

    grid: FrequencyGrid
    values: np.ndarray
    trim_fraction: np.ndarray
    retained_count: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=complex)
        trim = np.asarray(self.trim_fraction, dtype=float)
        kept = np.asarray(self.retained_count, dtype=int)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "trim_fraction", trim)
        object.__setattr__(self, "retained_count", kept)
        n = self.grid.n_nodes
        if values.shape != (n,) or trim.shape != (n,) or kept.shape != (n,):
            raise ValueError("per-node field length mismatch")
        if not np.all(np.isfinite(values.real)) or not np.all(np.isfinite(values.imag)):
            raise ValueError("non-finite first-stage value")
        if values[n // 2] != 1.0 + 0.0j:
            raise ValueError("value at node 0 must be exactly 1")
        if np.max(np.abs(values - np.conj(values[::-1]))) > 1e-12:
            raise ValueError("values must be Hermitian across the grid")
        if np.any(trim < 0.0) or np.any(trim > 1.0):
            raise ValueError("trim fraction outside [0, 1]")
        if np.any(kept < 0):
            raise ValueError("negative retained count")


def stayer_weights(stayers_x: np.ndarray, bandwidth: float) -> np.ndarray:
    """Kernel weights of the stayer regressor changes around zero."""
    return gaussian_kernel_weights(stayers_x, 0.0, bandwidth)


def disturbance_cf(
    stayers_y: np.ndarray,
    stayers_x: np.ndarray,
    bandwidth: float,
    v: np.ndarray | float,
) -> np.ndarray | complex:
    """Disturbance characteristic function from stayers, kernel-weighted at
    zero regressor change; exactly 1 at v = 0."""
    y = np.asarray(stayers_y, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("empty stayer set")
    w = stayer_weights(np.asarray(stayers_x, dtype=float).ravel(), bandwidth)
    out = np.atleast_1d(weighted_ecf(y, w, np.atleast_1d(v)))
    out[np.atleast_1d(np.asarray(v, dtype=float)) == 0.0] = 1.0 + 0.0j
    if np.isscalar(v) or np.asarray(v).ndim == 0:
        return complex(out[0])
    return out


def numerator_cf(
    movers_ratio: np.ndarray,
    movers_x: np.ndarray,
    bandwidth_at_i: float,
    x_i: float,
    u: float,
) -> complex:
    """Kernel regression of the mover ratio phases at a single point; exactly
    1 at u = 0."""
    if u == 0.0:
        return 1.0 + 0.0j
    w = gaussian_kernel_weights(movers_x, x_i, bandwidth_at_i)
    return complex(weighted_ecf(np.asarray(movers_ratio, dtype=float), w, u))


def knn_bandwidth(movers_x: np.ndarray, i: int, k: int) -> float:
    """Distance from mover i to its k-th nearest other mover.

    A zero k-th distance (ties at x_i) falls back to the smallest positive
    distance.
    """
    x = np.asarray(movers_x, dtype=float).ravel()
    if not 1 <= k < x.size:
        raise ValueError("neighbor count must be below the mover count")
    d = np.abs(np.delete(x, i) - x[i])
    d.sort()
    val = d[k - 1]
    if val > 0.0:
        return float(val)
    positive = d[d > 0.0]
    if positive.size == 0:
        raise ValueError("no positive neighbor distance")
    return float(positive[0])


def knn_bandwidths(movers_x: np.ndarray, k: int) -> np.ndarray:
    """`knn_bandwidth` for every mover at once."""
    x = np.asarray(movers_x, dtype=float).ravel()
    if not 1 <= k < x.size:
        raise ValueError("neighbor count must be below the mover count")
    dist = np.sort(np.abs(x[None, :] - x[:, None]), axis=1)
    # Column 0 is the self distance; the k-th neighbor sits at column k.
    val = dist[:, k]
    ties = val <= 0.0
    if np.any(ties):
        for i in np.flatnonzero(ties):
            positive = dist[i][dist[i] > 0.0]
            if positive.size == 0:
                raise ValueError("no positive neighbor distance")
            val[i] = positive[0]
    return val


def denominator_matrix(
    stayers_y: np.ndarray,
    weights: np.ndarray,
    movers_x: np.ndarray,
    nodes: np.ndarray,
) -> np.ndarray:
    """Disturbance characteristic function at node/x for every mover.

    Entry (i, l) is the stayer-weighted ECF evaluated at nodes[l] / x_i.
    Nodes must be nonnegative and increasing; a zero node yields exactly 1.
    Consecutive nodes reuse phase increments, so equally spaced grids cost a
    single complex exponential of the (mover, stayer) phase table.
    """
    y = np.asarray(stayers_y, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    x = np.asarray(movers_x, dtype=float).ravel()
    u = np.asarray(nodes, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("empty stayer set")
    if x.size == 0:
        raise ValueError("empty mover set")
    if np.any(u < 0.0) or np.any(np.diff(u) <= 0.0):
        raise ValueError("nodes must be nonnegative and increasing")
    base = np.outer(1.0 / x, y)
    out = np.empty((x.size, u.size), dtype=complex)
    if u[0] == 0.0:
        running = np.ones_like(base, dtype=complex)
        out[:, 0] = 1.0 + 0.0j
    else:
        running = np.exp(1j * u[0] * base)
        out[:, 0] = running @ w
    step_prev = None
    increment = None
    for ell in range(1, u.size):
        step = u[ell] - u[ell - 1]
        if increment is None or step != step_prev:
            increment = np.exp(1j * step * base)
            step_prev = step
        running *= increment
        out[:, ell] = running @ w
    return out


def numerator_matrix(
    ratios: np.ndarray,
    movers_x: np.ndarray,
    bandwidth: float | NearestNeighborRule | np.ndarray,
    nodes: np.ndarray,
) -> np.ndarray:
    """Kernel regression of the ratio phases at every mover's own location.

    Entry (i, l) is the regression at x_i and frequency nodes[l]. Bandwidth
    is a fixed width, a per-mover array, or a NearestNeighborRule. Each
    mover enters its own neighborhood, so row weights never vanish.
    """
    r = np.asarray(ratios, dtype=float).ravel()
    x = np.asarray(movers_x, dtype=float).ravel()
    u = np.asarray(nodes, dtype=float).ravel()
    if r.size == 0:
        raise ValueError("empty mover set")
    if isinstance(bandwidth, NearestNeighborRule):
        h = knn_bandwidths(x, bandwidth.count)[:, None]
    else:
        h = np.asarray(bandwidth, dtype=float)
        if h.ndim == 0:
            if not h > 0.0:
                raise ValueError("numerator bandwidth must be positive")
            h = np.broadcast_to(h, (x.size,))[:, None]
        else:
            if h.shape != x.shape or np.any(h <= 0.0):
                raise ValueError("per-mover bandwidths must be positive, one per mover")
            h = h[:, None]
    z = (x[None, :] - x[:, None]) / h
    weight = np.exp(-0.5 * z * z)
    weight /= weight.sum(axis=1, keepdims=True)
    phases = np.exp(1j * np.outer(r, u))
    out = weight.astype(complex) @ phases
    out[:, u == 0.0] = 1.0 + 0.0j
    return out


def trimmed_ratio_average(
    numerator: np.ndarray,
    denominator: np.ndarray,
    trim_threshold: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Average the trimmed ratios over movers, node by node.

    Terms with |denominator| <= trim_threshold contribute zero while the
    divisor stays at the full mover count.

    Returns
    -------
    (values, trim_fraction, retained_count)
        One entry per node (axis 1 of the inputs).
    """
    if numerator.shape != denominator.shape:
        raise ValueError("numerator/denominator shape mismatch")
    if not trim_threshold > 0.0:
        raise ValueError("trim threshold must be positive")
    keep = np.abs(denominator) > trim_threshold
    ratio = np.zeros_like(numerator)
    np.divide(numerator, denominator, out=ratio, where=keep)
    values = ratio.mean(axis=0)
    n_movers = numerator.shape[0]
    retained = keep.sum(axis=0)
    trim_fraction = (n_movers - retained) / n_movers
    return values, trim_fraction, retained.astype(int)


def target_from_half_grid(
    grid: FrequencyGrid,
    values_half: np.ndarray,
    trim_fraction_half: np.ndarray,
    retained_half: np.ndarray,
) -> FirstStageTarget:
    """Assemble a FirstStageTarget from quantities on the nonnegative nodes,
    reflecting to negative frequencies by conjugation."""
    values_half = np.asarray(values_half, dtype=complex)
    values_half[0] = 1.0 + 0.0j
    values = np.concatenate([np.conj(values_half[:0:-1]), values_half])
    trim = np.concatenate([trim_fraction_half[:0:-1], trim_fraction_half])
    kept = np.concatenate([retained_half[:0:-1], retained_half])
    finite = np.isfinite(values.real) & np.isfinite(values.imag)
    if not np.all(finite):
        bad = int(np.flatnonzero(~finite)[0])
        raise ValueError(f"non-finite first-stage value at node index {bad}")
    return FirstStageTarget(
        grid=grid, values=values, trim_fraction=trim, retained_count=kept
    )


def first_stage_irregular(
    sample: DifferencedSample,
    config: IrregularConfig,
    grid: FrequencyGrid,
) -> FirstStageTarget:
    """Run the full irregular-design first stage on a differenced sample.

    Partitions at the stayer threshold, estimates the disturbance
    characteristic function from stayers, kernel-regresses the mover ratio
    phases, and averages the trimmed ratios over movers per node. Values on
    the negative half-grid follow by conjugation.
    """
    part = partition_stayers(sample, config.stayer_threshold)
    s_idx = part.stayer_indices
    m_idx = part.mover_indices
    w0 = stayer_weights(sample.x[s_idx], config.effective_stayer_bandwidth)
    mover_x = sample.x[m_idx]
    ratios = sample.y[m_idx] / mover_x
    half = grid.nodes[grid.nonnegative_indices()]
    den = denominator_matrix(sample.y[s_idx], w0, mover_x, half)
    num = numerator_matrix(ratios, mover_x, config.numerator_bandwidth, half)
    values, trim, kept = trimmed_ratio_average(num, den, config.trim_threshold)
    return target_from_half_grid(grid, values, trim, kept)
