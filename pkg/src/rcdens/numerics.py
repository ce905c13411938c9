"""Shared numeric kernels: Hermite functions, frequency grids, characteristic
function building blocks, and Gaussian kernel weights.

Everything here is a pure function of its inputs and safe to call from any
number of workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

__all__ = [
    "FrequencyGrid",
    "HermiteBasis",
    "WEIGHT_KINDS",
    "hermite_function",
    "hermite_matrix",
    "sieve_fourier_basis",
    "ecf",
    "weighted_ecf",
    "gaussian_kernel_weights",
    "build_frequency_grid",
]

# Relative slack when validating user-built grids; grids built here are exact.
_GRID_TOL: float = 1e-12
_WEIGHT_SUM_TOL: float = 1e-10

WEIGHT_KINDS = ("standard-normal", "student-t-3")


def _weight_density(kind: str, u: np.ndarray) -> np.ndarray:
    if kind == "standard-normal":
        return stats.norm.pdf(u)
    if kind == "student-t-3":
        return stats.t.pdf(u, df=3)
    raise ValueError(f"unknown weight kind: {kind!r}")


@dataclass(frozen=True)
class FrequencyGrid:
    """Symmetric frequency grid with quadrature weights.

    Parameters
    ----------
    nodes : ndarray
        Strictly increasing frequencies, symmetric about 0; the center node
        must be exactly 0.
    weights : ndarray
        Strictly positive quadrature weights, one per node.
    cutoff : float
        Largest node magnitude.
    """

    nodes: np.ndarray
    weights: np.ndarray
    cutoff: float

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "cutoff", float(self.cutoff))
        if nodes.ndim != 1 or nodes.size < 3:
            raise ValueError("grid needs at least 3 nodes")
        if nodes.size % 2 == 0:
            raise ValueError("node count must be odd")
        if weights.shape != nodes.shape:
            raise ValueError("weights shape mismatch")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("nodes must be finite")
        if not np.all(np.diff(nodes) > 0.0):
            raise ValueError("nodes must be strictly increasing")
        if nodes[nodes.size // 2] != 0.0:
            raise ValueError("center node must be exactly zero")
        scale = max(self.cutoff, 1.0)
        if np.max(np.abs(nodes + nodes[::-1])) > _GRID_TOL * scale:
            raise ValueError("nodes must be symmetric about zero")
        if abs(np.max(np.abs(nodes)) - self.cutoff) > _GRID_TOL * scale:
            raise ValueError("cutoff must equal the largest node magnitude")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0.0):
            raise ValueError("weights must be strictly positive and finite")

    @property
    def n_nodes(self) -> int:
        return int(self.nodes.size)

    @property
    def step(self) -> float:
        """Common node spacing (grids built by `build_frequency_grid` are
        equally spaced; for hand-built grids this is the first gap)."""
        return float(self.nodes[1] - self.nodes[0])

    @property
    def is_uniform(self) -> bool:
        gaps = np.diff(self.nodes)
        return bool(np.max(np.abs(gaps - gaps[0])) <= 1e-9 * abs(gaps[0]))

    def nonnegative_indices(self) -> np.ndarray:
        """Indices of the nodes >= 0, in increasing order."""
        return np.arange(self.nodes.size // 2, self.nodes.size)


@dataclass(frozen=True)
class HermiteBasis:
    """Finite orthonormal Hermite-function basis q_0, ..., q_{dimension-1}."""

    dimension: int

    def __post_init__(self) -> None:
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ValueError("dimension must be a positive integer")
        object.__setattr__(self, "dimension", int(self.dimension))

    def values(self, v: np.ndarray | float) -> np.ndarray:
        """Evaluate all basis functions; shape (n_points, dimension)."""
        return hermite_matrix(self.dimension, v)


def hermite_matrix(dimension: int, v: np.ndarray | float) -> np.ndarray:
    """Orthonormal Hermite functions q_0..q_{dimension-1} at the points `v`.

    Uses the normalized three-term recurrence
    q_{s+1}(v) = v*sqrt(2/(s+1))*q_s(v) - sqrt(s/(s+1))*q_{s-1}(v),
    which stays bounded for large order; the raw polynomial route overflows.

    Returns
    -------
    ndarray
        Shape (n_points, dimension).
    """
    if dimension < 1:
        raise ValueError("dimension must be a positive integer")
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    out = np.empty((arr.size, dimension))
    q_prev = np.pi ** (-0.25) * np.exp(-0.5 * arr * arr)
    out[:, 0] = q_prev
    if dimension == 1:
        return out
    q_curr = np.sqrt(2.0) * arr * q_prev
    out[:, 1] = q_curr
    for s in range(1, dimension - 1):
        q_next = arr * np.sqrt(2.0 / (s + 1)) * q_curr - np.sqrt(s / (s + 1.0)) * q_prev
        out[:, s + 1] = q_next
        q_prev, q_curr = q_curr, q_next
    return out


def hermite_function(order: int, v: np.ndarray | float) -> np.ndarray | float:
    """Orthonormal Hermite function of the given order at the points `v`."""
    if order < 0:
        raise ValueError("order must be nonnegative")
    vals = hermite_matrix(order + 1, v)[:, order]
    if np.isscalar(v) or np.asarray(v).ndim == 0:
        return float(vals[0])
    return vals


def sieve_fourier_basis(basis: HermiteBasis, u: np.ndarray | float) -> np.ndarray:
    """Fourier transforms of the Hermite basis functions at frequencies `u`.

    Component s equals sqrt(2*pi) * i**s * q_s(u): the Hermite functions are
    eigenfunctions of the Fourier transform, so no integration is needed.

    Returns
    -------
    ndarray (complex)
        Shape (n_points, dimension); row ell is the basis vector at u[ell].
    """
    q = hermite_matrix(basis.dimension, u)
    phases = 1j ** np.arange(basis.dimension)
    return np.sqrt(2.0 * np.pi) * q * phases[np.newaxis, :]


def ecf(values: np.ndarray, point: np.ndarray | float) -> np.ndarray | complex:
    """Empirical characteristic function (1/n) * sum_j exp(i*point*value_j).

    Accepts a scalar or an array of evaluation points.
    """
    vals = np.asarray(values, dtype=float).ravel()
    if vals.size == 0:
        raise ValueError("empty sample")
    pts = np.atleast_1d(np.asarray(point, dtype=float))
    out = np.exp(1j * np.outer(pts, vals)).mean(axis=1)
    if np.isscalar(point) or np.asarray(point).ndim == 0:
        return complex(out[0])
    return out


def weighted_ecf(
    values: np.ndarray,
    weights: np.ndarray,
    point: np.ndarray | float,
) -> np.ndarray | complex:
    """Weighted empirical characteristic function sum_j w_j exp(i*point*value_j).

    Weights must be nonnegative and sum to 1 within 1e-10.
    """
    vals = np.asarray(values, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if vals.size == 0:
        raise ValueError("empty sample")
    if w.shape != vals.shape:
        raise ValueError("weights shape mismatch")
    if np.any(w < 0.0) or abs(w.sum() - 1.0) > _WEIGHT_SUM_TOL:
        raise ValueError("unnormalized weights")
    pts = np.atleast_1d(np.asarray(point, dtype=float))
    out = np.exp(1j * np.outer(pts, vals)) @ w
    if np.isscalar(point) or np.asarray(point).ndim == 0:
        return complex(out[0])
    return out


def gaussian_kernel_weights(
    anchors: np.ndarray,
    center: float,
    bandwidth: float,
) -> np.ndarray:
    """Normalized Gaussian kernel weights of the anchors around the center.

    Weight j is proportional to exp(-((anchor_j - center)/bandwidth)^2 / 2).
    Raises if every raw kernel value underflows to zero (the center sits far
    outside the anchor support relative to the bandwidth).
    """
    a = np.asarray(anchors, dtype=float).ravel()
    if a.size == 0:
        raise ValueError("empty sample")
    if not bandwidth > 0.0:
        raise ValueError("bandwidth must be positive")
    if a.size == 1:
        # Normalizing a single positive kernel value gives 1 for any distance;
        # skipping the evaluation avoids a spurious underflow error.
        return np.ones(1)
    z = (a - center) / bandwidth
    # No max-shift trick here: total underflow must surface as an error, not
    # be renormalized away.
    raw = np.exp(-0.5 * z * z)
    total = raw.sum()
    if total == 0.0 or not np.isfinite(total):
        raise ValueError("empty kernel neighborhood")
    return raw / total


def build_frequency_grid(
    cutoff: float,
    n_nodes: int,
    weight_kind: str = "standard-normal",
) -> FrequencyGrid:
    """Equally spaced symmetric frequency grid with density-weighted
    trapezoid quadrature weights.

    Parameters
    ----------
    cutoff : float
        Half-width of the grid; nodes cover [-cutoff, cutoff].
    n_nodes : int
        Odd node count >= 3 so that 0 is a node.
    weight_kind : str
        Weighting density: "standard-normal" or "student-t-3".

    Returns
    -------
    FrequencyGrid
        Node ell carries weight step * density(node); the two endpoints get
        half weight (trapezoid end-correction).
    """
    if not cutoff > 0.0:
        raise ValueError("cutoff must be positive")
    if n_nodes < 3 or n_nodes % 2 == 0:
        raise ValueError("node count must be odd and at least 3")
    if weight_kind not in WEIGHT_KINDS:
        raise ValueError(f"unknown weight kind: {weight_kind!r}")
    half = np.linspace(0.0, float(cutoff), (n_nodes + 1) // 2)
    nodes = np.concatenate([-half[:0:-1], half])
    step = 2.0 * float(cutoff) / (n_nodes - 1)
    weights = step * _weight_density(weight_kind, nodes)
    weights[0] *= 0.5
    weights[-1] *= 0.5
    return FrequencyGrid(nodes=nodes, weights=weights, cutoff=float(cutoff))
