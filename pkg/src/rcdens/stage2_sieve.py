"""Closed-form constrained sieve inversion of a first-stage target into a
density estimate.

The quadratic frequency-domain criterion has an explicit minimizer on the
affine set of coefficient vectors whose density integrates to one; the
Hermite basis makes the normal equations real. Post-processing truncates the
fitted density at zero and renormalizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from .numerics import FrequencyGrid, HermiteBasis, hermite_matrix, sieve_fourier_basis
from .stage1_irregular import FirstStageTarget

__all__ = [
    "SieveCoefficients",
    "DensityEstimate",
    "default_eval_grid",
    "assemble_normal_equations",
    "solve_constrained",
    "fit_coefficients",
    "SieveSolver",
    "sieve_criterion",
    "truncate_and_renormalize",
    "evaluate_and_postprocess",
]

ILL_CONDITIONED_MESSAGE = "ill-conditioned sieve system: reduce S or enlarge grid"
_MAX_CONDITION: float = 1e12

# Probe grid for the leaked-mass diagnostic: raw density mass that falls
# outside the evaluation window but inside [-8, 8].
_TAIL_PROBE = np.linspace(-8.0, 8.0, 1601)


@dataclass(frozen=True)
class SieveCoefficients:
    """Coefficient vector on the unit-mass constraint set."""

    pi: np.ndarray
    basis: HermiteBasis

    def __post_init__(self) -> None:
        pi = np.asarray(self.pi, dtype=float).ravel()
        object.__setattr__(self, "pi", pi)
        if pi.size != self.basis.dimension:
            raise ValueError("coefficient length must match basis dimension")
        if not np.all(np.isfinite(pi)):
            raise ValueError("non-finite coefficient")
        a = constraint_vector(self.basis)
        if abs(a @ pi - 1.0) > 1e-10:
            raise ValueError("coefficients violate the unit-mass constraint")


@dataclass(frozen=True)
class DensityEstimate:
    """Fitted density on an evaluation grid with moments.

    `raw_values` is the signed sieve evaluation; `processed_values` is the
    truncated-renormalized density. `tail_mass` reports the share of raw
    positive mass lying outside the evaluation window (diagnostic for a
    too-narrow grid).
    """

    eval_grid: np.ndarray
    raw_values: np.ndarray
    processed_values: np.ndarray
    mean: float
    variance: float
    sd: float
    tail_mass: float

    def __post_init__(self) -> None:
        b = np.asarray(self.eval_grid, dtype=float).ravel()
        raw = np.asarray(self.raw_values, dtype=float).ravel()
        proc = np.asarray(self.processed_values, dtype=float).ravel()
        object.__setattr__(self, "eval_grid", b)
        object.__setattr__(self, "raw_values", raw)
        object.__setattr__(self, "processed_values", proc)
        if raw.shape != b.shape or proc.shape != b.shape:
            raise ValueError("value length mismatch")
        if b.size < 2 or np.any(np.diff(b) <= 0.0):
            raise ValueError("evaluation grid must be increasing")
        if np.any(proc < 0.0):
            raise ValueError("processed density must be nonnegative")
        mass = integrate.trapezoid(proc, b)
        if abs(mass - 1.0) > 1e-8:
            raise ValueError("processed density must integrate to one")


def default_eval_grid() -> np.ndarray:
    """401 equally spaced points on [-3, 3]."""
    return np.linspace(-3.0, 3.0, 401)


def constraint_vector(basis: HermiteBasis) -> np.ndarray:
    """Real part of the Fourier basis at frequency zero; odd components
    vanish, so nothing is lost by dropping the imaginary part."""
    return np.real(sieve_fourier_basis(basis, 0.0)[0])


def assemble_normal_equations(
    target: FirstStageTarget,
    basis: HermiteBasis,
) -> tuple[np.ndarray, np.ndarray]:
    """Weighted normal equations of the frequency-domain criterion.

    Returns
    -------
    (omega, v)
        omega[s, t] = sum_l w_l Re(z_s(u_l) conj(z_t(u_l))), positive
        semidefinite by construction; v[s] = Re(sum_l w_l conj(m_l) z_s(u_l)).
    """
    grid = target.grid
    if grid.n_nodes < basis.dimension:
        raise ValueError("grid must have at least as many nodes as basis functions")
    z = sieve_fourier_basis(basis, grid.nodes)
    w = grid.weights
    omega = np.real((z * w[:, None]).T @ np.conj(z))
    omega = 0.5 * (omega + omega.T)
    v = np.real((np.conj(target.values) * w) @ z)
    return omega, v


def solve_constrained(
    omega: np.ndarray,
    v: np.ndarray,
    a: np.ndarray,
) -> SieveCoefficients:
    """Minimize the quadratic criterion subject to a'pi = 1, in closed form.

    pi = Omega^{-1}(v + ((1 - a'Omega^{-1}v) / (a'Omega^{-1}a)) a).
    """
    omega = np.asarray(omega, dtype=float)
    v = np.asarray(v, dtype=float).ravel()
    a = np.asarray(a, dtype=float).ravel()
    s = v.size
    if omega.shape != (s, s) or a.size != s:
        raise ValueError("system dimension mismatch")
    eigs = np.linalg.eigvalsh(omega)
    if eigs[0] <= 0.0 or eigs[-1] / eigs[0] > _MAX_CONDITION:
        raise ValueError(ILL_CONDITIONED_MESSAGE)
    try:
        factor = linalg.cho_factor(omega, lower=True)
    except linalg.LinAlgError as exc:  # pragma: no cover - guarded by eigs
        raise ValueError(ILL_CONDITIONED_MESSAGE) from exc
    solve_v = linalg.cho_solve(factor, v)
    solve_a = linalg.cho_solve(factor, a)
    multiplier = (1.0 - a @ solve_v) / (a @ solve_a)
    pi = solve_v + multiplier * solve_a
    return SieveCoefficients(pi=pi, basis=HermiteBasis(s))


def fit_coefficients(target: FirstStageTarget, basis: HermiteBasis) -> SieveCoefficients:
    """Assemble and solve in one step."""
    omega, v = assemble_normal_equations(target, basis)
    return solve_constrained(omega, v, constraint_vector(basis))


class SieveSolver:
    """Repeated solves against one (grid, basis) pair.

    The normal matrix depends only on the grid and the basis, so its
    Cholesky factor is computed once here; each `solve` call then costs a
    single triangular backsubstitution. Conditioning is checked at
    construction with the same threshold as `solve_constrained`.
    """

    def __init__(self, grid: FrequencyGrid, basis: HermiteBasis) -> None:
        if grid.n_nodes < basis.dimension:
            raise ValueError("grid must have at least as many nodes as basis functions")
        self.grid = grid
        self.basis = basis
        z = sieve_fourier_basis(basis, grid.nodes)
        w = grid.weights
        omega = np.real((z * w[:, None]).T @ np.conj(z))
        omega = 0.5 * (omega + omega.T)
        eigs = np.linalg.eigvalsh(omega)
        if eigs[0] <= 0.0 or eigs[-1] / eigs[0] > _MAX_CONDITION:
            raise ValueError(ILL_CONDITIONED_MESSAGE)
        self._z = z
        self._zw = np.conj(z).T * w[None, :]
        self._factor = linalg.cho_factor(omega, lower=True)
        self._a = constraint_vector(basis)
        self._solve_a = linalg.cho_solve(self._factor, self._a)

    def solve(self, target_values: np.ndarray) -> SieveCoefficients:
        values = np.asarray(target_values, dtype=complex).ravel()
        if values.size != self.grid.n_nodes:
            raise ValueError("target length must match the grid")
        v = np.real(self._zw @ values)
        solve_v = linalg.cho_solve(self._factor, v)
        a = self._a
        multiplier = (1.0 - a @ solve_v) / (a @ self._solve_a)
        return SieveCoefficients(pi=solve_v + multiplier * self._solve_a, basis=self.basis)

    def fitted(self, coeffs: SieveCoefficients) -> np.ndarray:
        """Characteristic function of the fitted density on the grid."""
        return self._z @ coeffs.pi.astype(complex)


def sieve_criterion(
    target: FirstStageTarget,
    coeffs: SieveCoefficients,
) -> float:
    """Weighted squared distance between the target and the sieve's
    characteristic function on the grid."""
    z = sieve_fourier_basis(coeffs.basis, target.grid.nodes)
    resid = target.values - z @ coeffs.pi.astype(complex)
    return float(np.sum(target.grid.weights * np.abs(resid) ** 2))


def truncate_and_renormalize(
    values: np.ndarray,
    eval_grid: np.ndarray,
) -> np.ndarray:
    """Clip below zero and rescale to unit trapezoid mass."""
    clipped = np.clip(values, 0.0, None)
    mass = integrate.trapezoid(clipped, eval_grid)
    if mass <= 0.0:
        raise ValueError("degenerate density")
    return clipped / mass


def evaluate_and_postprocess(
    coeffs: SieveCoefficients,
    eval_grid: np.ndarray | None = None,
) -> DensityEstimate:
    """Evaluate the sieve density, post-process, and integrate moments.

    Moments are trapezoid integrals of the processed density on the
    evaluation grid itself; `tail_mass` flags raw positive mass outside the
    window rather than silently widening the grid.
    """
    b = default_eval_grid() if eval_grid is None else np.asarray(eval_grid, dtype=float)
    if b.size < 2 or np.any(np.diff(b) <= 0.0):
        raise ValueError("evaluation grid must be increasing")
    raw = hermite_matrix(coeffs.basis.dimension, b) @ coeffs.pi
    processed = truncate_and_renormalize(raw, b)
    mean = float(integrate.trapezoid(b * processed, b))
    variance = float(integrate.trapezoid(b * b * processed, b) - mean * mean)
    variance = max(variance, 0.0)
    probe = _TAIL_PROBE
    probe_raw = np.clip(hermite_matrix(coeffs.basis.dimension, probe) @ coeffs.pi, 0.0, None)
    total = integrate.trapezoid(probe_raw, probe)
    inside = probe_raw.copy()
    inside[(probe < b[0]) | (probe > b[-1])] = 0.0
    tail_mass = float(1.0 - integrate.trapezoid(inside, probe) / total) if total > 0 else 0.0
    return DensityEstimate(
        eval_grid=b,
        raw_values=raw,
        processed_values=processed,
        mean=mean,
        variance=variance,
        sd=float(np.sqrt(variance)),
        tail_mass=max(tail_mass, 0.0),
    )
