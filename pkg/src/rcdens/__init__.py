"""Density estimation for correlated random coefficients in short panels.

Two-stage frequency-domain estimator: a kernel-weighted first stage turns the
differenced data into an estimate of the coefficient characteristic function
on a frequency grid, and a constrained Hermite sieve turns that into a
density. Companion modules supply tuning (repeated cross-validation with
feasibility gates), pairs-bootstrap inference, a simulation laboratory, and a
command line front end.
"""

from __future__ import annotations

__version__ = "0.1.0"
