"""Spectral decomposition of a reversible, aperiodic kernel.

A kernel p reversible w.r.t. mu is similar to the symmetric matrix
S = D^(1/2) p D^(-1/2) with D = diag(mu). Its eigenvalues are real,
-1 < lam_1 <= ... <= lam_{N-1} < lam_N = 1, and the left/right
eigenvector pairs u_i = D v_i form a bi-orthonormal system with
u_N = mu, v_N = 1. Everything downstream (asymptotic covariances,
Jacobians) is expressed in this basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .kernels import ReversibleKernel

SYMMETRY_TOL = 1e-10
PERIODICITY_TOL = 1e-12


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues ascending; u[:, i], v[:, i] are the i-th left/right pair."""

    lambdas: np.ndarray
    u: np.ndarray
    v: np.ndarray
    mu: np.ndarray

    @property
    def n(self) -> int:
        return self.lambdas.shape[0]


def decompose(k: ReversibleKernel) -> SpectralDecomposition:
    """Full eigensystem of the kernel via its symmetric similarity transform.

    Errors if the kernel is periodic (lam_1 = -1); apply lazy_transform
    first in that case.
    """
    if not k.aperiodic:
        raise ValidationError(
            "kernel is periodic; apply lazy_transform before decomposing")
    root = np.sqrt(k.mu)
    s = root[:, None] * k.p / root[None, :]
    asym = float(np.max(np.abs(s - s.T)))
    if asym > SYMMETRY_TOL:
        raise ValidationError(
            f"similarity transform asymmetric by {asym:.2e}; kernel not reversible")
    s = 0.5 * (s + s.T)
    lambdas, w = np.linalg.eigh(s)

    if abs(lambdas[-1] - 1.0) > 1e-10:
        raise NumericalError(f"leading eigenvalue {lambdas[-1]!r} differs from 1")
    if lambdas[-1] - lambdas[-2] <= PERIODICITY_TOL:
        raise NumericalError("eigenvalue 1 is not simple; kernel not ergodic")
    if lambdas[0] <= -1.0 + PERIODICITY_TOL:
        raise NumericalError(
            "eigenvalue -1 present; kernel periodic, apply lazy_transform")
    lambdas = lambdas.copy()
    lambdas[-1] = 1.0

    # fix signs: largest-magnitude entry of each eigenvector made positive
    pick = np.argmax(np.abs(w), axis=0)
    signs = np.sign(w[pick, np.arange(w.shape[1])])
    w = w * signs[None, :]

    v = w / root[:, None]
    u = w * root[:, None]
    return SpectralDecomposition(lambdas=lambdas, u=u, v=v, mu=k.mu.copy())
