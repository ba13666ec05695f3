"""Closed-form asymptotic covariance matrices and their Lyapunov duals.

Let lam_i, u_i (i < N) be the non-principal eigenpairs of the base kernel
and H the N x D matrix of drift values at the root. The central limit
covariances of the scaled iterate and empirical-measure errors are finite
spectral sums:

  v_x(alpha)   = sum_i [ (1+lam_i)/(1-lam_i) ]
                 / [ 2 alpha (1+lam_i) + 2 - 1{a=1} ] u_i u_i^T
  u_theta(a)   = sum_i (1+lam_i)/(1-lam_i) / (alpha(1+lam_i)+1)^2
                 H^T u_i u_i^T H
  U            = sum_i (1+lam_i)/(1-lam_i) [H | I]^T u_i u_i^T [H | I]

Each also solves a Lyapunov equation driven by the Jacobian of the joint
mean field, which this module solves independently (Kronecker
vectorization + dense LU) so the two routes can be cross-checked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .kernels import ReversibleKernel
from .spectral import SpectralDecomposition

HURWITZ_MARGIN = 1e-10
LYAPUNOV_RESIDUAL_TOL = 1e-10
# dense kron solve: memory is 8 * d^4 bytes, ~0.5 GB at d = 90
LYAPUNOV_MAX_DIM = 90
SYMMETRY_TOL = 1e-10
PSD_TOL = -1e-10


def _check_exponent(value: float, name: str) -> float:
    if not 0.5 < value <= 1.0:
        raise ValidationError(f"{name} must lie in (0.5, 1], got {value}")
    return float(value)


def _check_alpha(alpha: float) -> float:
    if alpha < 0:
        raise ValidationError("alpha must be non-negative")
    return float(alpha)


def _mixing_coefficients(dec: SpectralDecomposition) -> np.ndarray:
    """(1+lam_i)/(1-lam_i) over the non-principal spectrum."""
    lam = dec.lambdas[:-1]
    if np.any(lam >= 1.0 - 1e-12):
        raise NumericalError("non-principal eigenvalue at 1; kernel not ergodic")
    return (1.0 + lam) / (1.0 - lam)


def _drift_matrix(h: np.ndarray, n: int) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] != n:
        raise ValidationError(f"drift matrix must be (N, D) with N={n}")
    return h


@dataclass(frozen=True)
class UBlocks:
    """Sampling covariance of the stationary base chain's joint noise."""

    u11: np.ndarray
    u12: np.ndarray
    u21: np.ndarray
    u22: np.ndarray

    def full(self) -> np.ndarray:
        return np.block([[self.u11, self.u12], [self.u21, self.u22]])


def matrix_u(dec: SpectralDecomposition, h: np.ndarray) -> UBlocks:
    h = _drift_matrix(h, dec.n)
    coef = _mixing_coefficients(dec)
    uc = dec.u[:, :-1]
    hu = h.T @ uc                       # (D, N-1)
    u11 = (hu * coef) @ hu.T
    u12 = (hu * coef) @ uc.T
    u22 = (uc * coef) @ uc.T
    return UBlocks(u11=u11, u12=u12, u21=u12.T.copy(), u22=u22)


def v_x(alpha: float, a_exponent: float, dec: SpectralDecomposition) -> np.ndarray:
    """Asymptotic covariance of gamma_n^(-1/2) (x_n - mu)."""
    alpha = _check_alpha(alpha)
    a_exponent = _check_exponent(a_exponent, "a_exponent")
    lam = dec.lambdas[:-1]
    denom = 2.0 * alpha * (1.0 + lam) + 2.0 - (1.0 if a_exponent == 1.0 else 0.0)
    coef = _mixing_coefficients(dec) / denom
    uc = dec.u[:, :-1]
    return (uc * coef) @ uc.T


def u_theta(alpha: float, dec: SpectralDecomposition, h: np.ndarray) -> np.ndarray:
    """Driving noise covariance of the theta recursion; O(1/alpha^2) decay."""
    alpha = _check_alpha(alpha)
    h = _drift_matrix(h, dec.n)
    lam = dec.lambdas[:-1]
    coef = _mixing_coefficients(dec) / (alpha * (1.0 + lam) + 1.0) ** 2
    hu = h.T @ dec.u[:, :-1]
    return (hu * coef) @ hu.T


@dataclass(frozen=True)
class JacobianBlocks:
    """Jacobian of the joint mean field at the root, in 2x2 block form."""

    j11: np.ndarray
    j12: np.ndarray
    j21: np.ndarray
    j22: np.ndarray
    alpha: float

    def full(self) -> np.ndarray:
        return np.block([[self.j11, self.j12], [self.j21, self.j22]])


def jacobian_j(alpha: float, grad_h: np.ndarray, h: np.ndarray,
               k: ReversibleKernel) -> JacobianBlocks:
    """J(alpha) with blocks [[grad_h, -alpha H^T (p^T + I)], [0, J22]] where
    J22 = 2 alpha mu 1^T - alpha p^T - (alpha + 1) I."""
    alpha = _check_alpha(alpha)
    n = k.n
    h = _drift_matrix(h, n)
    grad_h = np.asarray(grad_h, dtype=float)
    d = grad_h.shape[0]
    if grad_h.shape != (d, d) or h.shape[1] != d:
        raise ValidationError("grad_h and drift matrix dimensions disagree")
    j12 = -alpha * h.T @ (k.p.T + np.eye(n))
    j22 = (2.0 * alpha * np.outer(k.mu, np.ones(n)) - alpha * k.p.T
           - (alpha + 1.0) * np.eye(n))
    return JacobianBlocks(j11=grad_h, j12=j12, j21=np.zeros((n, d)), j22=j22,
                          alpha=alpha)


def lyapunov_solve(a: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Unique symmetric V with a V + V a^T + q = 0 for Hurwitz a.

    Solved by vectorization, (I (x) a + a (x) I) vec(V) = -vec(q), with a
    dense LU; fine at the dimensions this package works at. The residual
    is verified to 1e-10 * max(1, ||q||_F).
    """
    a = np.asarray(a, dtype=float)
    q = np.asarray(q, dtype=float)
    d = a.shape[0]
    if a.shape != (d, d) or q.shape != (d, d):
        raise ValidationError("lyapunov_solve needs square matrices of equal size")
    if d > LYAPUNOV_MAX_DIM:
        raise ValidationError(
            f"combined dimension {d} exceeds {LYAPUNOV_MAX_DIM}; the dense "
            f"vectorized solve would need a {d * d} x {d * d} system")
    if np.max(np.abs(q - q.T)) > SYMMETRY_TOL * max(1.0, np.abs(q).max()):
        raise ValidationError("lyapunov_solve right-hand side must be symmetric")
    eigs = np.linalg.eigvals(a)
    worst = eigs[np.argmax(eigs.real)]
    if worst.real >= -HURWITZ_MARGIN:
        raise NumericalError(
            f"matrix is not Hurwitz: eigenvalue {worst} has real part >= -1e-10")
    eye = np.eye(d)
    m = np.kron(eye, a) + np.kron(a, eye)
    vec = np.linalg.solve(m, -q.flatten(order="F"))
    v = vec.reshape((d, d), order="F")
    v = 0.5 * (v + v.T)
    residual = float(np.linalg.norm(a @ v + v @ a.T + q, "fro"))
    if residual > LYAPUNOV_RESIDUAL_TOL * max(1.0, float(np.linalg.norm(q, "fro"))):
        raise NumericalError(f"Lyapunov residual {residual:.2e} too large")
    return v


def v_theta_case1(alpha: float, grad_h: np.ndarray, b_exponent: float,
                  dec: SpectralDecomposition, h: np.ndarray) -> np.ndarray:
    """Iterate covariance when the measure runs on the faster timescale."""
    b_exponent = _check_exponent(b_exponent, "b_exponent")
    shift = 0.5 if b_exponent == 1.0 else 0.0
    a = np.asarray(grad_h, dtype=float) + shift * np.eye(grad_h.shape[0])
    return lyapunov_solve(a, u_theta(alpha, dec, h))


def v_theta_case3(grad_h: np.ndarray, dec: SpectralDecomposition,
                  h: np.ndarray) -> np.ndarray:
    """Iterate covariance when the measure runs on the slower timescale.

    Independent of alpha: the slow measure contributes no first-order
    noise, so the driving covariance is the alpha = 0 one. The exponent
    ordering b < a <= 1 forces b < 1, hence no half-shift.
    """
    return lyapunov_solve(np.asarray(grad_h, dtype=float), u_theta(0.0, dec, h))


def v_case2(alpha: float, grad_h: np.ndarray, b_exponent: float,
            dec: SpectralDecomposition, h: np.ndarray,
            k: ReversibleKernel) -> np.ndarray:
    """Joint covariance on matched timescales: solves the full augmented
    Lyapunov equation. Its bottom-right N x N block reproduces v_x."""
    b_exponent = _check_exponent(b_exponent, "b_exponent")
    jac = jacobian_j(alpha, grad_h, h, k).full()
    shift = 0.5 if b_exponent == 1.0 else 0.0
    a = jac + shift * np.eye(jac.shape[0])
    return lyapunov_solve(a, matrix_u(dec, h).full())


def loewner_lt(m1: np.ndarray, m2: np.ndarray, tol: float = 1e-10) -> bool:
    """True iff m1 < m2 in the Loewner order: m2 - m1 is PSD (to -tol)
    and the two matrices are not equal (Frobenius gap > tol)."""
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    if m1.shape != m2.shape or m1.ndim != 2 or m1.shape[0] != m1.shape[1]:
        raise ValidationError("loewner_lt needs two square matrices of equal shape")
    for m in (m1, m2):
        if np.max(np.abs(m - m.T)) > SYMMETRY_TOL * max(1.0, np.abs(m).max()):
            raise ValidationError("loewner_lt inputs must be symmetric")
    diff = m2 - m1
    if float(np.linalg.norm(diff, "fro")) <= tol:
        return False
    return float(np.linalg.eigvalsh(diff)[0]) >= -tol


@dataclass(frozen=True)
class CovarianceReport:
    """Theory-side summary for one (alpha, schedule) configuration."""

    alpha: float
    case_id: int
    a_exponent: float
    b_exponent: float
    v_x_matrix: np.ndarray
    v_theta_matrix: np.ndarray
    theta_dim: int

    def __post_init__(self):
        for m in (self.v_x_matrix, self.v_theta_matrix):
            if np.max(np.abs(m - m.T)) > SYMMETRY_TOL * max(1.0, np.abs(m).max()):
                raise NumericalError("covariance report matrix not symmetric")
            if float(np.linalg.eigvalsh(m)[0]) < PSD_TOL:
                raise NumericalError("covariance report matrix not PSD")

    @property
    def trace_v_x(self) -> float:
        return float(np.trace(self.v_x_matrix))

    @property
    def trace_v_theta(self) -> float:
        """Trace over the theta block only (excludes momentum/shb extras)."""
        return float(np.trace(self.v_theta_matrix))


def covariance_report(dec: SpectralDecomposition, h: np.ndarray,
                      grad_h: np.ndarray, k: ReversibleKernel, alpha: float,
                      a_exponent: float, b_exponent: float, case_id: int,
                      theta_block: slice | None = None) -> CovarianceReport:
    """Assemble v_x plus the case-appropriate iterate covariance.

    For case 2 the theta covariance is the top-left block of the full
    augmented solution (no standalone closed form exists there).
    """
    if case_id not in (1, 2, 3):
        raise ValidationError("case_id must be 1, 2 or 3")
    vx = v_x(alpha, a_exponent, dec)
    d = np.asarray(grad_h).shape[0]
    if case_id == 1:
        vt = v_theta_case1(alpha, grad_h, b_exponent, dec, h)
    elif case_id == 3:
        vt = v_theta_case3(grad_h, dec, h)
    else:
        vt = v_case2(alpha, grad_h, b_exponent, dec, h, k)[:d, :d]
    if theta_block is not None:
        vt = vt[theta_block, theta_block]
    return CovarianceReport(alpha=float(alpha), case_id=case_id,
                            a_exponent=float(a_exponent),
                            b_exponent=float(b_exponent),
                            v_x_matrix=vx, v_theta_matrix=vt,
                            theta_dim=vt.shape[0])
