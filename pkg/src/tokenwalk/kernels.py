"""Reversible base kernels and the self-repellent reweighting.

The base chain is a Metropolis-Hastings random walk (MHRW) with an
arbitrary strictly positive target mu. The self-repellent walk reweights
row i of the base kernel by (x_j / mu_j)^(-alpha), where x is the running
empirical measure: nodes visited more than their target share become less
likely. alpha = 0 recovers the base chain exactly.

All reweighting is done in the log domain with a row-max shift so large
alpha stays finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ValidationError
from .graphs import Graph, degrees, is_bipartite

ROW_SUM_TOL = 1e-12
DETAILED_BALANCE_TOL = 1e-12
TARGET_SUM_TOL = 1e-12
# srrw inputs are simplex points, but jacobian cross-checks evaluate at
# finite-difference perturbations, so the sum check is deliberately loose
X_SUM_TOL = 1e-3


def uniform_target(n: int) -> np.ndarray:
    if n <= 0:
        raise ValidationError("target dimension must be positive")
    return np.full(n, 1.0 / n)


def check_target(mu: np.ndarray, n: int | None = None) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1:
        raise ValidationError("target distribution must be a vector")
    if n is not None and mu.shape[0] != n:
        raise ValidationError(f"target has length {mu.shape[0]}, expected {n}")
    if np.any(mu <= 0.0):
        raise ValidationError("target distribution entries must be strictly positive")
    if abs(float(mu.sum()) - 1.0) > TARGET_SUM_TOL:
        raise ValidationError("target distribution must sum to 1")
    return mu


def check_measure(x: np.ndarray, n: int) -> np.ndarray:
    """Validate an (approximate) interior point of the simplex."""
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ValidationError(f"measure has shape {x.shape}, expected ({n},)")
    if np.any(x <= 0.0):
        raise ValidationError("measure entries must be strictly positive")
    if abs(float(x.sum()) - 1.0) > X_SUM_TOL:
        raise ValidationError("measure must (approximately) sum to 1")
    return x


@dataclass(frozen=True)
class ReversibleKernel:
    """Row-stochastic kernel p reversible with respect to mu."""

    p: np.ndarray
    mu: np.ndarray
    aperiodic: bool

    def __post_init__(self):
        p, mu = self.p, self.mu
        n = mu.shape[0]
        if p.shape != (n, n):
            raise ValidationError("kernel matrix shape does not match target")
        if np.any(p < 0.0):
            raise ValidationError("kernel has a negative entry")
        if np.max(np.abs(p.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
            raise ValidationError("kernel rows must sum to 1")
        flux = mu[:, None] * p
        if np.max(np.abs(flux - flux.T)) > DETAILED_BALANCE_TOL:
            raise ValidationError("kernel is not reversible with respect to target")

    @property
    def n(self) -> int:
        return self.mu.shape[0]


def build_mhrw(g: Graph, mu: np.ndarray) -> ReversibleKernel:
    """Metropolis-Hastings walk on g targeting mu.

    Off-diagonal: p_ij = (1/d_i) min(1, mu_j d_i / (mu_i d_j)) on edges,
    computed as a symmetric flux min(mu_i/d_i, mu_j/d_j) divided by mu_i so
    detailed balance holds to rounding. Diagonal takes the rejection mass.
    """
    mu = check_target(mu, g.n)
    d = degrees(g).astype(float)
    ratio = mu / d
    p = np.zeros((g.n, g.n))
    for i in range(g.n):
        for j in g.adjacency[i]:
            p[i, j] = min(ratio[i], ratio[j]) / mu[i]
        p[i, i] = max(0.0, 1.0 - p[i].sum())
    has_holding = bool(np.any(np.diag(p) > 0.0))
    return ReversibleKernel(p=p, mu=mu, aperiodic=has_holding or not is_bipartite(g))


def lazy_transform(k: ReversibleKernel, eps: float) -> ReversibleKernel:
    """(1-eps) p + eps I; maps every eigenvalue lam to (1-eps) lam + eps."""
    if not 0.0 < eps < 1.0:
        raise ValidationError("laziness eps must lie in (0, 1)")
    n = k.n
    return ReversibleKernel(p=(1.0 - eps) * k.p + eps * np.eye(n), mu=k.mu,
                            aperiodic=True)


def kernel_to_csv(k: ReversibleKernel) -> str:
    """Debug serialization: header line N, then the N kernel rows."""
    lines = [str(k.n)]
    for row in k.p:
        lines.append(",".join(format(v, ".17g") for v in row))
    return "\n".join(lines) + "\n"


def _log_weights(k: ReversibleKernel, x: np.ndarray, alpha: float) -> np.ndarray:
    """log p_ij - alpha (log x_j - log mu_j), -inf off the support."""
    with np.errstate(divide="ignore"):
        logp = np.log(k.p)
    return logp - alpha * (np.log(x) - np.log(k.mu))[None, :]


def srrw_row(k: ReversibleKernel, x: np.ndarray, i: int, alpha: float) -> np.ndarray:
    """Transition row i of the self-repellent kernel at empirical measure x."""
    if alpha < 0:
        raise ValidationError("alpha must be non-negative")
    if not 0 <= i < k.n:
        raise ValidationError(f"node index {i} out of range")
    x = check_measure(x, k.n)
    if alpha == 0.0:
        return k.p[i].copy()
    logw = _log_weights(k, x, alpha)[i]
    w = np.exp(logw - logw.max())
    return w / w.sum()


def srrw_kernel_matrix(k: ReversibleKernel, x: np.ndarray, alpha: float) -> np.ndarray:
    """All N transition rows at once."""
    if alpha < 0:
        raise ValidationError("alpha must be non-negative")
    x = check_measure(x, k.n)
    if alpha == 0.0:
        return k.p.copy()
    logw = _log_weights(k, x, alpha)
    w = np.exp(logw - logw.max(axis=1, keepdims=True))
    return w / w.sum(axis=1, keepdims=True)


def srrw_stationary(k: ReversibleKernel, x: np.ndarray, alpha: float) -> np.ndarray:
    """Stationary distribution of the frozen kernel K[x].

    pi_i[x] is proportional to sum_j mu_i p_ij (x_i/mu_i)^-alpha
    (x_j/mu_j)^-alpha; the fixed point is pi[mu] = mu. Computed with
    logsumexp for large-alpha safety.
    """
    if alpha < 0:
        raise ValidationError("alpha must be non-negative")
    x = check_measure(x, k.n)
    if alpha == 0.0:
        return k.mu.copy()
    shift = -alpha * (np.log(x) - np.log(k.mu))
    with np.errstate(divide="ignore"):
        logs = np.log(k.mu)[:, None] + np.log(k.p) + shift[:, None] + shift[None, :]
    log_rows = logsumexp(logs, axis=1)
    pi = np.exp(log_rows - logsumexp(log_rows))
    return pi / pi.sum()


def pi_jacobian(k: ReversibleKernel, x: np.ndarray, alpha: float) -> np.ndarray:
    """Jacobian of the mean-field drift x -> pi[x] - x, entrywise closed form.

    With w_ij = mu_i p_ij (x_i/mu_i)^-alpha (x_j/mu_j)^-alpha, row sums r
    and total S:

      d(pi_i - x_i)/dx_j = (2 alpha / x_j) r_i r_j / S^2
                           - (alpha / x_j) w_ij / S          (i != j)
      d(pi_i - x_i)/dx_i = (2 alpha / x_i) r_i^2 / S^2
                           - (alpha / x_i)(r_i + w_ii) / S - 1

    At x = mu this equals 2 alpha mu 1^T - alpha p^T - (alpha + 1) I; at
    alpha = 0 it is -I.
    """
    if alpha < 0:
        raise ValidationError("alpha must be non-negative")
    x = check_measure(x, k.n)
    shift = -alpha * (np.log(x) - np.log(k.mu))
    with np.errstate(divide="ignore"):
        logs = np.log(k.mu)[:, None] + np.log(k.p) + shift[:, None] + shift[None, :]
    w = np.exp(logs - logs.max())
    r = w.sum(axis=1)
    total = r.sum()
    pi = r / total
    jac = 2.0 * alpha * np.outer(pi, pi / x) - alpha * (w / total) / x[None, :]
    jac[np.diag_indices_from(jac)] = (
        2.0 * alpha * pi * pi / x
        - alpha * (r / total + np.diag(w) / total) / x
        - 1.0
    )
    return jac


@dataclass(frozen=True)
class SrrwProcessState:
    """One walker: current node, running empirical measure, step count."""

    node: int
    x: np.ndarray
    n_steps: int


def srrw_step(state: SrrwProcessState, k: ReversibleKernel, alpha: float,
              gamma: float, rng: np.random.Generator) -> SrrwProcessState:
    """Advance one transition: sample the next node with a single uniform
    via inverse CDF, then shift x toward the visited node by gamma."""
    if not 0.0 < gamma < 1.0:
        raise ValidationError("gamma must lie in (0, 1)")
    row = srrw_row(k, state.x, state.node, alpha)
    c = np.cumsum(row)
    u = rng.random()
    j = min(int(np.searchsorted(c, u, side="right")), k.n - 1)
    delta = np.zeros(k.n)
    delta[j] = 1.0
    x_next = state.x + gamma * (delta - state.x)
    return SrrwProcessState(node=j, x=x_next, n_steps=state.n_steps + 1)
