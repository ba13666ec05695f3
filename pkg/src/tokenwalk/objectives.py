"""Per-node objectives, stochastic drift fields and the mean-field root.

Each node i of the graph owns one term F(theta, i) of the global objective
f(theta) = sum_i mu_i F(theta, i). Three families are provided:

  logistic   log(1 + exp(theta.s_i)) - y_i theta.s_i + (kappa/2)|theta|^2
  ncreg      (s_i.theta - y_i)^2 + kappa sum_j theta_j^2/(theta_j^2+1)
  quadratic  0.5 |theta - c_i|^2   (root = mu-weighted mean of centers)

A drift field turns an objective into the update direction H(z, i) of the
stochastic recursion, optionally augmenting the state with heavy-ball or
adaptive-momentum coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import NumericalError, ParseError, ValidationError
from .rng import make_rng


@dataclass(frozen=True)
class Dataset:
    """Dense feature rows with binary labels in {0, 1}."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ValidationError("dataset features/labels shapes disagree")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def parse_libsvm(text, feature_dim: int) -> Dataset:
    """Parse LIBSVM-format lines: '<label> <idx>:<val> ...', indices 1-based.

    Labels are mapped to {0,1} by sign (+1/-1 conventions included);
    indices above feature_dim are rejected.
    """
    if feature_dim <= 0:
        raise ValidationError("feature_dim must be positive")
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    rows: list[np.ndarray] = []
    labels: list[float] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        try:
            raw_label = float(tokens[0])
        except ValueError:
            raise ParseError(f"bad label {tokens[0]!r}", lineno) from None
        row = np.zeros(feature_dim)
        seen: set[int] = set()
        for tok in tokens[1:]:
            idx_s, _, val_s = tok.partition(":")
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(f"bad feature token {tok!r}", lineno) from None
            if not 1 <= idx <= feature_dim:
                raise ParseError(
                    f"feature index {idx} outside [1, {feature_dim}]", lineno)
            if idx in seen:
                raise ParseError(f"duplicate feature index {idx}", lineno)
            seen.add(idx)
            row[idx - 1] = val
        rows.append(row)
        labels.append(1.0 if raw_label > 0 else 0.0)
    if not rows:
        raise ValidationError("dataset is empty")
    return Dataset(features=np.array(rows), labels=np.array(labels))


def assign_to_nodes(ds: Dataset, n_nodes: int) -> Dataset:
    """Node i holds sample i: the first n_nodes rows, order preserved."""
    if ds.n_samples < n_nodes:
        raise ValidationError(
            f"dataset has {ds.n_samples} samples, need at least {n_nodes}")
    return Dataset(features=ds.features[:n_nodes].copy(),
                   labels=ds.labels[:n_nodes].copy())


@dataclass(frozen=True)
class Objective:
    """Node-indexed objective; all evaluators are batched over replicas."""

    kind: str
    dim: int
    n_nodes: int
    kappa: float = 0.0
    features: np.ndarray | None = None     # (N, D) for logistic/ncreg
    labels: np.ndarray | None = None       # (N,)
    centers: np.ndarray | None = None      # (N, D) for quadratic

    def loss(self, theta: np.ndarray, i: int) -> float:
        theta = np.asarray(theta, dtype=float)
        if self.kind == "logistic":
            t = float(self.features[i] @ theta)
            return (float(np.logaddexp(0.0, t)) - self.labels[i] * t
                    + 0.5 * self.kappa * float(theta @ theta))
        if self.kind == "ncreg":
            r = float(self.features[i] @ theta) - self.labels[i]
            return r * r + self.kappa * float(np.sum(theta**2 / (theta**2 + 1.0)))
        return 0.5 * float(np.sum((theta - self.centers[i]) ** 2))

    def grad(self, theta: np.ndarray, i: int) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return self.grad_nodes(theta[None, :], np.array([i]))[0]

    def hess(self, theta: np.ndarray, i: int) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.kind == "logistic":
            s = self.features[i]
            p = expit(float(s @ theta))
            return p * (1.0 - p) * np.outer(s, s) + self.kappa * np.eye(self.dim)
        if self.kind == "ncreg":
            s = self.features[i]
            curve = (2.0 - 6.0 * theta**2) / (theta**2 + 1.0) ** 3
            return 2.0 * np.outer(s, s) + self.kappa * np.diag(curve)
        return np.eye(self.dim)

    def grad_nodes(self, thetas: np.ndarray, nodes: np.ndarray) -> np.ndarray:
        """Per-replica gradient: row r is grad F(thetas[r], nodes[r])."""
        if self.kind == "logistic":
            s = self.features[nodes]
            t = np.einsum("rd,rd->r", s, thetas)
            coef = expit(t) - self.labels[nodes]
            return s * coef[:, None] + self.kappa * thetas
        if self.kind == "ncreg":
            s = self.features[nodes]
            r = np.einsum("rd,rd->r", s, thetas) - self.labels[nodes]
            reg = 2.0 * thetas / (thetas**2 + 1.0) ** 2
            return 2.0 * s * r[:, None] + self.kappa * reg
        return thetas - self.centers[nodes]

    def grad_all(self, theta: np.ndarray) -> np.ndarray:
        """Gradients of every node's term at one theta, stacked (N, D)."""
        theta = np.asarray(theta, dtype=float)
        nodes = np.arange(self.n_nodes)
        return self.grad_nodes(np.broadcast_to(theta, (self.n_nodes, self.dim)),
                               nodes)

    def loss_all(self, theta: np.ndarray) -> np.ndarray:
        """Loss of every node's term at one theta, stacked (N,)."""
        theta = np.asarray(theta, dtype=float)
        if self.kind == "logistic":
            t = self.features @ theta
            return (np.logaddexp(0.0, t) - self.labels * t
                    + 0.5 * self.kappa * float(theta @ theta))
        if self.kind == "ncreg":
            r = self.features @ theta - self.labels
            return r * r + self.kappa * float(np.sum(theta**2 / (theta**2 + 1.0)))
        return 0.5 * np.sum((theta[None, :] - self.centers) ** 2, axis=1)

    def hess_mean(self, theta: np.ndarray, mu: np.ndarray) -> np.ndarray:
        """mu-weighted mean Hessian, vectorized per family."""
        theta = np.asarray(theta, dtype=float)
        if self.kind == "logistic":
            t = self.features @ theta
            w = mu * expit(t) * (1.0 - expit(t))
            return (self.features.T * w) @ self.features + self.kappa * np.eye(self.dim)
        if self.kind == "ncreg":
            curve = (2.0 - 6.0 * theta**2) / (theta**2 + 1.0) ** 3
            return (2.0 * (self.features.T * mu) @ self.features
                    + self.kappa * np.diag(curve))
        return np.eye(self.dim)


def logistic_objective(features: np.ndarray, labels: np.ndarray,
                       kappa: float = 1.0) -> Objective:
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if kappa < 0:
        raise ValidationError("kappa must be non-negative")
    if set(np.unique(labels)) - {0.0, 1.0}:
        raise ValidationError("logistic labels must be in {0, 1}")
    return Objective(kind="logistic", dim=features.shape[1],
                     n_nodes=features.shape[0], kappa=kappa,
                     features=features, labels=labels)


def ncreg_objective(features: np.ndarray, labels: np.ndarray,
                    kappa: float = 1.0) -> Objective:
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if kappa < 0:
        raise ValidationError("kappa must be non-negative")
    return Objective(kind="ncreg", dim=features.shape[1],
                     n_nodes=features.shape[0], kappa=kappa,
                     features=features, labels=labels)


def quadratic_objective(centers: np.ndarray) -> Objective:
    centers = np.asarray(centers, dtype=float)
    if centers.ndim != 2:
        raise ValidationError("centers must be (N, D)")
    return Objective(kind="quadratic", dim=centers.shape[1],
                     n_nodes=centers.shape[0], centers=centers)


def make_quadratic_toy(n_nodes: int, dim: int = 2, seed: int = 0) -> Objective:
    """Seeded standard-normal centers; the canonical exactly-solvable case."""
    rng = make_rng(seed)
    return quadratic_objective(rng.normal(size=(n_nodes, dim)))


VARIANTS = ("sgd", "shb", "momentum")


@dataclass(frozen=True)
class DriftField:
    """Stochastic update direction H(z, i), possibly on an augmented state.

    sgd       z = theta,        H = -grad F(theta, i)
    shb       z = (theta, m),   H = (-m, grad F(theta, i) - m)
    momentum  z = (v, m, theta) H = (g^2 - v, g - m, -m / sqrt(v + eps))
    """

    variant: str
    objective: Objective
    epsilon: float = 1e-8
    dim_aug: int = field(init=False)
    theta_slice: slice = field(init=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")
        d = self.objective.dim
        if self.variant == "sgd":
            object.__setattr__(self, "dim_aug", d)
            object.__setattr__(self, "theta_slice", slice(0, d))
        elif self.variant == "shb":
            object.__setattr__(self, "dim_aug", 2 * d)
            object.__setattr__(self, "theta_slice", slice(0, d))
        else:
            object.__setattr__(self, "dim_aug", 3 * d)
            object.__setattr__(self, "theta_slice", slice(2 * d, 3 * d))

    def batch(self, z: np.ndarray, nodes: np.ndarray) -> np.ndarray:
        """H(z[r], nodes[r]) stacked over replicas r."""
        d = self.objective.dim
        if self.variant == "sgd":
            return -self.objective.grad_nodes(z, nodes)
        if self.variant == "shb":
            theta, m = z[:, :d], z[:, d:]
            g = self.objective.grad_nodes(theta, nodes)
            return np.concatenate([-m, g - m], axis=1)
        v, m, theta = z[:, :d], z[:, d:2 * d], z[:, 2 * d:]
        g = self.objective.grad_nodes(theta, nodes)
        return np.concatenate([g * g - v, g - m, -m / np.sqrt(v + self.epsilon)],
                              axis=1)

    def single(self, z: np.ndarray, node: int) -> np.ndarray:
        return self.batch(np.asarray(z, dtype=float)[None, :], np.array([node]))[0]

    def mean_field(self, z: np.ndarray, mu: np.ndarray) -> np.ndarray:
        """h(z) = sum_i mu_i H(z, i)."""
        z = np.asarray(z, dtype=float)
        d = self.objective.dim
        theta = z[self.theta_slice]
        g_all = self.objective.grad_all(theta)
        g_bar = mu @ g_all
        if self.variant == "sgd":
            return -g_bar
        if self.variant == "shb":
            m = z[d:]
            return np.concatenate([-m, g_bar - m])
        v, m = z[:d], z[d:2 * d]
        v_bar = mu @ (g_all * g_all)
        return np.concatenate([v_bar - v, g_bar - m, -m / np.sqrt(v + self.epsilon)])


def make_drift(objective: Objective, variant: str = "sgd",
               epsilon: float = 1e-8) -> DriftField:
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    return DriftField(variant=variant, objective=objective, epsilon=epsilon)


@dataclass(frozen=True)
class Equilibrium:
    """Root of the mean field with everything the theory layer needs."""

    theta_star: np.ndarray
    z_star: np.ndarray
    grad_h: np.ndarray          # Jacobian of the mean field at z_star
    drift_matrix: np.ndarray    # (N, dim_aug), row i = H(z_star, i)
    grad_norm: float
    iterations: int
    hurwitz_margin: float       # max real part of grad_h spectrum (negative)
    variant: str


def _solve_mean_root(objective: Objective, mu: np.ndarray, theta0: np.ndarray,
                     tol: float, max_iter: int) -> tuple[np.ndarray, int]:
    """Damped Newton on the mu-weighted mean gradient.

    Backtracks on the gradient sup norm rather than on the objective
    value: near the root a value-based descent test drowns in rounding
    noise long before the gradient reaches the requested tolerance.
    """

    def grad(th):
        return mu @ objective.grad_all(th)

    theta = theta0.astype(float).copy()
    g = grad(theta)
    for it in range(1, max_iter + 1):
        norm = float(np.max(np.abs(g)))
        if norm <= tol:
            return theta, it - 1
        hess = objective.hess_mean(theta, mu)
        try:
            newton = np.linalg.solve(hess, g)
        except np.linalg.LinAlgError:
            newton = g
        moved = False
        for direction in (newton, g):   # plain gradient as fallback
            t = 1.0
            for _ in range(60):
                trial = theta - t * direction
                g_trial = grad(trial)
                if float(np.max(np.abs(g_trial))) <= (1.0 - 1e-4 * t) * norm:
                    theta, g = trial, g_trial
                    moved = True
                    break
                t *= 0.5
            if moved:
                break
        if not moved:
            raise NumericalError("line search stalled in solve_theta_star")
    raise NumericalError(
        f"solve_theta_star did not reach tolerance in {max_iter} iterations")


def solve_theta_star(objective: Objective, mu: np.ndarray, variant: str = "sgd",
                     theta0: np.ndarray | None = None, tol: float = 1e-10,
                     max_iter: int = 10**6, epsilon: float = 1e-8) -> Equilibrium:
    """Find theta* with ||grad f|| <= tol, then assemble the variant's
    augmented root, mean-field Jacobian and drift matrix.

    The Jacobian must be Hurwitz (all eigenvalue real parts < 0); a
    violation (e.g. a saddle of a non-convex objective) raises.
    """
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (objective.n_nodes,):
        raise ValidationError("target distribution length must match node count")
    d = objective.dim
    if theta0 is None:
        theta0 = np.zeros(d)
    theta0 = np.asarray(theta0, dtype=float)

    if objective.kind == "quadratic":
        theta_star, iters = mu @ objective.centers, 0
    else:
        theta_star, iters = _solve_mean_root(objective, mu, theta0, tol,
                                             max_iter)

    g_all = objective.grad_all(theta_star)
    g_bar = mu @ g_all
    grad_norm = float(np.linalg.norm(g_bar))
    hess = objective.hess_mean(theta_star, mu)

    if variant == "sgd":
        z_star = theta_star
        grad_h = -hess
        drift = -g_all
    elif variant == "shb":
        z_star = np.concatenate([theta_star, np.zeros(d)])
        grad_h = np.block([[np.zeros((d, d)), -np.eye(d)],
                           [hess, -np.eye(d)]])
        drift = np.concatenate([np.zeros_like(g_all), g_all], axis=1)
    elif variant == "momentum":
        v_star = mu @ (g_all * g_all)
        z_star = np.concatenate([v_star, np.zeros(d), theta_star])
        # d(g^2)/dtheta at the root, averaged over nodes
        w = np.zeros((d, d))
        for i in range(objective.n_nodes):
            w += mu[i] * 2.0 * np.diag(g_all[i]) @ objective.hess(theta_star, i)
        s = np.diag(1.0 / np.sqrt(v_star + epsilon))
        zero = np.zeros((d, d))
        grad_h = np.block([[-np.eye(d), zero, w],
                           [zero, -np.eye(d), hess],
                           [zero, -s, zero]])
        drift = np.concatenate([g_all * g_all - v_star[None, :], g_all,
                                np.zeros_like(g_all)], axis=1)
    else:
        raise ValidationError(f"unknown variant {variant!r}")

    eigs = np.linalg.eigvals(grad_h)
    worst = eigs[np.argmax(eigs.real)]
    if worst.real >= 0.0:
        raise NumericalError(
            f"mean-field Jacobian not Hurwitz: eigenvalue {worst}")
    return Equilibrium(theta_star=theta_star, z_star=z_star, grad_h=grad_h,
                       drift_matrix=drift, grad_norm=grad_norm,
                       iterations=iters, hurwitz_margin=float(worst.real),
                       variant=variant)
