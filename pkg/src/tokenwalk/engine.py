"""Two-timescale stochastic approximation driven by the self-repellent walk.

One step from state (X_n, x_n, z_n), using the step sizes indexed n+1:

  X_{n+1} ~ row X_n of the self-repellent kernel at measure x_n
  x_{n+1}  = x_n + gamma_{n+1} (e_{X_{n+1}} - x_n)
  z_{n+1}  = z_n + beta_{n+1} H(z_n, X_{n+1})

Replicas advance in lockstep as rows of (R, .) arrays; every array
operation is row-local, so a batch of R replicas is bit-identical to R
separate single-replica runs with the same per-replica seeds (replica r
consumes only its own Philox stream, seeded independently). Node sampling
uses one uniform per step through the row's inverse CDF.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .kernels import ReversibleKernel, check_measure, uniform_target
from .rng import make_rng

UNIFORM_BLOCK = 4096
RENORM_EVERY = 10**6
DIVERGENCE_BOUND = 1e8
RECORD_PER_DECADE = 200
RECORD_CAP = 1000


@dataclass(frozen=True)
class StepSchedule:
    """Polynomial step sizes beta_n = (n+1)^-b, gamma_n = (n+1)^-a with
    exponents in (0.5, 1]. The a/b ordering picks the timescale case:
    1 means the measure is faster (a < b), 2 matched, 3 slower."""

    a: float
    b: float

    def __post_init__(self):
        for name, val in (("a", self.a), ("b", self.b)):
            if not 0.5 < val <= 1.0:
                raise ValidationError(
                    f"step exponent {name} must lie in (0.5, 1], got {val}")

    @property
    def case(self) -> int:
        if self.a < self.b:
            return 1
        return 2 if self.a == self.b else 3

    def gamma(self, n: int) -> float:
        return float(n + 1.0) ** (-self.a)

    def beta(self, n: int) -> float:
        return float(n + 1.0) ** (-self.b)


def schedule_eval(s: StepSchedule, n: int) -> tuple[float, float]:
    """(beta_n, gamma_n) at index n >= 0."""
    if n < 0:
        raise ValidationError("step index must be non-negative")
    return s.beta(n), s.gamma(n)


def record_grid(n_steps: int, per_decade: int = RECORD_PER_DECADE,
                cap: int = RECORD_CAP) -> np.ndarray:
    """Log-spaced recording indices in [1, n_steps], final step included."""
    if n_steps < 1:
        raise ValidationError("n_steps must be at least 1")
    decades = np.log10(n_steps) if n_steps > 1 else 0.0
    count = int(min(cap, max(1, np.ceil(per_decade * decades) + 1)))
    raw = np.unique(np.round(np.logspace(0.0, np.log10(max(n_steps, 1)), count)))
    idx = raw.astype(np.int64)
    idx = idx[(idx >= 1) & (idx <= n_steps)]
    if idx.size == 0 or idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    return idx


@dataclass(frozen=True)
class BatchResult:
    """Lockstep trajectories of R replicas sampled on a common grid."""

    indices: np.ndarray         # (rec,)
    xs: np.ndarray              # (R, rec, N)
    zs: np.ndarray | None       # (R, rec, dim_aug)
    nodes: np.ndarray           # (R, rec)
    final_x: np.ndarray         # (R, N)
    final_z: np.ndarray | None  # (R, dim_aug)
    final_node: np.ndarray      # (R,)
    failed: np.ndarray          # (R,) bool
    seeds: tuple[int, ...]
    config_hash: str


@dataclass(frozen=True)
class TrajectoryRecord:
    """Single-replica view of a run; arrays indexed by the sampling grid."""

    indices: np.ndarray
    xs: np.ndarray
    zs: np.ndarray | None
    nodes: np.ndarray
    final_x: np.ndarray
    final_z: np.ndarray | None
    final_node: int
    seed: int
    config_hash: str


def _config_hash(k: ReversibleKernel, drift, schedule: StepSchedule,
                 alpha: float, n_steps: int, divergence_bound: float,
                 projection_radius: float | None) -> str:
    hasher = hashlib.sha256()
    hasher.update(k.p.tobytes())
    hasher.update(k.mu.tobytes())
    parts = [repr(alpha), repr(schedule.a), repr(schedule.b), str(n_steps),
             repr(divergence_bound), repr(projection_radius)]
    if drift is not None:
        obj = drift.objective
        parts += [drift.variant, repr(drift.epsilon), obj.kind, str(obj.dim),
                  repr(obj.kappa)]
        for arr in (obj.features, obj.labels, obj.centers):
            if arr is not None:
                hasher.update(np.ascontiguousarray(arr).tobytes())
    hasher.update("|".join(parts).encode())
    return hasher.hexdigest()


def run_sa_srrw_batch(k: ReversibleKernel, drift, schedule: StepSchedule,
                      alpha: float, n_steps: int, seeds,
                      x0: np.ndarray | None = None,
                      z0: np.ndarray | None = None,
                      record_indices: np.ndarray | None = None,
                      divergence_bound: float = DIVERGENCE_BOUND,
                      projection_radius: float | None = None,
                      on_divergence: str = "raise") -> BatchResult:
    """Advance R replicas in lockstep for n_steps transitions.

    on_divergence: 'raise' aborts the whole batch when any replica's
    iterate norm passes divergence_bound; 'mark' freezes the offender,
    flags it in .failed and lets the rest continue.
    """
    if alpha < 0:
        raise ValidationError("alpha must be non-negative")
    if n_steps < 1:
        raise ValidationError("n_steps must be at least 1")
    if on_divergence not in ("raise", "mark"):
        raise ValidationError("on_divergence must be 'raise' or 'mark'")
    seeds = tuple(int(s) for s in seeds)
    if len(seeds) == 0:
        raise ValidationError("at least one seed required")
    n = k.n
    r_count = len(seeds)

    if x0 is None:
        x0 = uniform_target(n)
    x0 = check_measure(x0, n)
    xs = np.tile(x0, (r_count, 1))

    dim_aug = drift.dim_aug if drift is not None else 0
    if drift is not None:
        if z0 is None:
            z0 = np.zeros(dim_aug)
        z0 = np.asarray(z0, dtype=float)
        if z0.shape != (dim_aug,):
            raise ValidationError(f"z0 must have shape ({dim_aug},)")
        zs = np.tile(z0, (r_count, 1))
    else:
        zs = None

    if record_indices is None:
        rec = record_grid(n_steps)
    else:
        rec = np.unique(np.asarray(record_indices, dtype=np.int64))
        if rec.size == 0 or rec[0] < 1 or rec[-1] > n_steps:
            raise ValidationError("record indices must lie in [1, n_steps]")

    rec_xs = np.empty((r_count, rec.size, n))
    rec_zs = np.empty((r_count, rec.size, dim_aug)) if drift is not None else None
    rec_nodes = np.empty((r_count, rec.size), dtype=np.int32)

    rngs = [make_rng(s) for s in seeds]
    u_init = np.array([rng.random() for rng in rngs])
    nodes = np.minimum((u_init * n).astype(np.int64), n - 1)

    with np.errstate(divide="ignore"):
        logp = np.log(k.p)
    logmu = np.log(k.mu)
    rows_idx = np.arange(r_count)
    failed = np.zeros(r_count, dtype=bool)
    delta = np.zeros((r_count, n))
    ublock = np.empty((r_count, UNIFORM_BLOCK))
    block_pos = UNIFORM_BLOCK
    rec_pos = 0

    # Preallocated step buffers. The loop is numpy-dispatch bound at small
    # N, so every per-step temporary is written in place; the operations
    # and their order are exactly those of the single-step sampler, which
    # keeps batches bit-identical to single runs.
    work = np.empty((r_count, n))
    cdf = np.empty((r_count, n))
    below = np.empty((r_count, n), dtype=bool)
    rowred = np.empty((r_count, 1))
    nxt = np.empty(r_count, dtype=np.int64)
    zabs = np.empty((r_count, dim_aug)) if drift is not None else None

    for t in range(1, n_steps + 1):
        if block_pos == UNIFORM_BLOCK:
            for r in range(r_count):
                ublock[r] = rngs[r].random(UNIFORM_BLOCK)
            block_pos = 0
        u = ublock[:, block_pos]
        block_pos += 1

        if alpha == 0.0:
            np.take(k.p, nodes, axis=0, out=cdf)
        else:
            np.log(xs, out=work)
            np.subtract(work, logmu, out=work)
            np.multiply(work, alpha, out=work)
            np.take(logp, nodes, axis=0, out=cdf)
            np.subtract(cdf, work, out=cdf)
            np.amax(cdf, axis=1, keepdims=True, out=rowred)
            np.subtract(cdf, rowred, out=cdf)
            np.exp(cdf, out=cdf)
        np.sum(cdf, axis=1, keepdims=True, out=rowred)
        np.divide(cdf, rowred, out=cdf)
        np.cumsum(cdf, axis=1, out=cdf)
        np.less_equal(cdf, u[:, None], out=below)
        np.sum(below, axis=1, out=nxt)
        np.minimum(nxt, n - 1, out=nxt)

        gamma = float(t + 1.0) ** (-schedule.a)
        delta[rows_idx, nxt] = 1.0
        np.subtract(delta, xs, out=work)
        np.multiply(work, gamma, out=work)
        np.add(xs, work, out=xs)
        delta[rows_idx, nxt] = 0.0
        nodes, nxt = nxt, nodes

        if drift is not None:
            beta = float(t + 1.0) ** (-schedule.b)
            h = drift.batch(zs, nodes)
            np.multiply(h, beta, out=h)
            np.add(zs, h, out=zs)
            if projection_radius is not None:
                norms = np.sqrt((zs * zs).sum(axis=1))
                zs *= (projection_radius / np.maximum(norms, projection_radius))[:, None]
            np.abs(zs, out=zabs)
            if float(zabs.max()) > divergence_bound:
                if on_divergence == "raise":
                    raise NumericalError(
                        f"iterate diverged at step {t}: |z| = {float(zabs.max()):.3e} "
                        f"exceeds bound {divergence_bound:.0e}")
                newly = (zabs.max(axis=1) > divergence_bound) & ~failed
                if newly.any():
                    failed |= newly
                    zs[newly] = 0.0
                    xs[newly] = k.mu

        if t % RENORM_EVERY == 0:
            np.sum(xs, axis=1, keepdims=True, out=rowred)
            np.divide(xs, rowred, out=xs)

        if rec_pos < rec.size and t == rec[rec_pos]:
            rec_xs[:, rec_pos] = xs
            if drift is not None:
                rec_zs[:, rec_pos] = zs
            rec_nodes[:, rec_pos] = nodes
            rec_pos += 1

    cfg = _config_hash(k, drift, schedule, alpha, n_steps, divergence_bound,
                       projection_radius)
    return BatchResult(indices=rec, xs=rec_xs, zs=rec_zs, nodes=rec_nodes,
                       final_x=xs, final_z=zs, final_node=nodes.copy(),
                       failed=failed, seeds=seeds, config_hash=cfg)


def run_sa_srrw(k: ReversibleKernel, drift, schedule: StepSchedule,
                alpha: float, n_steps: int, seed: int,
                x0: np.ndarray | None = None, z0: np.ndarray | None = None,
                record_indices: np.ndarray | None = None,
                divergence_bound: float = DIVERGENCE_BOUND,
                projection_radius: float | None = None) -> TrajectoryRecord:
    """One replica; divergence is a hard error."""
    batch = run_sa_srrw_batch(k, drift, schedule, alpha, n_steps, [seed],
                              x0=x0, z0=z0, record_indices=record_indices,
                              divergence_bound=divergence_bound,
                              projection_radius=projection_radius,
                              on_divergence="raise")
    return TrajectoryRecord(
        indices=batch.indices, xs=batch.xs[0],
        zs=batch.zs[0] if batch.zs is not None else None,
        nodes=batch.nodes[0], final_x=batch.final_x[0],
        final_z=batch.final_z[0] if batch.final_z is not None else None,
        final_node=int(batch.final_node[0]), seed=int(seed),
        config_hash=batch.config_hash)


def weighted_measure(path: np.ndarray, x0: np.ndarray,
                     schedule: StepSchedule) -> np.ndarray:
    """Closed-form weighted empirical measure of a visit path X_1..X_n.

    x_n = (sum_i w_i e_{X_i} + w_0 x_0) / sum_i w_i with w_0 = 1 and
    w_i = gamma_i / prod_{j<=i} (1 - gamma_j); equals the gamma recursion
    exactly, and reduces to the plain empirical measure when a = 1.
    Weights are built in the log domain to survive long horizons.
    """
    path = np.asarray(path, dtype=np.int64)
    if path.ndim != 1 or path.size == 0:
        raise ValidationError("path must be a non-empty vector of node ids")
    n_nodes = np.asarray(x0).shape[0]
    x0 = check_measure(np.asarray(x0, dtype=float), n_nodes)
    if path.min() < 0 or path.max() >= n_nodes:
        raise ValidationError("path contains node ids outside [0, N)")
    steps = np.arange(1, path.size + 1, dtype=float)
    gammas = (steps + 1.0) ** (-schedule.a)
    log_w = -schedule.a * np.log(steps + 1.0) - np.cumsum(np.log1p(-gammas))
    shift = max(float(log_w.max()), 0.0)
    w = np.exp(log_w - shift)
    w0 = np.exp(-shift)
    acc = np.bincount(path, weights=w, minlength=n_nodes) + w0 * x0
    return acc / (w.sum() + w0)
