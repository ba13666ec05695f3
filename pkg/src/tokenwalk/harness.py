"""Replica experiments, empirical covariance scaling, curve fits, CSV IO.

The harness fans R independent replicas out over a thread pool (replica r
seeded base_seed + r), aggregates the mean-squared error of the iterate
against the known root, and provides the inverse-square curve fit used to
summarize variance decay against the repellence strength.

All CSV output round-trips at full double precision (17 significant
digits) and carries a '# key=value' config echo header.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .engine import BatchResult, StepSchedule, run_sa_srrw_batch
from .errors import NumericalError, ValidationError
from .kernels import ReversibleKernel
from .objectives import DriftField

THREADS_ENV = "TOKENWALK_THREADS"
MAX_FAILURE_FRACTION = 0.05


def resolve_threads(threads: int | None = None) -> int:
    """Explicit argument wins, then TOKENWALK_THREADS, then logical cores."""
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        if env is not None:
            try:
                threads = int(env)
            except ValueError:
                raise ValidationError(
                    f"{THREADS_ENV} must be an integer, got {env!r}") from None
        else:
            threads = os.cpu_count() or 1
    if threads < 1:
        raise ValidationError("thread count must be at least 1")
    return threads


@dataclass(frozen=True)
class MseSeries:
    """Mean squared iterate error across replicas on the recording grid."""

    indices: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    replicas: int


@dataclass(frozen=True)
class ReplicaResult:
    series: MseSeries
    sq_errors: np.ndarray       # (R, rec); failed replica rows are NaN
    batch: BatchResult
    n_failed: int


def _concat_batches(parts: list[BatchResult]) -> BatchResult:
    first = parts[0]
    cat = lambda pick: np.concatenate([pick(p) for p in parts], axis=0)
    return BatchResult(
        indices=first.indices,
        xs=cat(lambda p: p.xs),
        zs=cat(lambda p: p.zs) if first.zs is not None else None,
        nodes=cat(lambda p: p.nodes),
        final_x=cat(lambda p: p.final_x),
        final_z=cat(lambda p: p.final_z) if first.final_z is not None else None,
        final_node=cat(lambda p: p.final_node),
        failed=cat(lambda p: p.failed),
        seeds=tuple(s for p in parts for s in p.seeds),
        config_hash=first.config_hash)


def run_replicas(k: ReversibleKernel, drift: DriftField, schedule: StepSchedule,
                 alpha: float, n_steps: int, n_replicas: int, base_seed: int,
                 theta_target: np.ndarray,
                 record_indices: np.ndarray | None = None,
                 threads: int | None = None) -> ReplicaResult:
    """R independent replicas with seeds base_seed..base_seed+R-1.

    Replicas are partitioned into contiguous chunks, one lockstep batch
    per thread; per-replica results are identical whatever the chunking.
    Diverged replicas are dropped from the aggregate; more than 5% of
    them aborts the experiment.
    """
    if n_replicas < 2:
        raise ValidationError("need at least 2 replicas for an MSE series")
    if drift is None:
        raise ValidationError("run_replicas needs a drift field")
    threads = resolve_threads(threads)
    seeds = [base_seed + r for r in range(n_replicas)]
    n_chunks = min(threads, n_replicas)
    bounds = np.linspace(0, n_replicas, n_chunks + 1).astype(int)
    chunks = [seeds[bounds[i]:bounds[i + 1]] for i in range(n_chunks)
              if bounds[i] < bounds[i + 1]]

    def work(chunk):
        return run_sa_srrw_batch(k, drift, schedule, alpha, n_steps, chunk,
                                 record_indices=record_indices,
                                 on_divergence="mark")

    if len(chunks) == 1:
        parts = [work(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(work, chunks))
    batch = _concat_batches(parts)

    theta_target = np.asarray(theta_target, dtype=float)
    dev = batch.zs[:, :, drift.theta_slice] - theta_target[None, None, :]
    sq = np.einsum("rtd,rtd->rt", dev, dev)
    n_failed = int(batch.failed.sum())
    if n_failed > MAX_FAILURE_FRACTION * n_replicas:
        raise NumericalError(
            f"{n_failed}/{n_replicas} replicas diverged "
            f"(> {MAX_FAILURE_FRACTION:.0%} allowed)")
    sq[batch.failed] = np.nan
    ok = sq[~batch.failed]
    if ok.shape[0] < 2:
        raise NumericalError("fewer than 2 surviving replicas")
    series = MseSeries(indices=batch.indices.copy(), mean=ok.mean(axis=0),
                       stderr=ok.std(axis=0, ddof=1) / math.sqrt(ok.shape[0]),
                       replicas=ok.shape[0])
    return ReplicaResult(series=series, sq_errors=sq, batch=batch,
                         n_failed=n_failed)


def empirical_scaled_covariance(samples: np.ndarray, center: np.ndarray,
                                scale: float) -> np.ndarray:
    """(1/scale) (1/(R-1)) sum_r (s_r - center)(s_r - center)^T."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise ValidationError("need a (R, d) sample matrix with R >= 2")
    if scale <= 0:
        raise ValidationError("scale must be positive")
    dev = samples - np.asarray(center, dtype=float)[None, :]
    return dev.T @ dev / ((samples.shape[0] - 1) * scale)


@dataclass(frozen=True)
class FitResult:
    c1: float
    c2: float
    c3: float
    rss: float
    converged: bool

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.c1 / (np.asarray(x, dtype=float) + self.c2) ** 2 + self.c3


def fit_inverse_square(alphas: np.ndarray, values: np.ndarray) -> FitResult:
    """Least-squares fit of c1/(x+c2)^2 + c3 by multi-start Nelder-Mead.

    Eight deterministic starts spanning the data envelope; poles inside
    the data range are rejected by penalty. Needs >= 4 distinct points.
    """
    alphas = np.asarray(alphas, dtype=float)
    values = np.asarray(values, dtype=float)
    if alphas.shape != values.shape or alphas.ndim != 1:
        raise ValidationError("alphas and values must be equal-length vectors")
    if np.unique(alphas).size < 4:
        raise ValidationError("need at least 4 distinct points to fit")
    if not (np.all(np.isfinite(alphas)) and np.all(np.isfinite(values))):
        raise ValidationError("fit inputs must be finite")
    amin = float(alphas.min())
    vmin, vmax = float(values.min()), float(values.max())

    def cost(params):
        c1, c2, c3 = params
        if c2 <= -amin + 1e-9:
            return 1e50
        r = c1 / (alphas + c2) ** 2 + c3 - values
        return float(r @ r)

    starts = []
    for c2_0 in (0.5, 1.0, 2.0, 5.0):
        for c3_0 in (vmin, 0.0):
            c1_0 = (vmax - c3_0) * (amin + c2_0) ** 2
            starts.append(np.array([c1_0, c2_0, c3_0]))

    best = None
    for x0 in starts:
        res = minimize(cost, x0, method="Nelder-Mead",
                       options={"maxiter": 10**4, "maxfev": 2 * 10**4,
                                "xatol": 1e-12, "fatol": 1e-12})
        if best is None or res.fun < best.fun:
            best = res
    c1, c2, c3 = (float(v) for v in best.x)
    converged = bool(best.success) and c2 > -amin + 1e-9 and np.isfinite(best.fun)
    return FitResult(c1=c1, c2=c2, c3=c3, rss=float(best.fun), converged=converged)


def fit_r_squared(values: np.ndarray, rss: float) -> float:
    values = np.asarray(values, dtype=float)
    ss_tot = float(np.sum((values - values.mean()) ** 2))
    if ss_tot == 0.0:
        return float("nan")
    return 1.0 - rss / ss_tot


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _header_lines(config: dict | None) -> list[str]:
    if not config:
        return []
    return [f"# {key}={config[key]}" for key in config]


def write_mse_csv(path, series: MseSeries, config: dict | None = None) -> None:
    lines = _header_lines(config)
    lines.append("n,mse_mean,mse_stderr,replicas")
    for i, n in enumerate(series.indices):
        lines.append(f"{int(n)},{_fmt(series.mean[i])},{_fmt(series.stderr[i])},"
                     f"{series.replicas}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_replica_csv(path, indices: np.ndarray, sq_errors: np.ndarray,
                      config: dict | None = None) -> None:
    """Raw per-replica squared errors, long format."""
    lines = _header_lines(config)
    lines.append("n,replica,sq_error")
    for i, n in enumerate(indices):
        for r in range(sq_errors.shape[0]):
            lines.append(f"{int(n)},{r},{_fmt(sq_errors[r, i])}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_theory_csv(path, rows: list[tuple], config: dict | None = None) -> None:
    """Rows of (alpha, case, trace_v_x, trace_v_theta, lambda_min_gap)."""
    lines = _header_lines(config)
    lines.append("alpha,case,trace_v_x,trace_v_theta,lambda_min_gap")
    for alpha, case, tvx, tvt, gap in rows:
        lines.append(f"{_fmt(alpha)},{int(case)},{_fmt(tvx)},{_fmt(tvt)},"
                     f"{_fmt(gap)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_fit_csv(path, fit: FitResult, config: dict | None = None) -> None:
    lines = _header_lines(config)
    lines.append("c1,c2,c3,rss,converged")
    lines.append(f"{_fmt(fit.c1)},{_fmt(fit.c2)},{_fmt(fit.c3)},{_fmt(fit.rss)},"
                 f"{'true' if fit.converged else 'false'}")
    Path(path).write_text("\n".join(lines) + "\n")


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    header: list[str] | None = None
    rows: list[list[str]] = []
    for line in Path(path).read_text().splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        cells = [c.strip() for c in stripped.split(",")]
        if header is None:
            header = cells
        else:
            rows.append(cells)
    if header is None:
        raise ValidationError(f"{path}: no header row found")
    return header, rows


def read_mse_csv(path) -> MseSeries:
    header, rows = _read_rows(path)
    if header != ["n", "mse_mean", "mse_stderr", "replicas"]:
        raise ValidationError(f"{path}: unexpected MSE header {header}")
    data = np.array([[float(c) for c in row] for row in rows])
    return MseSeries(indices=data[:, 0].astype(np.int64), mean=data[:, 1],
                     stderr=data[:, 2], replicas=int(data[0, 3]))


VALUE_COLUMNS = ("value", "trace_v_theta", "trace_v_x", "mse_mean")


def read_points_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """(alpha, value) pairs for fitting; picks the first recognized value
    column among value, trace_v_theta, trace_v_x, mse_mean."""
    header, rows = _read_rows(path)
    if "alpha" not in header:
        raise ValidationError(f"{path}: no 'alpha' column")
    x_col = header.index("alpha")
    y_col = None
    for name in VALUE_COLUMNS:
        if name in header:
            y_col = header.index(name)
            break
    if y_col is None:
        raise ValidationError(
            f"{path}: no value column among {', '.join(VALUE_COLUMNS)}")
    alphas = np.array([float(r[x_col]) for r in rows])
    values = np.array([float(r[y_col]) for r in rows])
    return alphas, values
