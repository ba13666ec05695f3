"""Executable property suite.

Each check pins one documented guarantee of the package, from exact
algebraic identities up to Monte-Carlo agreement with the closed-form
covariances. `run_checks` executes them in order and reports one
PASS/FAIL line worth of detail per property; the three multi-minute
Monte-Carlo checks are skipped in quick mode.

All randomness is derived deterministically from the single `seed`
argument, so two runs with the same seed print identical numbers.
"""

from __future__ import annotations

import contextlib
import io
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import covariance as cov
from .engine import StepSchedule, run_sa_srrw_batch, weighted_measure
from .graphs import (erdos_renyi, largest_connected_component,
                     random_connected_graph, serialize_edge_list)
from .harness import (empirical_scaled_covariance, fit_inverse_square,
                      fit_r_squared, run_replicas)
from .kernels import (build_mhrw, lazy_transform, pi_jacobian,
                      srrw_kernel_matrix, srrw_stationary, uniform_target)
from .objectives import (assign_to_nodes, logistic_objective, make_drift,
                         make_quadratic_toy, ncreg_objective, parse_libsvm,
                         solve_theta_star)
from .rng import make_rng
from .spectral import decompose


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def make_synthetic_dataset_text(n_rows: int = 80, n_features: int = 22,
                                seed: int = 7) -> str:
    """Deterministic classification sample in '<label> idx:val ...' format.

    Rows are labeled by a noisy random hyperplane; near-zero features are
    dropped so the file exercises the sparse-index parser.
    """
    rng = make_rng(seed)
    w = rng.normal(size=n_features)
    lines = ["# synthetic classification sample"]
    for _ in range(n_rows):
        x = np.round(rng.normal(size=n_features), 6)
        margin = float(x @ w) + 0.5 * float(rng.normal())
        label = 1 if margin > 0 else -1
        keep = np.flatnonzero(np.abs(x) > 0.15)
        if keep.size == 0:
            keep = np.array([int(np.argmax(np.abs(x)))])
        entries = " ".join(f"{j + 1}:{x[j]:.6f}" for j in keep)
        lines.append(f"{label} {entries}")
    return "\n".join(lines) + "\n"


def _random_target(rng, n: int) -> np.ndarray:
    mu = rng.uniform(0.5, 2.0, size=n)
    return mu / mu.sum()


def _interior_measure(rng, n: int) -> np.ndarray:
    # floor keeps ratios to the target bounded, so high alpha stays tame
    return 0.7 * rng.dirichlet(np.full(n, 2.0)) + 0.3 / n


def _random_instance(rng, n_lo: int, n_hi: int, uniform_mu: bool = False):
    n = int(rng.integers(n_lo, n_hi))
    g = random_connected_graph(n, float(rng.uniform(0.1, 0.5)),
                               int(rng.integers(10 ** 6)))
    mu = uniform_target(n) if uniform_mu else _random_target(rng, n)
    k = build_mhrw(g, mu)
    if not k.aperiodic:
        k = lazy_transform(k, 0.1)
    return k


def _check_kernel_identities(seed: int):
    rng = make_rng(seed * 1000 + 1)
    worst_db = 0.0
    worst_row = 0.0
    for t in range(50):
        n = int(rng.integers(2, 31))
        g = random_connected_graph(n, float(rng.uniform(0.05, 0.5)),
                                   int(rng.integers(10 ** 6)))
        mu = uniform_target(n) if t % 2 == 0 else _random_target(rng, n)
        k = build_mhrw(g, mu)
        flux = mu[:, None] * k.p
        worst_db = max(worst_db, float(np.max(np.abs(flux - flux.T))))
        if t < 10:
            x = _interior_measure(rng, n)
            d0 = np.max(np.abs(srrw_kernel_matrix(k, x, 0.0) - k.p))
            alpha = 1.0 + 3.0 * float(rng.random())
            dmu = np.max(np.abs(srrw_kernel_matrix(k, mu, alpha) - k.p))
            worst_row = max(worst_row, float(d0), float(dmu))
    ok = worst_db <= 1e-12 and worst_row <= 1e-14
    detail = (f"detailed balance max {worst_db:.1e} on 50 graphs; "
              f"base-row recovery max {worst_row:.1e}")
    return ok, detail


def _check_stationary_law(seed: int):
    rng = make_rng(seed * 1000 + 2)
    alphas = (0.5, 2.0, 10.0)
    worst_cf = 0.0
    worst_stat = 0.0
    worst_fix = 0.0
    for t in range(20):
        k = _random_instance(rng, 5, 13, uniform_mu=(t % 3 == 0))
        alpha = alphas[t % 3]
        # keep x/mu ratios tame at large alpha so the perturbed chain
        # still mixes within the power-iteration budget
        spread = 0.5 / max(1.0, alpha)
        x = k.mu * (1.0 + spread * rng.uniform(-1.0, 1.0, size=k.n))
        x = x / x.sum()
        kmat = srrw_kernel_matrix(k, x, alpha)
        pi_cf = srrw_stationary(k, x, alpha)
        worst_stat = max(worst_stat,
                         float(np.max(np.abs(pi_cf @ kmat - pi_cf))))
        p = np.full(k.n, 1.0 / k.n)
        for sweep in range(50):
            for _ in range(1000):
                p = p @ kmat
                p /= p.sum()
            if sweep >= 9 and float(np.max(np.abs(p @ kmat - p))) <= 1e-14:
                break
        worst_cf = max(worst_cf, float(np.max(np.abs(pi_cf - p))))
        fix = srrw_stationary(k, k.mu, alpha)
        worst_fix = max(worst_fix, float(np.max(np.abs(fix - k.mu))))
    ok = worst_cf <= 1e-10 and worst_stat <= 1e-12 and worst_fix <= 1e-12
    detail = (f"closed form vs iterated law max {worst_cf:.1e} on 20 "
              f"instances; stationarity residual {worst_stat:.1e}; "
              f"fixed point residual {worst_fix:.1e}")
    return ok, detail


def _check_drift_jacobian(seed: int):
    rng = make_rng(seed * 1000 + 3)
    dummy_gh = np.array([[-1.0]])
    worst_id = 0.0
    for _ in range(5):
        k = _random_instance(rng, 4, 11)
        dummy_h = np.zeros((k.n, 1))
        for alpha in (0.0, 1.0, 5.0, 10.0):
            j_cf = pi_jacobian(k, k.mu, alpha)
            j22 = cov.jacobian_j(alpha, dummy_gh, dummy_h, k).j22
            worst_id = max(worst_id, float(np.max(np.abs(j_cf - j22))))
    step = 1e-6
    worst_fd = 0.0
    for _ in range(3):
        k = _random_instance(rng, 4, 9)
        x = _interior_measure(rng, k.n)
        for alpha in (1.0, 5.0):
            j_cf = pi_jacobian(k, x, alpha)
            fd = np.zeros_like(j_cf)
            for m in range(k.n):
                e = np.zeros(k.n)
                e[m] = step
                gp = srrw_stationary(k, x + e, alpha) - (x + e)
                gm = srrw_stationary(k, x - e, alpha) - (x - e)
                fd[:, m] = (gp - gm) / (2 * step)
            rel = np.max(np.abs(j_cf - fd)) / max(1.0, np.max(np.abs(j_cf)))
            worst_fd = max(worst_fd, float(rel))
    ok = worst_id <= 1e-10 and worst_fd <= 1e-5
    detail = (f"measure-block identity max {worst_id:.1e}; "
              f"finite-difference rel {worst_fd:.1e}")
    return ok, detail


def _check_covariance_consistency(seed: int):
    rng = make_rng(seed * 1000 + 4)
    dummy_gh = np.array([[-1.0]])
    worst = 0.0
    count = 0
    for t in range(10):
        k = _random_instance(rng, 4, 13, uniform_mu=(t % 2 == 0))
        dec = decompose(k)
        dummy_h = np.zeros((k.n, 1))
        u22 = cov.matrix_u(dec, dummy_h).u22
        for alpha in (0.0, 1.0, 2.0, 5.0, 10.0):
            j22 = cov.jacobian_j(alpha, dummy_gh, dummy_h, k).j22
            for a_exp in (0.8, 1.0):
                vx = cov.v_x(alpha, a_exp, dec)
                shift = 0.5 if a_exp == 1.0 else 0.0
                direct = cov.lyapunov_solve(j22 + shift * np.eye(k.n), u22)
                worst = max(worst, float(np.linalg.norm(vx - direct, "fro")))
                count += 1
    ok = worst <= 1e-8
    return ok, f"spectral form vs direct solve, max gap {worst:.1e} over {count} pairs"


def _ordering_instance(seed: int):
    g = random_connected_graph(10, 0.3, seed * 1000 + 55)
    mu = uniform_target(g.n)
    k = build_mhrw(g, mu)
    if not k.aperiodic:
        k = lazy_transform(k, 0.1)
    dec = decompose(k)
    obj = make_quadratic_toy(g.n, dim=3, seed=seed * 1000 + 56)
    eq = solve_theta_star(obj, mu)
    return k, dec, eq


def _check_covariance_ordering(seed: int):
    _, dec, eq = _ordering_instance(seed)
    chain = (0.0, 1.0, 2.0, 5.0, 10.0, 20.0)
    ok = True
    for a_exp in (0.8, 1.0):
        vxs = [cov.v_x(al, a_exp, dec) for al in chain]
        ok &= all(cov.loewner_lt(vxs[i + 1], vxs[i])
                  for i in range(len(chain) - 1))
    v1s = [cov.v_theta_case1(al, eq.grad_h, 0.9, dec, eq.drift_matrix)
           for al in chain]
    ok &= all(cov.loewner_lt(v1s[i + 1], v1s[i]) for i in range(len(chain) - 1))
    v3 = cov.v_theta_case3(eq.grad_h, dec, eq.drift_matrix)
    gap0 = float(np.max(np.abs(v1s[0] - v3)))
    ok &= gap0 <= 1e-12
    ok &= all(cov.loewner_lt(v1s[i], v3) for i in range(1, len(chain)))
    detail = (f"strict matrix decrease along alpha {chain}; "
              f"slow-measure limit gap {gap0:.1e}")
    return ok, detail


def _check_covariance_rate(seed: int):
    _, dec, eq = _ordering_instance(seed)

    def trace_at(alpha):
        return float(np.trace(
            cov.v_theta_case1(alpha, eq.grad_h, 0.9, dec, eq.drift_matrix)))

    big = np.array([10.0, 20.0, 40.0, 80.0, 160.0, 320.0])
    traces = np.array([trace_at(al) for al in big])
    fit = fit_inverse_square(big, traces)
    resid = traces - fit.c3
    if np.any(resid <= 0):
        return False, "fitted floor exceeds an observed trace"
    slope = float(np.polyfit(np.log(big), np.log(resid), 1)[0])
    small = np.arange(0.0, 21.0)
    small_tr = np.array([trace_at(al) for al in small])
    fit2 = fit_inverse_square(small, small_tr)
    r2 = fit_r_squared(small_tr, fit2.rss)
    ok = -2.2 <= slope <= -1.8 and r2 >= 0.95
    return ok, f"tail slope {slope:.3f}; dense-grid fit R^2 {r2:.4f}"


def _clt_kernel():
    g = erdos_renyi(8, 0.35, seed=0)
    mu = uniform_target(g.n)
    return build_mhrw(g, mu)


def _check_clt_empirical_measure(seed: int):
    k = _clt_kernel()
    dec = decompose(k)
    n_steps = 10 ** 6
    sched = StepSchedule(a=1.0, b=0.9)
    rel = {}
    traces = {}
    for idx, alpha in enumerate((0.0, 2.0)):
        seeds = seed * 10 ** 6 + 1000 * idx + np.arange(200)
        batch = run_sa_srrw_batch(k, None, sched, alpha, n_steps, seeds,
                                  record_indices=np.array([n_steps]))
        emp = empirical_scaled_covariance(batch.final_x, k.mu,
                                          sched.gamma(n_steps))
        theo = float(np.trace(cov.v_x(alpha, 1.0, dec)))
        traces[alpha] = float(np.trace(emp))
        rel[alpha] = abs(traces[alpha] - theo) / theo
    ok = max(rel.values()) <= 0.20 and traces[2.0] < traces[0.0]
    detail = (f"trace rel err {rel[0.0]:.3f} (alpha=0) / {rel[2.0]:.3f} "
              f"(alpha=2); scaled traces {traces[0.0]:.3f} vs {traces[2.0]:.3f}")
    return ok, detail


def _check_clt_iterates(seed: int):
    k = _clt_kernel()
    dec = decompose(k)
    obj = make_quadratic_toy(k.n, dim=2, seed=3)
    drift = make_drift(obj, "sgd")
    eq = solve_theta_star(obj, k.mu)
    # Two finite-horizon effects bias the scaled trace upward. The
    # iterate's variance lags its drifting step size by ~b n^(b-1) / 2
    # relative, shrunk by choosing b = 0.8; and the iterate averages the
    # walk over a window of only ~n^(b-a) measure-relaxation times, so the
    # gap b - a must be wide. a = 0.52 together with a longer horizon for
    # alpha = 5 pushes the window count past sixty, where the repellence
    # suppressed variance has settled near its limit.
    sched = StepSchedule(a=0.52, b=0.8)
    horizon = {0.0: 10 ** 6, 5.0: 3 * 10 ** 6}
    rel = {}
    traces = {}
    rel_x = {}
    for idx, alpha in enumerate((0.0, 5.0)):
        n_steps = horizon[alpha]
        # late checkpoints sit several contraction e-folds apart, so the
        # three estimates are nearly independent and their mean cuts the
        # replica noise below the tolerance
        checkpoints = np.array([n_steps // 2, 3 * n_steps // 4, n_steps])
        seeds = seed * 10 ** 6 + 777000 + 1000 * idx + np.arange(200)
        batch = run_sa_srrw_batch(k, drift, sched, alpha, n_steps, seeds,
                                  record_indices=checkpoints)
        estimates = []
        for pos, step_idx in enumerate(batch.indices):
            draws = batch.zs[:, pos, drift.theta_slice]
            emp = empirical_scaled_covariance(draws, eq.theta_star,
                                              sched.beta(int(step_idx)))
            estimates.append(float(np.trace(emp)))
        theo = float(np.trace(
            cov.v_theta_case1(alpha, eq.grad_h, sched.b, dec,
                              eq.drift_matrix)))
        traces[alpha] = float(np.mean(estimates))
        rel[alpha] = abs(traces[alpha] - theo) / theo
        emp_x = empirical_scaled_covariance(batch.final_x, k.mu,
                                            sched.gamma(n_steps))
        theo_x = float(np.trace(cov.v_x(alpha, sched.a, dec)))
        rel_x[alpha] = abs(float(np.trace(emp_x)) - theo_x) / theo_x
    ok = max(rel.values()) <= 0.25 and traces[5.0] < traces[0.0]
    detail = (f"trace rel err {rel[0.0]:.3f} (alpha=0) / {rel[5.0]:.3f} "
              f"(alpha=5); scaled traces {traces[0.0]:.3f} vs "
              f"{traces[5.0]:.3f}; measure-side rel "
              f"{max(rel_x.values()):.3f}")
    return ok, detail


def _ordered_within_stderr(means, stderrs):
    """Non-increasing sequence, allowing one adjacent inversion if it is
    within one combined standard error."""
    bad = [i for i in range(len(means) - 1) if means[i + 1] > means[i]]
    if not bad:
        return True, "strictly ordered"
    if len(bad) == 1:
        i = bad[0]
        joint = float(np.hypot(stderrs[i], stderrs[i + 1]))
        if means[i + 1] - means[i] <= joint:
            return True, f"one inversion at position {i}, within joint stderr"
    return False, f"order violated at positions {bad}"


def _check_mse_ordering(seed: int):
    g = erdos_renyi(62, 0.08, seed=3)
    if not g.connected:
        g = largest_connected_component(g)
    mu = uniform_target(g.n)
    k = build_mhrw(g, mu)
    ds = assign_to_nodes(parse_libsvm(make_synthetic_dataset_text(), 22), g.n)
    obj = logistic_objective(ds.features, ds.labels, kappa=1.0)
    drift = make_drift(obj, "sgd")
    eq = solve_theta_star(obj, mu)
    n_steps = 10 ** 5
    # one seed base for every configuration: common random numbers make
    # the orderings far less noisy than independent draws would
    base = seed * 10 ** 6 + 424242

    def final_mse(a_exp, b_exp, alpha):
        res = run_replicas(k, drift, StepSchedule(a=a_exp, b=b_exp), alpha,
                           n_steps, 100, base, theta_target=eq.theta_star)
        return float(res.series.mean[-1]), float(res.series.stderr[-1])

    sweep = [final_mse(0.8, 0.9, al) for al in (0.0, 1.0, 5.0, 10.0)]
    ok_alpha, note_alpha = _ordered_within_stderr(
        [m for m, _ in sweep], [s for _, s in sweep])
    by_case = [sweep[2], final_mse(0.9, 0.9, 5.0), final_mse(1.0, 0.9, 5.0)]
    ok_case, note_case = _ordered_within_stderr(
        [m for m, _ in reversed(by_case)], [s for _, s in reversed(by_case)])
    ok = ok_alpha and ok_case
    mses = "/".join(f"{m:.2e}" for m, _ in sweep)
    cases = "/".join(f"{m:.2e}" for m, _ in by_case)
    detail = (f"alpha sweep {mses} ({note_alpha}); "
              f"timescale cases {cases} ({note_case})")
    return ok, detail


def _check_weighted_measure(seed: int):
    k = _clt_kernel()
    n_steps = 1000
    worst = 0.0
    for a_exp in (0.8, 0.9, 1.0):
        sched = StepSchedule(a=a_exp, b=0.9)
        batch = run_sa_srrw_batch(k, None, sched, 1.5, n_steps,
                                  seeds=np.array([seed * 1000 + 10]),
                                  record_indices=np.arange(1, n_steps + 1))
        x0 = uniform_target(k.n)
        closed = weighted_measure(batch.nodes[0], x0, sched)
        worst = max(worst, float(np.max(np.abs(closed - batch.final_x[0]))))
    ok = worst <= 1e-12
    return ok, f"closed form vs recursion max gap {worst:.1e} at n={n_steps}"


def _check_objective_gradients(seed: int):
    rng = make_rng(seed * 1000 + 11)
    ds = assign_to_nodes(parse_libsvm(make_synthetic_dataset_text(), 22), 62)
    instances = [
        (logistic_objective(ds.features, ds.labels, 1.0), 34),
        (ncreg_objective(ds.features, ds.labels, 1.0), 33),
        (make_quadratic_toy(10, dim=3, seed=5), 33),
    ]
    step = 1e-6
    worst = 0.0
    for obj, count in instances:
        for _ in range(count):
            theta = 0.5 * rng.normal(size=obj.dim)
            i = int(rng.integers(obj.n_nodes))
            grad = obj.grad(theta, i)
            fd = np.zeros_like(grad)
            for m in range(obj.dim):
                e = np.zeros(obj.dim)
                e[m] = step
                fd[m] = (obj.loss(theta + e, i)
                         - obj.loss(theta - e, i)) / (2 * step)
            rel = np.max(np.abs(grad - fd)) / max(1.0, np.max(np.abs(grad)))
            worst = max(worst, float(rel))
    eq = solve_theta_star(instances[0][0], uniform_target(62))
    quad = instances[2][0]
    mu10 = uniform_target(10)
    exact = np.array_equal(solve_theta_star(quad, mu10).theta_star,
                           mu10 @ quad.centers)
    ok = (worst <= 1e-5 and eq.grad_norm <= 1e-10
          and eq.hurwitz_margin < 0 and exact)
    detail = (f"FD rel max {worst:.1e} over 100 points; root gradient "
              f"{eq.grad_norm:.1e}, stability margin {eq.hurwitz_margin:.2f}")
    return ok, detail


def _check_cli_determinism(seed: int):
    from .cli import main as cli_main
    g = erdos_renyi(8, 0.35, seed=0)
    with tempfile.TemporaryDirectory() as tmp:
        tmpdir = Path(tmp)
        gpath = tmpdir / "graph.txt"
        gpath.write_text(serialize_edge_list(g))
        out = tmpdir / "out.csv"
        argv = ["run", "--graph", str(gpath), "--objective", "quad",
                "--features", "2", "--alpha", "2", "--a", "0.8", "--b", "0.9",
                "--steps", "2000", "--replicas", "4",
                "--seed", str(seed * 100 + 17), "--out", str(out)]
        snapshots = []
        for _ in range(2):
            with contextlib.redirect_stdout(io.StringIO()):
                code = cli_main(list(argv))
            if code != 0:
                return False, f"run command exited with {code}"
            snapshots.append((out.read_bytes(),
                              out.with_suffix(".replicas.csv").read_bytes()))
    ok = snapshots[0] == snapshots[1]
    size = len(snapshots[0][0]) + len(snapshots[0][1])
    return ok, f"two identical invocations, {size} CSV bytes compared"


CHECKS = (
    ("kernel-identities", _check_kernel_identities, False),
    ("stationary-law", _check_stationary_law, False),
    ("drift-jacobian", _check_drift_jacobian, False),
    ("covariance-consistency", _check_covariance_consistency, False),
    ("covariance-ordering", _check_covariance_ordering, False),
    ("covariance-rate", _check_covariance_rate, False),
    ("clt-empirical-measure", _check_clt_empirical_measure, True),
    ("clt-iterates", _check_clt_iterates, True),
    ("mse-ordering", _check_mse_ordering, True),
    ("weighted-measure", _check_weighted_measure, False),
    ("objective-gradients", _check_objective_gradients, False),
    ("cli-determinism", _check_cli_determinism, False),
)

CHECK_NAMES = tuple(name for name, _, _ in CHECKS)
SLOW_CHECK_NAMES = tuple(name for name, _, slow in CHECKS if slow)


def run_checks(seed: int = 0, quick: bool = False,
               names=None) -> list[CheckResult]:
    """Run the property suite; `names` restricts to a subset, `quick`
    drops the Monte-Carlo checks that take minutes."""
    results = []
    for name, fn, slow in CHECKS:
        if quick and slow:
            continue
        if names is not None and name not in names:
            continue
        start = time.perf_counter()
        try:
            passed, detail = fn(seed)
        except Exception as exc:  # a crashing check is a failing check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name=name, passed=bool(passed),
                                   detail=detail,
                                   seconds=time.perf_counter() - start))
    return results
