"""Replica harness, curve fitting and delimited IO."""

import numpy as np
import pytest

from tokenwalk import (FitResult, NumericalError, StepSchedule,
                       ValidationError, build_mhrw, empirical_scaled_covariance,
                       erdos_renyi, fit_inverse_square, fit_r_squared,
                       make_drift, make_quadratic_toy, make_rng,
                       read_points_csv, resolve_threads, run_replicas,
                       solve_theta_star, uniform_target, write_fit_csv,
                       write_mse_csv, write_theory_csv)
from tokenwalk.harness import THREADS_ENV, read_mse_csv, write_replica_csv


def replica_setup():
    g = erdos_renyi(8, 0.35, seed=0)
    k = build_mhrw(g, uniform_target(8))
    obj = make_quadratic_toy(8, dim=2, seed=3)
    drift = make_drift(obj, "sgd")
    eq = solve_theta_star(obj, k.mu)
    return k, drift, eq


def test_resolve_threads(monkeypatch):
    assert resolve_threads(3) == 3
    monkeypatch.setenv(THREADS_ENV, "5")
    assert resolve_threads() == 5
    assert resolve_threads(2) == 2              # explicit wins over env
    monkeypatch.setenv(THREADS_ENV, "zero")
    with pytest.raises(ValidationError):
        resolve_threads()
    monkeypatch.delenv(THREADS_ENV)
    assert resolve_threads() >= 1
    with pytest.raises(ValidationError):
        resolve_threads(0)


def test_run_replicas_chunking_invariance():
    k, drift, eq = replica_setup()
    sched = StepSchedule(a=0.8, b=0.9)
    results = [run_replicas(k, drift, sched, 1.0, 400, 6, 70,
                            theta_target=eq.theta_star, threads=t)
               for t in (1, 3, 6)]
    for other in results[1:]:
        np.testing.assert_array_equal(results[0].series.mean,
                                      other.series.mean)
        np.testing.assert_array_equal(results[0].sq_errors, other.sq_errors)
        np.testing.assert_array_equal(results[0].batch.final_z,
                                      other.batch.final_z)
        assert results[0].batch.seeds == other.batch.seeds


def test_run_replicas_aggregates_match_manual():
    k, drift, eq = replica_setup()
    sched = StepSchedule(a=0.8, b=0.9)
    res = run_replicas(k, drift, sched, 2.0, 300, 5, 40,
                       theta_target=eq.theta_star, threads=2)
    dev = res.batch.zs - eq.theta_star[None, None, :]
    sq = (dev ** 2).sum(axis=2)
    np.testing.assert_array_equal(res.sq_errors, sq)
    np.testing.assert_allclose(res.series.mean, sq.mean(axis=0), atol=1e-15)
    np.testing.assert_allclose(
        res.series.stderr, sq.std(axis=0, ddof=1) / np.sqrt(5.0), atol=1e-15)
    assert res.series.replicas == 5
    assert res.n_failed == 0
    assert res.batch.seeds == tuple(range(40, 45))


def test_run_replicas_validation():
    k, drift, eq = replica_setup()
    sched = StepSchedule(a=0.8, b=0.9)
    with pytest.raises(ValidationError):
        run_replicas(k, drift, sched, 1.0, 100, 1, 0,
                     theta_target=eq.theta_star)
    with pytest.raises(ValidationError):
        run_replicas(k, None, sched, 1.0, 100, 4, 0,
                     theta_target=eq.theta_star)


class _RunawayDrift:
    def __init__(self, objective):
        self.objective = objective
        self.variant = "sgd"
        self.epsilon = 1e-8
        self.dim_aug = objective.dim
        self.theta_slice = slice(0, objective.dim)

    def batch(self, z, nodes):
        return 10.0 * (np.abs(z) + 1.0)


def test_run_replicas_aborts_on_mass_divergence():
    k, _, eq = replica_setup()
    drift = _RunawayDrift(make_quadratic_toy(8, dim=2, seed=3))
    sched = StepSchedule(a=0.8, b=0.9)
    with pytest.raises(NumericalError):
        run_replicas(k, drift, sched, 1.0, 5000, 4, 0,
                     theta_target=eq.theta_star, threads=1)


def test_empirical_scaled_covariance():
    samples = np.array([[1.0, 0.0], [3.0, 2.0], [2.0, 4.0]])
    center = np.array([2.0, 2.0])
    dev = samples - center
    want = dev.T @ dev / (2 * 0.5)
    np.testing.assert_allclose(
        empirical_scaled_covariance(samples, center, 0.5), want, atol=1e-15)
    with pytest.raises(ValidationError):
        empirical_scaled_covariance(samples[:1], center, 0.5)
    with pytest.raises(ValidationError):
        empirical_scaled_covariance(samples, center, 0.0)


def test_fit_inverse_square_recovers_exact_curve():
    alphas = np.arange(0.0, 11.0)
    truth = FitResult(c1=4.0, c2=1.0, c3=0.1, rss=0.0, converged=True)
    fit = fit_inverse_square(alphas, truth.predict(alphas))
    assert fit.converged
    assert abs(fit.c1 - 4.0) <= 1e-4
    assert abs(fit.c2 - 1.0) <= 1e-4
    assert abs(fit.c3 - 0.1) <= 1e-5
    assert fit.rss <= 1e-10
    assert fit_r_squared(truth.predict(alphas), fit.rss) >= 1.0 - 1e-12


def test_fit_inverse_square_validation():
    with pytest.raises(ValidationError):
        fit_inverse_square(np.array([1.0, 2.0, 3.0]), np.ones(3))
    with pytest.raises(ValidationError):
        fit_inverse_square(np.array([1.0, 1.0, 1.0, 1.0]), np.ones(4))
    with pytest.raises(ValidationError):
        fit_inverse_square(np.arange(5.0), np.array([1, 2, np.nan, 4, 5.0]))
    with pytest.raises(ValidationError):
        fit_inverse_square(np.arange(4.0), np.ones((2, 2)))


def test_fit_r_squared_degenerate():
    assert np.isnan(fit_r_squared(np.ones(5), 0.0))


def test_mse_csv_round_trip(tmp_path):
    rng = make_rng(80)
    from tokenwalk.harness import MseSeries
    series = MseSeries(indices=np.array([1, 10, 100], dtype=np.int64),
                       mean=rng.random(3) * 1e-7,
                       stderr=rng.random(3) * 1e-9, replicas=17)
    path = tmp_path / "series.csv"
    write_mse_csv(path, series, {"alpha": 2.0, "graph": "toy.txt"})
    text = path.read_text()
    assert text.startswith("# alpha=2.0\n# graph=toy.txt\n")
    back = read_mse_csv(path)
    # 17 significant digits give exact float round trips
    np.testing.assert_array_equal(back.mean, series.mean)
    np.testing.assert_array_equal(back.stderr, series.stderr)
    np.testing.assert_array_equal(back.indices, series.indices)
    assert back.replicas == 17


def test_replica_and_theory_csv_shapes(tmp_path):
    sq = np.array([[1.0, 2.0], [3.0, np.nan]])
    path = tmp_path / "replicas.csv"
    write_replica_csv(path, np.array([5, 10]), sq)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "n,replica,sq_error"
    assert len(lines) == 5
    assert lines[1].startswith("5,0,1")

    tpath = tmp_path / "theory.csv"
    write_theory_csv(tpath, [(0.0, 1, 1.5, 0.25, float("nan")),
                             (2.0, 1, 0.5, 0.125, 0.01)])
    alphas, values = read_points_csv(tpath)
    np.testing.assert_array_equal(alphas, [0.0, 2.0])
    np.testing.assert_array_equal(values, [0.25, 0.125])


def test_read_points_csv_column_priority(tmp_path):
    path = tmp_path / "points.csv"
    path.write_text("# note=prefers the plain value column\n"
                    "alpha,trace_v_theta,value\n1,10,100\n2,20,200\n")
    alphas, values = read_points_csv(path)
    np.testing.assert_array_equal(values, [100.0, 200.0])
    bad = tmp_path / "bad.csv"
    bad.write_text("alpha,other\n1,2\n")
    with pytest.raises(ValidationError):
        read_points_csv(bad)
    bad.write_text("beta,value\n1,2\n")
    with pytest.raises(ValidationError):
        read_points_csv(bad)
    bad.write_text("# only comments\n")
    with pytest.raises(ValidationError):
        read_points_csv(bad)


def test_fit_csv_output(tmp_path):
    fit = FitResult(c1=1.25, c2=0.5, c3=0.0, rss=1e-12, converged=True)
    path = tmp_path / "fit.csv"
    write_fit_csv(path, fit, {"points": 8})
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "# points=8"
    assert lines[1] == "c1,c2,c3,rss,converged"
    cells = lines[2].split(",")
    assert float(cells[0]) == 1.25
    assert cells[4] == "true"
