"""Base kernel construction and the self-repellent reweighting.

The high-precision oracle works in exact rational arithmetic: for integer
alpha and rational x the reweighted rows and their stationary law are
ratios of integers, so the float implementation can be pinned to 1e-15.
"""

from fractions import Fraction

import numpy as np
import pytest

from tokenwalk import (ValidationError, build_mhrw, cycle_graph, erdos_renyi,
                       kernel_to_csv, lazy_transform, make_rng, path_graph,
                       pi_jacobian, random_connected_graph, srrw_kernel_matrix,
                       srrw_row, srrw_stationary, srrw_step, star_graph,
                       uniform_target)
from tokenwalk.kernels import ReversibleKernel, SrrwProcessState, check_target
from tokenwalk.spectral import decompose

from conftest import fd_jacobian


def random_target(rng, n):
    mu = rng.uniform(0.5, 2.0, size=n)
    return mu / mu.sum()


def path3_kernel():
    return build_mhrw(path_graph(3), uniform_target(3))


def exact_srrw(p_frac, mu_frac, x_frac, alpha):
    """Rational-arithmetic rows and stationary law of the reweighted kernel."""
    n = len(mu_frac)
    wgt = [(x_frac[j] / mu_frac[j]) ** -alpha for j in range(n)]
    rows = []
    for i in range(n):
        w = [p_frac[i][j] * wgt[j] for j in range(n)]
        s = sum(w)
        rows.append([v / s for v in w])
    pi_raw = [mu_frac[i] * wgt[i] * sum(p_frac[i][j] * wgt[j] for j in range(n))
              for i in range(n)]
    total = sum(pi_raw)
    return rows, [v / total for v in pi_raw]


def test_uniform_target():
    np.testing.assert_array_equal(uniform_target(4), np.full(4, 0.25))
    with pytest.raises(ValidationError):
        uniform_target(0)


def test_check_target_rejects_bad_vectors():
    with pytest.raises(ValidationError):
        check_target(np.array([[0.5, 0.5]]))
    with pytest.raises(ValidationError):
        check_target(np.array([0.7, 0.0, 0.3]))
    with pytest.raises(ValidationError):
        check_target(np.array([0.6, 0.6]))
    with pytest.raises(ValidationError):
        check_target(np.array([0.5, 0.5]), n=3)


def test_mhrw_is_reversible_across_random_instances():
    rng = make_rng(100)
    for trial in range(20):
        n = int(rng.integers(3, 25))
        g = random_connected_graph(n, float(rng.uniform(0.1, 0.5)),
                                   int(rng.integers(10 ** 6)))
        mu = random_target(rng, n)
        k = build_mhrw(g, mu)
        flux = mu[:, None] * k.p
        assert np.max(np.abs(flux - flux.T)) <= 1e-12
        assert np.max(np.abs(k.p.sum(axis=1) - 1.0)) <= 1e-12
        assert np.all(k.p >= 0.0)


def test_mhrw_known_values_on_path3():
    k = path3_kernel()
    expected = np.array([[0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]])
    np.testing.assert_array_equal(k.p, expected)
    assert k.aperiodic                          # holding mass at the ends


def test_aperiodicity_flag():
    # uniform target on an even cycle: no rejection, bipartite, periodic
    assert not build_mhrw(cycle_graph(4), uniform_target(4)).aperiodic
    assert build_mhrw(cycle_graph(5), uniform_target(5)).aperiodic
    assert build_mhrw(star_graph(5), uniform_target(5)).aperiodic
    rng = make_rng(7)
    mu = random_target(rng, 4)
    assert build_mhrw(cycle_graph(4), mu).aperiodic


def test_reversible_kernel_validation():
    mu = uniform_target(2)
    with pytest.raises(ValidationError):
        ReversibleKernel(p=np.array([[0.5, 0.6], [0.5, 0.5]]), mu=mu,
                         aperiodic=True)
    with pytest.raises(ValidationError):
        ReversibleKernel(p=np.array([[0.9, 0.1], [0.5, 0.5]]), mu=mu,
                         aperiodic=True)        # breaks detailed balance
    with pytest.raises(ValidationError):
        ReversibleKernel(p=np.array([[1.5, -0.5], [0.5, 0.5]]), mu=mu,
                         aperiodic=True)


def test_lazy_transform_shifts_spectrum():
    k = build_mhrw(cycle_graph(6), uniform_target(6))
    lazy = lazy_transform(k, 0.25)
    np.testing.assert_allclose(lazy.p, 0.75 * k.p + 0.25 * np.eye(6),
                               rtol=0, atol=0)
    assert lazy.aperiodic
    lam = decompose(lazy).lambdas
    # eigenvalues of the plain cycle walk are cos(2 pi j / 6)
    base = np.sort(np.cos(2.0 * np.pi * np.arange(6) / 6.0))
    np.testing.assert_allclose(lam, 0.75 * base + 0.25, atol=1e-12)
    for eps in (0.0, 1.0, -0.1):
        with pytest.raises(ValidationError):
            lazy_transform(k, eps)


def test_srrw_row_matches_exact_rational_oracle():
    k = path3_kernel()
    p_frac = [[Fraction(1, 2), Fraction(1, 2), Fraction(0)],
              [Fraction(1, 2), Fraction(0), Fraction(1, 2)],
              [Fraction(0), Fraction(1, 2), Fraction(1, 2)]]
    mu_frac = [Fraction(1, 3)] * 3
    x_frac = [Fraction(4, 29), Fraction(18, 29), Fraction(7, 29)]
    x = np.array([float(v) for v in x_frac])
    rows, pi = exact_srrw(p_frac, mu_frac, x_frac, alpha=3)
    for i in range(3):
        got = srrw_row(k, x, i, 3.0)
        want = np.array([float(v) for v in rows[i]])
        np.testing.assert_allclose(got, want, rtol=1e-15, atol=1e-18)
    got_pi = srrw_stationary(k, x, 3.0)
    np.testing.assert_allclose(
        got_pi, np.array([float(v) for v in pi]), rtol=1e-14, atol=1e-18)
    # frozen spot values: row 0 is [729/737, 8/737, 0]
    np.testing.assert_allclose(srrw_row(k, x, 0, 3.0),
                               [729.0 / 737.0, 8.0 / 737.0, 0.0], rtol=1e-15)
    assert pi[0] == Fraction(86707313, 90985721)


def test_srrw_rational_oracle_random_instances():
    rng = make_rng(42)
    for trial in range(10):
        n = int(rng.integers(3, 7))
        g = random_connected_graph(n, 0.4, int(rng.integers(10 ** 6)))
        k = build_mhrw(g, uniform_target(n))
        p_frac = [[Fraction(v).limit_denominator(10 ** 12) for v in row]
                  for row in k.p]
        counts = rng.integers(1, 20, size=n)
        x_frac = [Fraction(int(c), int(counts.sum())) for c in counts]
        x = np.array([float(v) for v in x_frac])
        alpha = int(rng.integers(1, 6))
        rows, pi = exact_srrw(p_frac, [Fraction(1, n)] * n, x_frac, alpha)
        got = srrw_kernel_matrix(k, x, float(alpha))
        want = np.array([[float(v) for v in row] for row in rows])
        np.testing.assert_allclose(got, want, rtol=1e-13, atol=1e-16)
        np.testing.assert_allclose(srrw_stationary(k, x, float(alpha)),
                                   [float(v) for v in pi],
                                   rtol=1e-12, atol=1e-16)


def test_srrw_recovers_base_chain():
    rng = make_rng(9)
    for trial in range(5):
        n = int(rng.integers(3, 12))
        g = random_connected_graph(n, 0.3, int(rng.integers(10 ** 6)))
        mu = random_target(rng, n)
        k = build_mhrw(g, mu)
        np.testing.assert_array_equal(srrw_kernel_matrix(k, mu, 0.0), k.p)
        # at x = mu the weights are identically 1 for any alpha
        np.testing.assert_allclose(srrw_kernel_matrix(k, mu, 7.0), k.p,
                                   rtol=0, atol=1e-14)
        np.testing.assert_array_equal(srrw_stationary(k, mu, 0.0), mu)
        np.testing.assert_allclose(srrw_stationary(k, mu, 7.0), mu,
                                   rtol=0, atol=1e-14)


def test_srrw_kernel_matrix_consistent_with_rows():
    k = path3_kernel()
    x = np.array([0.2, 0.5, 0.3])
    mat = srrw_kernel_matrix(k, x, 2.5)
    for i in range(3):
        np.testing.assert_array_equal(mat[i], srrw_row(k, x, i, 2.5))
    assert np.max(np.abs(mat.sum(axis=1) - 1.0)) <= 1e-15


def test_srrw_input_validation():
    k = path3_kernel()
    x = uniform_target(3)
    with pytest.raises(ValidationError):
        srrw_row(k, x, 0, -1.0)
    with pytest.raises(ValidationError):
        srrw_row(k, x, 5, 1.0)
    with pytest.raises(ValidationError):
        srrw_row(k, np.array([0.5, 0.5, 0.5]), 0, 1.0)
    with pytest.raises(ValidationError):
        srrw_kernel_matrix(k, np.array([0.6, 0.4, 0.0]), 1.0)


def test_srrw_stationary_is_stationary_at_large_alpha():
    rng = make_rng(11)
    for alpha in (0.5, 2.0, 10.0, 40.0):
        n = 6
        g = random_connected_graph(n, 0.4, int(rng.integers(10 ** 6)))
        mu = random_target(rng, n)
        k = build_mhrw(g, mu)
        x = 0.7 * rng.dirichlet(np.full(n, 2.0)) + 0.3 / n
        pi = srrw_stationary(k, x, alpha)
        kmat = srrw_kernel_matrix(k, x, alpha)
        assert np.all(pi > 0)
        assert abs(pi.sum() - 1.0) <= 1e-14
        assert np.max(np.abs(pi @ kmat - pi)) <= 1e-12


def test_pi_jacobian_closed_form_at_target():
    rng = make_rng(21)
    for alpha in (0.0, 1.0, 5.0, 10.0):
        n = int(rng.integers(3, 10))
        g = random_connected_graph(n, 0.3, int(rng.integers(10 ** 6)))
        mu = random_target(rng, n)
        k = build_mhrw(g, mu)
        want = (2.0 * alpha * np.outer(mu, np.ones(n)) - alpha * k.p.T
                - (alpha + 1.0) * np.eye(n))
        np.testing.assert_allclose(pi_jacobian(k, mu, alpha), want,
                                   rtol=0, atol=1e-10)


def test_pi_jacobian_matches_finite_differences():
    rng = make_rng(22)
    for alpha in (1.0, 4.0):
        n = 5
        g = random_connected_graph(n, 0.4, int(rng.integers(10 ** 6)))
        mu = random_target(rng, n)
        k = build_mhrw(g, mu)
        x = 0.7 * rng.dirichlet(np.full(n, 2.0)) + 0.3 / n
        jac = pi_jacobian(k, x, alpha)
        fd = fd_jacobian(lambda y: srrw_stationary(k, y, alpha) - y, x)
        assert np.max(np.abs(jac - fd)) / max(1.0, np.max(np.abs(jac))) <= 1e-5
        # probability leaves one node only by entering another
        np.testing.assert_allclose(jac.sum(axis=0), -np.ones(n), atol=1e-10)


def test_srrw_step_advances_state():
    k = path3_kernel()
    rng = make_rng(3)
    state = SrrwProcessState(node=1, x=uniform_target(3), n_steps=0)
    for t in range(1, 200):
        state = srrw_step(state, k, 2.0, (t + 1.0) ** -0.8, rng)
        assert 0 <= state.node < 3
        assert abs(state.x.sum() - 1.0) <= 1e-12
        assert np.all(state.x > 0)
    assert state.n_steps == 199
    with pytest.raises(ValidationError):
        srrw_step(state, k, 2.0, 1.0, rng)


def test_kernel_to_csv_round_trips_exactly():
    k = build_mhrw(erdos_renyi(7, 0.5, seed=2), uniform_target(7))
    text = kernel_to_csv(k)
    lines = text.strip().splitlines()
    assert lines[0] == "7"
    parsed = np.array([[float(v) for v in line.split(",")]
                       for line in lines[1:]])
    np.testing.assert_array_equal(parsed, k.p)
