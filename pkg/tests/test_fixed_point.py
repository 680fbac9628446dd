import itertools

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg, optimize

from coexdcf.fixed_point import (
    TOLERANCE,
    solve_bianchi_saturated,
    solve_single,
    solve_state1,
    solve_state2,
    state2_residual,
    stationary_distribution,
    tau_of_p_saturated,
    tau_of_p_unsaturated,
)
from coexdcf.params import NetworkParams

mpmath.mp.dps = 40


def raw_tau(p, W, m, lam=1):
    """Closed form with the (1 - 2p) factor left in, evaluated in mpmath."""
    p, W, lam = mpmath.mpf(p), mpmath.mpf(W), mpmath.mpf(lam)
    num = 2 * (1 - 2 * p)
    den = (1 - 2 * p) * (W + 1) + p * W * (1 - (2 * p) ** m) + 2 * (1 - 2 * p) * (1 - p) * (1 - lam) / lam
    return num / den


def transition_matrix(p, W, m, lam):
    """Explicit back-off chain with the empty-queue state at index 0."""
    sizes = [W * 2 ** i for i in range(m + 1)]
    offset = np.cumsum([1] + sizes)
    n = offset[-1]
    P = np.zeros((n, n))
    idx = lambda i, j: offset[i] + j  # noqa: E731

    def restart(src, weight):
        # success: new packet w.p. lam, else wait in the empty state
        P[src, 0] += weight * (1 - lam)
        for k in range(W):
            P[src, idx(0, k)] += weight * lam / W

    P[0, 0] += 1 - lam
    for k in range(W):
        P[0, idx(0, k)] += lam / W
    for i, Wi in enumerate(sizes):
        for j in range(1, Wi):
            P[idx(i, j), idx(i, j - 1)] = 1.0
        nxt = min(i + 1, m)
        for k in range(sizes[nxt]):
            P[idx(i, 0), idx(nxt, k)] += p / sizes[nxt]
        restart(idx(i, 0), 1 - p)
    return P


def stationary_oracle(P):
    n = P.shape[0]
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    return linalg.solve(A, b)


def test_tau_at_zero_collision():
    assert tau_of_p_saturated(0.0, 32, 4) == pytest.approx(2 / 33, rel=1e-15)
    assert tau_of_p_unsaturated(0.0, 32, 4, 0.5) == pytest.approx(2 / 35, rel=1e-15)


@pytest.mark.parametrize("p, W, m", [(0.2, 32, 4), (0.05, 16, 6), (0.37, 64, 3), (0.8, 32, 5)])
def test_tau_matches_high_precision_evaluation(p, W, m):
    assert tau_of_p_saturated(p, W, m) == pytest.approx(float(raw_tau(p, W, m)), rel=1e-14)


def test_tau_at_half_matches_limit():
    expected = mpmath.limit(lambda x: raw_tau(x, 32, 4), mpmath.mpf(1) / 2)
    assert tau_of_p_saturated(0.5, 32, 4) == pytest.approx(float(expected), rel=1e-14)
    # and is continuous through the removable singularity
    assert tau_of_p_saturated(0.5 - 1e-9, 32, 4) == pytest.approx(tau_of_p_saturated(0.5, 32, 4), rel=1e-8)


@given(st.floats(0, 1), st.sampled_from([2, 8, 16, 32, 64, 1024]), st.integers(0, 8),
       st.floats(0.01, 1))
def test_unsaturated_matches_high_precision(p, W, m, lam):
    if abs(p - 0.5) < 1e-6:
        return
    assert tau_of_p_unsaturated(p, W, m, lam) == pytest.approx(float(raw_tau(p, W, m, lam)), rel=1e-12)


def test_full_intensity_reduces_to_saturated():
    rng = np.random.default_rng(5)
    for _ in range(100):
        p, W, m = rng.uniform(), int(rng.choice([8, 16, 32, 64, 128])), int(rng.integers(0, 8))
        assert tau_of_p_unsaturated(p, W, m, 1.0) == tau_of_p_saturated(p, W, m)
        assert tau_of_p_unsaturated(p, W, m, 1.0) == pytest.approx(float(raw_tau(p, W, m)), rel=1e-13)


def test_unsaturated_tau_from_transition_matrix():
    # 993-state chain; tau is the total mass on the (i, 0) states
    p, W, m, lam = 0.1, 32, 4, 0.05
    pi = stationary_oracle(transition_matrix(p, W, m, lam))
    offsets = np.cumsum([1] + [W * 2 ** i for i in range(m + 1)])[:-1]
    assert tau_of_p_unsaturated(p, W, m, lam) == pytest.approx(pi[offsets].sum(), rel=1e-10)


SMALL_CHAINS = [(W, m) for W in (1, 2, 4, 8, 16, 32) for m in range(6)
                if 1 + W * (2 ** (m + 1) - 1) <= 64]


@pytest.mark.parametrize("W, m", SMALL_CHAINS)
@pytest.mark.parametrize("p, lam", [(0.3, 0.5), (0.05, 1.0), (0.5, 0.2), (0.9, 0.9)])
def test_stationary_distribution_matches_eigenvector(W, m, p, lam):
    P = transition_matrix(p, W, m, lam)
    w, v = linalg.eig(P.T)
    k = np.argmin(abs(w - 1))
    oracle = np.real(v[:, k])
    oracle /= oracle.sum()
    got = stationary_distribution(p, W, m, lam)
    assert np.allclose(got.as_vector(), oracle, atol=1e-9, rtol=0)
    assert got.total() == pytest.approx(1.0, abs=1e-12)
    assert got.tau == pytest.approx(tau_of_p_unsaturated(p, W, m, lam), rel=1e-12)


def test_saturated_chain_has_no_empty_mass():
    assert stationary_distribution(0.3, 32, 4, 1.0).empty == 0.0


@settings(max_examples=50)
@given(st.floats(0, 0.99), st.sampled_from([4, 16, 32]), st.integers(0, 6), st.floats(0.01, 1))
def test_stationary_distribution_normalized(p, W, m, lam):
    assert stationary_distribution(p, W, m, lam).total() == pytest.approx(1.0, abs=1e-12)


def test_single_node_never_collides():
    tau, p, _, _ = solve_single(1, 32, 4)
    assert (tau, p) == (pytest.approx(2 / 33), 0.0)
    assert solve_state1(NetworkParams(n_primary=1)).p_p1 == 0.0


@pytest.mark.parametrize("N, expected", [(6, 0.0454422), (30, 0.0221627)])
def test_saturated_fixed_point(N, expected):
    tau, p = solve_bianchi_saturated(N, 32, 4)
    assert tau == pytest.approx(expected, abs=5e-6)
    assert p == pytest.approx(1 - (1 - tau) ** (N - 1), abs=1e-12)


def test_unsaturated_state1():
    sol = solve_state1(NetworkParams(n_primary=15, lambda_primary=0.05))
    assert sol.tau_p1 == pytest.approx(0.0249174, abs=5e-6)
    assert sol.residual <= TOLERANCE


def test_fixed_point_against_generic_root_finder():
    for N, W, m in [(6, 32, 4), (20, 16, 6), (3, 128, 2)]:
        root = optimize.fsolve(lambda p: p - (1 - (1 - tau_of_p_saturated(p[0], W, m)) ** (N - 1)),
                               [0.3], xtol=1e-14)[0]
        assert solve_single(N, W, m)[1] == pytest.approx(root, abs=1e-11)


def test_tau_decreases_in_population_and_window():
    grid = {(N, W): solve_single(N, W, 4)[0] for N in range(2, 31) for W in (16, 32, 64)}
    for W in (16, 32, 64):
        taus = [grid[N, W] for N in range(2, 31)]
        assert all(a > b for a, b in zip(taus, taus[1:]))
    for N in range(2, 31):
        assert grid[N, 16] > grid[N, 32] > grid[N, 64]


@pytest.mark.parametrize("N, W, m, lam", list(itertools.product([2, 6, 30], [16, 32], [0, 4], [1.0, 0.1])))
def test_residuals_reported_small(N, W, m, lam):
    sol = solve_state1(NetworkParams(n_primary=N, w_primary=W, m_primary=m, lambda_primary=lam))
    assert sol.residual <= TOLERANCE


def test_state2_symmetric():
    sol = solve_state2(NetworkParams(n_primary=6, n_secondary=15))
    assert sol.tau_p2 == pytest.approx(sol.tau_s2, abs=1e-10)
    assert sol.tau_p2 == pytest.approx(0.026734, abs=5e-6)
    # identical nodes: same as a single network of 21
    assert sol.tau_p2 == pytest.approx(solve_single(21, 32, 4)[0], abs=1e-10)
    assert sol.residual <= TOLERANCE


def test_state2_unsaturated():
    params = NetworkParams(n_primary=15, n_secondary=6, lambda_primary=0.05, lambda_secondary=0.01)
    sol = solve_state2(params)
    assert sol.tau_s2 == pytest.approx(0.0105035, abs=5e-6)
    assert state2_residual(params, sol.p_p2, sol.p_s2) <= TOLERANCE


def test_state2_against_generic_solver():
    params = NetworkParams(n_primary=9, n_secondary=4, w_secondary=100, m_secondary=2,
                           lambda_primary=0.3)
    sol = solve_state2(params)

    def eqs(x):
        tp = tau_of_p_unsaturated(x[0], 32, 4, 0.3)
        ts = tau_of_p_unsaturated(x[1], 100, 2, 1.0)
        return [x[0] - (1 - (1 - tp) ** 8 * (1 - ts) ** 4), x[1] - (1 - (1 - tp) ** 9 * (1 - ts) ** 3)]

    root = optimize.fsolve(eqs, [0.5, 0.5], xtol=1e-14)
    assert (sol.p_p2, sol.p_s2) == (pytest.approx(root[0], abs=1e-11), pytest.approx(root[1], abs=1e-11))


def test_state2_without_secondaries_is_state1():
    params = NetworkParams(n_primary=6, n_secondary=0)
    s1, s2 = solve_state1(params), solve_state2(params)
    assert s2.tau_p2 == s1.tau_p1 and s2.tau_s2 == 0.0
