"""Transmission/collision probability fixed points.

The back-off chain gives tau as a function of the collision probability p;
the population gives p as a function of everyone's tau. Single-network
systems are solved by bracketed root finding on p, the coupled
primary/secondary system by damped fixed-point iteration.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .params import NetworkParams

log = logging.getLogger(__name__)

TOLERANCE = 1e-10
MAX_ITER = 10_000
DAMPING = 0.5


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class State1Solution:
    tau_p1: float
    p_p1: float
    residual: float
    iterations: int


@dataclass(frozen=True)
class State2Solution:
    tau_p2: float
    tau_s2: float
    p_p2: float
    p_s2: float
    residual: float
    iterations: int


def _stage_sum(p: float, m: int) -> float:
    # sum_{k<m} (2p)^k, which equals (1 - (2p)^m) / (1 - 2p) and stays finite at p = 1/2
    x = 2.0 * p
    total, term = 0.0, 1.0
    for _ in range(m):
        total += term
        term *= x
    return total


def tau_of_p_unsaturated(p: float, W: int, m: int, lam: float) -> float:
    """Per-slot transmission probability of a node with traffic intensity ``lam``.

    Dividing numerator and denominator of the closed form by (1 - 2p) removes
    the p = 1/2 singularity, so no special case is needed there.
    """
    idle_term = 0.0 if lam == 1.0 else 2.0 * (1.0 - p) * (1.0 - lam) / lam
    return 2.0 / ((W + 1) + p * W * _stage_sum(p, m) + idle_term)


def tau_of_p_saturated(p: float, W: int, m: int) -> float:
    return tau_of_p_unsaturated(p, W, m, 1.0)


@dataclass(frozen=True)
class StationaryDistribution:
    """Stationary law of the back-off chain with an empty-queue state.

    ``empty`` is the mass of state (-1, 0); ``stages[i][j]`` the mass of (i, j).
    """

    empty: float
    stages: tuple[np.ndarray, ...]

    def total(self) -> float:
        return self.empty + float(sum(s.sum() for s in self.stages))

    @property
    def tau(self) -> float:
        return float(sum(s[0] for s in self.stages))

    def as_vector(self) -> np.ndarray:
        """Flattened as [(-1,0), (0,0..W0-1), (1,0..W1-1), ...]."""
        return np.concatenate([[self.empty], *self.stages])


def stationary_distribution(p: float, W: int, m: int, lam: float) -> StationaryDistribution:
    s00 = (1.0 - p) * tau_of_p_unsaturated(p, W, m, lam)
    stages = []
    for i in range(m + 1):
        Wi = (2 ** i) * W
        scale = p ** i / (1.0 - p) if i == m else p ** i
        j = np.arange(Wi)
        stages.append((Wi - j) / Wi * scale * s00)
    empty = 0.0 if lam == 1.0 else (1.0 - lam) / lam * s00
    return StationaryDistribution(empty, tuple(stages))


def collision_probability(tau: float, others: int) -> float:
    return 1.0 - (1.0 - tau) ** others


def solve_single(N: int, W: int, m: int, lam: float = 1.0) -> tuple[float, float, float, int]:
    """Fixed point of one homogeneous network; returns (tau, p, residual, evaluations)."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if N == 1:
        return tau_of_p_unsaturated(0.0, W, m, lam), 0.0, 0.0, 1

    def gap(p: float) -> float:
        return p - collision_probability(tau_of_p_unsaturated(p, W, m, lam), N - 1)

    # gap(0) < 0 and gap(1) > 0; gap is increasing so the root is unique
    p, info = brentq(gap, 0.0, 1.0, xtol=1e-16, rtol=4 * np.finfo(float).eps,
                     maxiter=MAX_ITER, full_output=True)
    residual = abs(gap(p))
    if not info.converged or residual > TOLERANCE:
        raise ConvergenceError(f"single-network solve N={N} W={W} m={m}", residual)
    return tau_of_p_unsaturated(p, W, m, lam), p, residual, info.function_calls


def solve_bianchi_saturated(N: int, W: int, m: int) -> tuple[float, float]:
    tau, p, _, _ = solve_single(N, W, m, 1.0)
    return tau, p


def solve_state1(params: NetworkParams, lambda_primary: float | None = None) -> State1Solution:
    """Only the primaries contend."""
    lam = params.lambda_primary if lambda_primary is None else lambda_primary
    tau, p, res, it = solve_single(params.n_primary, params.w_primary, params.m_primary, lam)
    return State1Solution(tau, p, res, it)


def state2_residual(params: NetworkParams, p_p: float, p_s: float) -> float:
    tp = tau_of_p_unsaturated(p_p, params.w_primary, params.m_primary, params.lambda_primary)
    ts = tau_of_p_unsaturated(p_s, params.w_secondary, params.m_secondary, params.lambda_secondary)
    Np, Ns = params.n_primary, params.n_secondary
    rp = p_p - (1.0 - (1.0 - tp) ** (Np - 1) * (1.0 - ts) ** Ns)
    rs = p_s - (1.0 - (1.0 - tp) ** Np * (1.0 - ts) ** (Ns - 1))
    return max(abs(rp), abs(rs))


def solve_state2(
    params: NetworkParams,
    tol: float = 1e-13,
    max_iter: int = MAX_ITER,
    damping: float = DAMPING,
) -> State2Solution:
    """Both networks contend.

    Damped Picard iteration on (p_p2, p_s2) starting from (0, 0). With no
    secondaries the State-1 solution is returned with tau_s2 = 0.
    """
    if params.n_secondary == 0:
        s1 = solve_state1(params)
        return State2Solution(s1.tau_p1, 0.0, s1.p_p1, 0.0, s1.residual, s1.iterations)

    Np, Ns = params.n_primary, params.n_secondary
    Wp, Ws = params.w_primary, params.w_secondary
    mp, ms = params.m_primary, params.m_secondary
    lp, ls = params.lambda_primary, params.lambda_secondary

    pp = ps = 0.0
    residual = np.inf
    for it in range(1, max_iter + 1):
        tp = tau_of_p_unsaturated(pp, Wp, mp, lp)
        ts = tau_of_p_unsaturated(ps, Ws, ms, ls)
        new_pp = 1.0 - (1.0 - tp) ** (Np - 1) * (1.0 - ts) ** Ns
        new_ps = 1.0 - (1.0 - tp) ** Np * (1.0 - ts) ** (Ns - 1)
        residual = max(abs(new_pp - pp), abs(new_ps - ps))
        if residual <= tol:
            pp, ps = new_pp, new_ps
            break
        pp += damping * (new_pp - pp)
        ps += damping * (new_ps - ps)
    residual = state2_residual(params, pp, ps)
    if residual > TOLERANCE:
        raise ConvergenceError(f"state-2 solve did not converge for {params}", residual)
    log.debug("state-2 solve: %d iterations, residual %.2e, damping %.2f", it, residual, damping)
    return State2Solution(
        tau_of_p_unsaturated(pp, Wp, mp, lp),
        tau_of_p_unsaturated(ps, Ws, ms, ls),
        pp, ps, residual, it,
    )
