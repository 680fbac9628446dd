"""Slot-type distributions and scan-outcome probabilities.

A transmission slot (TS) is idle, a success or a collision; each lasts a
different number of real-time (idle-slot) units. The probability that a
scan of ``scan_t`` real-time slots overlaps a primary transmission is
derived from the TS mix of the state the network was in before the scan.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fixed_point import State1Solution, State2Solution
from .params import NetworkParams, TimingParams


@dataclass(frozen=True)
class State1SlotDistribution:
    p_idle: float
    p_succ: float
    p_coll: float
    p_slot: float

    def mean_duration(self, timing: TimingParams) -> float:
        return (self.p_idle + self.p_succ * timing.success_slot_p
                + self.p_coll * timing.collision_slot_p)


@dataclass(frozen=True)
class State2SlotDistribution:
    q_ii: float
    q_si: float
    q_is: float
    q_ci: float
    q_ic: float
    q_cc: float
    q_slot: float
    q_i: float

    def probabilities(self) -> tuple[float, ...]:
        return (self.q_ii, self.q_si, self.q_is, self.q_ci, self.q_ic, self.q_cc)

    def mean_duration(self, timing: TimingParams) -> float:
        return (self.q_ii + self.q_si * timing.success_slot_p
                + self.q_is * timing.success_slot_s
                + self.q_ci * timing.collision_slot_p
                + self.q_ic * timing.collision_slot_s
                + self.q_cc * timing.collision_slot_ps)


@dataclass(frozen=True)
class ScanOutcomeModel:
    alpha_b: float
    alpha_i: float
    alpha_c: float


def _slot_mix(tau: float, n: int) -> tuple[float, float, float]:
    idle = (1.0 - tau) ** n
    succ = n * tau * (1.0 - tau) ** (n - 1) if n > 0 else 0.0
    if n < 2:
        return idle, succ, 0.0
    return idle, succ, max(1.0 - idle - succ, 0.0)


def state1_slots(sol: State1Solution, n_primary: int, timing: TimingParams) -> State1SlotDistribution:
    p_i, p_s, p_c = _slot_mix(sol.tau_p1, n_primary)
    mean = p_i + p_s * timing.success_slot_p + p_c * timing.collision_slot_p
    return State1SlotDistribution(p_i, p_s, p_c, 1.0 / mean)


def state2_slots(sol: State2Solution, params: NetworkParams, timing: TimingParams) -> State2SlotDistribution:
    """Table of State-2 slot types: idle, primary/secondary success, pp/ss/ps collisions."""
    a_i, a_s, a_c = _slot_mix(sol.tau_p2, params.n_primary)
    b_i, b_s, b_c = _slot_mix(sol.tau_s2, params.n_secondary)
    q_ii = a_i * b_i
    q_si = a_s * b_i
    q_is = a_i * b_s
    q_ci = a_c * b_i
    q_ic = a_i * b_c
    q_cc = (1.0 - a_i) * (1.0 - b_i)
    # same summation order as the State-1 mean, so that a silent secondary
    # network reproduces it bit for bit
    mean = (q_ii + q_si * timing.success_slot_p + q_ci * timing.collision_slot_p
            + q_is * timing.success_slot_s + q_ic * timing.collision_slot_s
            + q_cc * timing.collision_slot_ps)
    return State2SlotDistribution(q_ii, q_si, q_is, q_ci, q_ic, q_cc, 1.0 / mean, a_i)


def pos_part(x: float) -> float:
    return (x + abs(x)) / 2.0


def _idle_run(q: float, a: float, b: float) -> float:
    """(q**a - q**b) / (1 - q), with its limit b - a at q = 1."""
    if q >= 1.0:
        return b - a
    if q <= 0.0:
        return (1.0 if a == 0 else 0.0) - (1.0 if b == 0 else 0.0)
    lq = math.log(q)
    return (math.expm1(a * lq) - math.expm1(b * lq)) / -math.expm1(lq)


def _pow(q: float, x: float) -> float:
    return 1.0 if x == 0 else q ** x


def alpha_b(dist: State1SlotDistribution, timing: TimingParams) -> float:
    """P(scan busy | previous scan busy), from the State-1 slot mix.

    Valid for any t >= 0; reduces to the t > max(DIFS, EIFS) form when both
    bracketed terms vanish.
    """
    t = timing.scan_t
    t_d, t_e = t - timing.difs, t - timing.eifs
    p_i, p_s, p_c = dist.p_idle, dist.p_succ, dist.p_coll
    busy_mass = p_s + p_c
    if busy_mass == 0.0:
        tail = 1.0
    else:
        tail = (p_s * _pow(p_i, pos_part(t_d)) + p_c * _pow(p_i, pos_part(t_e))) / busy_mass
    idle = dist.p_slot * (tail + p_s * pos_part(-t_d) + p_c * pos_part(-t_e))
    return 1.0 - idle


def alpha_i(dist: State2SlotDistribution, timing: TimingParams) -> float:
    """P(scan busy | previous scan idle), from the State-2 slot mix.

    Secondaries are silent while scanning, so an in-scan TS is idle with
    probability q_i (primaries only). Secondary packets that would overrun
    the scan start are cut short; the (TsSuc-1), (TsCol-1) terms account for
    a scan that begins inside such a secondary slot.
    """
    t = timing.scan_t
    t_d, t_e = t - timing.difs, t - timing.eifs
    q = dist.q_i
    qd, qe = _pow(q, pos_part(t_d)), _pow(q, pos_part(t_e))
    after_success = _idle_run(q, pos_part(t_d), t) + pos_part(-t_d)
    after_collision = _idle_run(q, pos_part(t_e), t) + pos_part(-t_e)
    idle = (
        _pow(q, t)
        + after_success * (dist.q_si + dist.q_is)
        + (timing.ts_suc - 1.0) * dist.q_is * qd
        + (timing.ts_col - 1.0) * dist.q_ic * qe
        + after_collision * (dist.q_ci + dist.q_ic + dist.q_cc)
    )
    return 1.0 - dist.q_slot * idle


def alpha_c_steady(a_b: float, a_i: float) -> float:
    """Stationary busy probability of the two-state scan-outcome chain."""
    if a_i == 0.0:
        return 0.0
    return a_i / (1.0 + a_i - a_b)


def alpha_c_recursion(a_b: float, a_i: float, start: float, steps: int) -> np.ndarray:
    """Busy probability after each of ``steps`` scans, starting from ``start``."""
    out = np.empty(steps + 1)
    out[0] = start
    for n in range(1, steps + 1):
        out[n] = a_b * out[n - 1] + a_i * (1.0 - out[n - 1])
    return out


def scan_outcomes(d1: State1SlotDistribution, d2: State2SlotDistribution,
                  timing: TimingParams) -> ScanOutcomeModel:
    ab, ai = alpha_b(d1, timing), alpha_i(d2, timing)
    return ScanOutcomeModel(ab, ai, alpha_c_steady(ab, ai))
