"""Primary and secondary throughput for the three secondary-access schemes.

Throughput is the fraction of time spent in successful transmissions
(dimensionless). ``st_conditional`` is the secondary throughput while the
secondaries are contending, i.e. without the admission factor.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .fixed_point import State1Solution, State2Solution, solve_state1, solve_state2
from .params import NetworkParams, Scheme, SchemeConfig, TimingParams, validate
from .scan import (
    ScanOutcomeModel,
    State1SlotDistribution,
    State2SlotDistribution,
    scan_outcomes,
    state1_slots,
    state2_slots,
)


@dataclass(frozen=True)
class ThroughputReport:
    pt: float
    st: float
    st_conditional: float
    baseline_pt: float
    scheme: SchemeConfig
    alpha_c: Optional[float] = None

    def __post_init__(self) -> None:
        if self.pt + self.st > 1.0 + 1e-12:
            raise ValueError(f"pt + st exceeds 1: {self.pt} + {self.st}")


def state1_throughput(d1: State1SlotDistribution, timing: TimingParams) -> float:
    """Primary throughput with no secondary network."""
    return d1.p_slot * d1.p_succ * timing.credit_p


def throughput_sensing(d1: State1SlotDistribution, d2: State2SlotDistribution,
                       scan: ScanOutcomeModel, timing: TimingParams) -> ThroughputReport:
    a = scan.alpha_c
    pt = (a * d1.p_slot * d1.p_succ + (1.0 - a) * d2.q_slot * d2.q_si) * timing.credit_p
    st_cond = d2.q_slot * d2.q_is * timing.credit_s
    return ThroughputReport(pt, (1.0 - a) * st_cond, st_cond, state1_throughput(d1, timing),
                            SchemeConfig(Scheme.SENSING), a)


def throughput_silence(d1: State1SlotDistribution, d2: State2SlotDistribution,
                       beta: float, timing: TimingParams,
                       scheme: SchemeConfig | None = None) -> ThroughputReport:
    """Secondaries stay silent for a fraction 1 - beta of the time."""
    pt = ((1.0 - beta) * d1.p_slot * d1.p_succ + beta * d2.q_slot * d2.q_si) * timing.credit_p
    st_cond = d2.q_slot * d2.q_is * timing.credit_s
    if scheme is None:
        scheme = SchemeConfig(Scheme.SILENT, beta)
    return ThroughputReport(pt, beta * st_cond, st_cond, state1_throughput(d1, timing), scheme)


def throughput_coexist(d1: State1SlotDistribution, d2: State2SlotDistribution,
                       timing: TimingParams) -> ThroughputReport:
    return throughput_silence(d1, d2, 1.0, timing, SchemeConfig(Scheme.COEXIST))


@dataclass(frozen=True)
class Analysis:
    """Everything the closed-form model produces for one scenario."""

    params: NetworkParams
    timing: TimingParams
    state1: State1Solution
    state2: State2Solution
    slots1: State1SlotDistribution
    slots2: State2SlotDistribution
    scan: ScanOutcomeModel
    report: ThroughputReport


def analyze(params: NetworkParams, timing: TimingParams,
            scheme: SchemeConfig = SchemeConfig()) -> Analysis:
    validate(params, timing)
    s1 = solve_state1(params)
    s2 = solve_state2(params)
    d1 = state1_slots(s1, params.n_primary, timing)
    d2 = state2_slots(s2, params, timing)
    scan = scan_outcomes(d1, d2, timing)
    return Analysis(params, timing, s1, s2, d1, d2, scan, report_for(scheme, d1, d2, scan, timing))


def report_for(scheme: SchemeConfig, d1: State1SlotDistribution, d2: State2SlotDistribution,
               scan: ScanOutcomeModel, timing: TimingParams) -> ThroughputReport:
    if scheme.scheme is Scheme.SENSING:
        return throughput_sensing(d1, d2, scan, timing)
    if scheme.scheme is Scheme.SILENT:
        return throughput_silence(d1, d2, scheme.beta, timing)
    return throughput_coexist(d1, d2, timing)
