"""Exhaustive grid search over secondary parameters.

Maximize secondary throughput subject to the primary keeping at least
``1 - loss_cap`` of the throughput it would get alone. The State-2 fixed
point depends only on W_s, so it is solved once per W_s and reused across
the t or beta axis.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence, TextIO

from .fixed_point import solve_state1, solve_state2
from .params import NetworkParams, Scheme, SchemeConfig, TimingParams, normalize_us, validate
from .scan import alpha_b, alpha_c_steady, alpha_i, state1_slots, state2_slots
from .throughput import analyze, state1_throughput, throughput_silence

DEFAULT_T_GRID_US = tuple(float(t) for t in range(0, 605, 5))
DEFAULT_WS_GRID = tuple(range(4, 513))
DEFAULT_BETA_GRID = tuple(round(0.05 * k, 2) for k in range(1, 21))

GRID_COLUMNS = ("scheme", "t_us", "w_s", "beta", "pt", "st", "feasible")


@dataclass(frozen=True)
class OptimizationProblem:
    scheme: Scheme
    params: NetworkParams
    timing: TimingParams
    loss_cap: float = 0.10
    t_grid_us: Sequence[float] = DEFAULT_T_GRID_US
    w_s_grid: Sequence[int] = DEFAULT_WS_GRID
    beta_grid: Sequence[float] = DEFAULT_BETA_GRID

    def __post_init__(self) -> None:
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not 0.0 < self.loss_cap < 1.0:
            raise ValueError(f"loss_cap must lie in (0, 1), got {self.loss_cap}")
        for name in ("t_grid_us", "w_s_grid", "beta_grid"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} must not be empty")
        if any(b <= 0 or b > 1 for b in self.beta_grid):
            raise ValueError("beta_grid values must lie in (0, 1]")
        if any(w < 1 for w in self.w_s_grid):
            raise ValueError("w_s_grid values must be >= 1")
        validate(self.params, self.timing)


@dataclass(frozen=True)
class GridPoint:
    scheme: str
    t_us: Optional[float]
    w_s: int
    beta: Optional[float]
    pt: float
    st: float
    feasible: bool


@dataclass
class OptimizationResult:
    scheme: Scheme
    t_us: Optional[float]
    w_s: int
    beta: Optional[float]
    st: float
    pt: float
    baseline_pt: float
    feasible: bool
    grid: list[GridPoint] = field(default_factory=list, repr=False)

    def write_grid(self, out: TextIO) -> None:
        write_grid_csv(self.grid, out)


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


def write_grid_csv(rows: Iterable[GridPoint], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(GRID_COLUMNS)
    for r in rows:
        w.writerow([r.scheme, _fmt(r.t_us), r.w_s, _fmt(r.beta), repr(r.pt), repr(r.st),
                    int(r.feasible)])


def grid_csv(rows: Iterable[GridPoint]) -> str:
    buf = io.StringIO()
    write_grid_csv(rows, buf)
    return buf.getvalue()


def _rank(p: GridPoint) -> tuple:
    # larger is better: ST, then smaller W_s, smaller t, larger beta
    return (p.st, -p.w_s, -(p.t_us or 0.0), p.beta or 0.0)


def evaluate_grid(problem: OptimizationProblem) -> tuple[list[GridPoint], float]:
    """Every grid point of the problem plus the primary-alone baseline throughput."""
    params, timing = problem.params, problem.timing
    d1 = state1_slots(solve_state1(params), params.n_primary, timing)
    baseline = state1_throughput(d1, timing)
    floor = (1.0 - problem.loss_cap) * baseline
    scheme = problem.scheme
    rows: list[GridPoint] = []

    for w_s in problem.w_s_grid:
        p2 = replace(params, w_secondary=int(w_s))
        d2 = state2_slots(solve_state2(p2), p2, timing)
        if scheme is Scheme.SENSING:
            prim_only = d1.p_slot * d1.p_succ * timing.credit_p
            both = d2.q_slot * d2.q_si * timing.credit_p
            st_cond = d2.q_slot * d2.q_is * timing.credit_s
            for t_us in problem.t_grid_us:
                tm = replace(timing, scan_t=normalize_us(t_us, timing.idle_slot_us))
                a = alpha_c_steady(alpha_b(d1, tm), alpha_i(d2, tm))
                pt = a * prim_only + (1.0 - a) * both
                st = (1.0 - a) * st_cond
                rows.append(GridPoint(scheme.value, float(t_us), int(w_s), None, pt, st, pt >= floor))
        else:
            betas = (1.0,) if scheme is Scheme.COEXIST else problem.beta_grid
            for beta in betas:
                rep = throughput_silence(d1, d2, float(beta), timing)
                rows.append(GridPoint(scheme.value, None, int(w_s),
                                      None if scheme is Scheme.COEXIST else float(beta),
                                      rep.pt, rep.st, rep.pt >= floor))
    return rows, baseline


def optimize(problem: OptimizationProblem) -> OptimizationResult:
    rows, baseline = evaluate_grid(problem)
    feasible = [r for r in rows if r.feasible]
    if feasible:
        best = max(feasible, key=_rank)
    else:
        # nothing meets the cap: report the point that protects the primary best
        best = max(rows, key=lambda p: (p.pt, -p.w_s, -(p.t_us or 0.0), p.beta or 0.0))
    return OptimizationResult(problem.scheme, best.t_us, best.w_s, best.beta,
                              best.st, best.pt, baseline, bool(feasible), rows)


def optimize_sensing(problem: OptimizationProblem) -> OptimizationResult:
    return optimize(replace(problem, scheme=Scheme.SENSING))


def optimize_silence(problem: OptimizationProblem) -> OptimizationResult:
    return optimize(replace(problem, scheme=Scheme.SILENT))


def optimize_coexist(problem: OptimizationProblem) -> OptimizationResult:
    return optimize(replace(problem, scheme=Scheme.COEXIST))


def apply_design(result: OptimizationResult, params: NetworkParams,
                 timing: TimingParams) -> tuple[NetworkParams, TimingParams, SchemeConfig]:
    """Scenario obtained by deploying an optimized secondary design."""
    params = replace(params, w_secondary=result.w_s)
    if result.t_us is not None:
        timing = replace(timing, scan_t=normalize_us(result.t_us, timing.idle_slot_us))
    if result.scheme is Scheme.SILENT:
        scheme = SchemeConfig(Scheme.SILENT, result.beta)
    else:
        scheme = SchemeConfig(result.scheme)
    return params, timing, scheme


@dataclass(frozen=True)
class RobustnessRow:
    scheme: str
    actual: NetworkParams
    assumed: NetworkParams
    t_us: Optional[float]
    w_s: int
    beta: Optional[float]
    pt: float
    st: float
    baseline_pt: float
    design_floor: float

    @property
    def pt_fraction(self) -> float:
        return self.pt / self.baseline_pt


ROBUSTNESS_COLUMNS = (
    "scheme", "actual_n_primary", "actual_n_secondary", "actual_lambda_primary",
    "assumed_n_primary", "assumed_n_secondary", "assumed_lambda_primary",
    "t_us", "w_s", "beta", "pt", "st", "baseline_pt", "design_floor",
)


def robustness_sweep(problem: OptimizationProblem,
                     mismatch: Iterable[tuple[NetworkParams, NetworkParams]],
                     schemes: Sequence[Scheme] = (Scheme.SENSING, Scheme.COEXIST, Scheme.SILENT),
                     ) -> list[RobustnessRow]:
    """Design against assumed parameters, then measure under the actual ones.

    ``mismatch`` holds (actual, assumed) pairs. ``design_floor`` is the
    protected throughput under the actual primary, (1 - loss_cap) times its
    stand-alone throughput.
    """
    rows = []
    cache: dict[tuple, OptimizationResult] = {}
    for actual, assumed in mismatch:
        validate(actual, problem.timing)
        validate(assumed, problem.timing)
        for scheme in schemes:
            key = (assumed, Scheme(scheme))
            if key not in cache:
                cache[key] = optimize(replace(problem, params=assumed, scheme=scheme))
            design = cache[key]
            p, tm, sc = apply_design(design, actual, problem.timing)
            rep = analyze(p, tm, sc).report
            rows.append(RobustnessRow(
                Scheme(scheme).value, actual, assumed, design.t_us, design.w_s, design.beta,
                rep.pt, rep.st, rep.baseline_pt, (1.0 - problem.loss_cap) * rep.baseline_pt,
            ))
    return rows


def write_robustness_csv(rows: Iterable[RobustnessRow], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(ROBUSTNESS_COLUMNS)
    for r in rows:
        w.writerow([
            r.scheme, r.actual.n_primary, r.actual.n_secondary, repr(r.actual.lambda_primary),
            r.assumed.n_primary, r.assumed.n_secondary, repr(r.assumed.lambda_primary),
            _fmt(r.t_us), r.w_s, _fmt(r.beta), repr(r.pt), repr(r.st),
            repr(r.baseline_pt), repr(r.design_floor),
        ])


def overestimate(params: NetworkParams, fraction: float) -> NetworkParams:
    """Primary node count as misjudged by ``fraction`` (0.3 = 30 % too many)."""
    return replace(params, n_primary=max(1, int(math.floor(params.n_primary * (1 + fraction) + 0.5))))
