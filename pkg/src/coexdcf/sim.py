"""Slot-level simulator of a primary and a scanning secondary DCF network.

Every node runs the per-transmission-slot back-off chain literally: a node
whose counter is 0 transmits, every other contending node decrements.
After a success the node restarts at stage 0 (or empties its queue with
probability 1 - lambda); after a collision it moves one stage up, capped at
m. Real time is integer ticks (a fixed fraction of an idle slot) so scan
overlap tests are exact.

Runs of idle slots are advanced in one step, bounded by the next instant
the set of contending nodes can change (scan start or scan end), so the
loop cost is per transmission rather than per slot.
"""
from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence, TextIO

import numpy as np
from scipy.optimize import brentq

from .fixed_point import StationaryDistribution
from .params import NetworkParams, Scheme, SchemeConfig, TimingParams, validate

SLOT_TYPES = ("idle", "p_succ", "s_succ", "pp_coll", "ss_coll", "ps_coll")
IDLE, P_SUCC, S_SUCC, PP_COLL, SS_COLL, PS_COLL = range(6)


@dataclass(frozen=True)
class SimConfig:
    params: NetworkParams
    timing: TimingParams
    scheme: SchemeConfig = SchemeConfig()
    run_length: int = 500_000
    rng_seed: int = 0
    measurement_warmup: Optional[int] = None
    n_batches: int = 10
    count_partial: bool = True
    track_every: int = 0         # sample primary 0's back-off state every k slots (0: off)

    def __post_init__(self) -> None:
        validate(self.params, self.timing)
        if self.measurement_warmup is None:
            object.__setattr__(self, "measurement_warmup", self.run_length // 20)
        if not self.run_length > self.measurement_warmup >= 0:
            raise ValueError("need run_length > measurement_warmup >= 0, got "
                             f"{self.run_length}, {self.measurement_warmup}")
        if self.track_every < 0:
            raise ValueError(f"track_every must be >= 0, got {self.track_every}")
        if not 1 <= self.n_batches <= self.measured:
            raise ValueError(f"n_batches must lie in [1, measured slots], got {self.n_batches}")

    @property
    def measured(self) -> int:
        return self.run_length - self.measurement_warmup


def tick_resolution(timing: TimingParams, candidates: Sequence[int] = (1, 10, 100, 1000)) -> int:
    """Smallest number of ticks per idle slot making every duration integral."""
    values = (timing.tp_suc, timing.ts_suc, timing.tp_col, timing.ts_col,
              timing.difs, timing.eifs, timing.scan_t, timing.period_T)
    for res in candidates:
        if all(abs(v * res - round(v * res)) < 1e-6 for v in values):
            return res
    raise ValueError("durations are not multiples of 0.001 idle slot; cannot simulate exactly")


@dataclass(frozen=True)
class TauEstimates:
    tau_p1: Optional[float]
    tau_p2: Optional[float]
    tau_s2: Optional[float]


BATCH_ARRAYS = ("counts", "slot_time", "attempts", "credit_p", "credit_s",
                "scans_busy", "scans_total")


@dataclass
class SimStats:
    """Counters of one run, kept per batch (or per replication after merging).

    ``counts[b, state, type]`` counts slots of each type, where state 0 means
    only primaries contended and state 1 means both networks did.
    ``slot_time`` holds the matching durations in ticks, ``attempts[b, state,
    net]`` the number of individual transmissions by primaries (net 0) and
    secondaries (net 1). Credits and times are integer ticks.
    """

    config: SimConfig
    resolution: int
    counts: np.ndarray
    slot_time: np.ndarray
    attempts: np.ndarray
    credit_p: np.ndarray
    credit_s: np.ndarray
    scans_busy: np.ndarray
    scans_total: np.ndarray
    start_tick: int = 0
    end_tick: int = 0
    truncated: int = 0
    node_states: Optional[StationaryDistribution] = None  # occupancy counts of primary 0
    scan_log: list = field(default_factory=list)
    final_nodes: tuple = ()

    @property
    def n_batches(self) -> int:
        return self.counts.shape[0]

    @property
    def total_time(self) -> int:
        return int(self.slot_time.sum())

    def _map(self, fn) -> "SimStats":
        return replace(self, **{name: fn(getattr(self, name)) for name in BATCH_ARRAYS})

    def totals(self) -> "SimStats":
        """The same counters collapsed to a single batch."""
        return self._map(lambda a: a.sum(axis=0, keepdims=True))

    def batch(self, b: int) -> "SimStats":
        return self._map(lambda a: a[b:b + 1])

    # derived estimates over all batches
    @property
    def alpha_c(self) -> Optional[float]:
        total = int(self.scans_total.sum())
        return int(self.scans_busy.sum()) / total if total else None

    @property
    def pt(self) -> float:
        return float(self.credit_p.sum()) / self.total_time

    @property
    def st(self) -> float:
        return float(self.credit_s.sum()) / self.total_time

    def attempt_rates(self) -> TauEstimates:
        """Per-node transmission probability per slot, counted directly."""
        c = self.counts.sum(axis=(0, 2))
        a = self.attempts.sum(axis=0)
        np_, ns = self.config.params.n_primary, self.config.params.n_secondary
        rate = lambda k, n, slots: float(k) / (n * slots) if n and slots else None  # noqa: E731
        return TauEstimates(rate(a[0, 0], np_, c[0]), rate(a[1, 0], np_, c[1]),
                            rate(a[1, 1], ns, c[1]))

    def estimates(self) -> dict[str, Optional[float]]:
        tau = estimate_tau_from_ratios(self)
        return {"tau_p1": tau.tau_p1, "tau_p2": tau.tau_p2, "tau_s2": tau.tau_s2,
                "alpha_c": self.alpha_c, "pt": self.pt, "st": self.st}

    def batch_means(self) -> dict[str, tuple[Optional[float], Optional[float]]]:
        """Pooled estimate and batch-means standard error for every metric."""
        pooled = self.estimates()
        per_batch = [self.batch(b).estimates() for b in range(self.n_batches)]
        out = {}
        for key, value in pooled.items():
            vals = [e[key] for e in per_batch]
            if value is None or any(v is None for v in vals) or len(vals) < 2:
                out[key] = (value, None)
            else:
                out[key] = (value, float(np.std(vals, ddof=1) / math.sqrt(len(vals))))
        return out


def combine_replications(runs: Sequence[SimStats]) -> SimStats:
    """Stack independent runs so that each run becomes one batch."""
    if not runs:
        raise ValueError("no runs to combine")
    tots = [r.totals() for r in runs]
    merged = {name: np.concatenate([getattr(t, name) for t in tots]) for name in BATCH_ARRAYS}
    return replace(runs[0], **merged, start_tick=0, end_tick=0, node_states=None, scan_log=[],
                   final_nodes=(),
                   truncated=sum(r.truncated for r in runs))


# --------------------------------------------------------------------------
# ratio estimator

def success_collision_ratio(tau: float, n: int) -> float:
    """Expected successes per collision among ``n`` nodes with attempt probability tau."""
    idle = (1.0 - tau) ** n
    succ = n * tau * (1.0 - tau) ** (n - 1)
    return succ / (1.0 - idle - succ)


def tau_from_ratio(ratio: float, n: int) -> float:
    """Invert :func:`success_collision_ratio`; it decreases strictly in tau on (0, 1)."""
    if n < 2 or not ratio > 0 or not math.isfinite(ratio):
        raise ValueError(f"ratio {ratio} with n={n} has no inverse")

    def gap(t: float) -> float:
        # (successes - ratio * collisions) / t: positive as t -> 0, negative at t = 1
        lead = n * (1.0 - t) ** (n - 1)
        busy = -math.expm1(n * math.log1p(-t)) if t < 1.0 else 1.0
        return lead - ratio * (busy - t * lead) / t

    return brentq(gap, 1e-9, 1.0, xtol=1e-15, rtol=1e-14)


def _invert(succ: int, coll: int, n: int) -> Optional[float]:
    if n < 2 or succ == 0 or coll == 0:
        return None
    return tau_from_ratio(succ / coll, n)


def estimate_tau_from_ratios(stats: SimStats) -> TauEstimates:
    """Per-state attempt probabilities from success/collision counts.

    A value is None when its state saw no collisions (or no successes), since
    the ratio then carries no information.
    """
    c = stats.counts.sum(axis=0)
    np_, ns = stats.config.params.n_primary, stats.config.params.n_secondary
    return TauEstimates(
        _invert(int(c[0, P_SUCC]), int(c[0, PP_COLL]), np_),
        _invert(int(c[1, P_SUCC]), int(c[1, PP_COLL]), np_),
        _invert(int(c[1, S_SUCC]), int(c[1, SS_COLL]), ns),
    )


# --------------------------------------------------------------------------
# the simulation loop

def run_simulation(config: SimConfig, trace: Optional[TextIO] = None) -> SimStats:
    params, timing, scheme = config.params, config.timing, config.scheme.scheme
    res = tick_resolution(timing)
    tk = lambda x: int(round(x * res))  # noqa: E731
    idle_len = res
    air_ps, air_ss = tk(timing.tp_suc), tk(timing.ts_suc)
    air_pc, air_sc = tk(timing.tp_col), tk(timing.ts_col)
    difs, eifs = tk(timing.difs), tk(timing.eifs)
    period, scan = tk(timing.period_T), tk(timing.scan_t)
    credit_extra = difs if timing.success_credit == "slot" else 0

    np_, ns = params.n_primary, params.n_secondary
    n = np_ + ns
    w0 = [params.w_primary] * np_ + [params.w_secondary] * ns
    mmax = [params.m_primary] * np_ + [params.m_secondary] * ns
    lam = [params.lambda_primary] * np_ + [params.lambda_secondary] * ns
    rng = random.Random(config.rng_seed)
    randrange = rng.randrange

    def empty_wait(node: int) -> int:
        # slots spent in the empty-queue state after a success, 0 w.p. lambda
        l = lam[node]
        if l == 1.0 or rng.random() < l:
            return 0
        u = 1.0 - rng.random()
        return max(1, math.ceil(math.log(u) / math.log1p(-l)))

    stage = [0] * n
    rem = [randrange(w0[k]) for k in range(n)]
    drawn = rem[:]               # back-off part of rem; anything above it is queue-empty time
    prim = range(np_)
    secs = range(np_, n)

    B = config.n_batches
    counts = np.zeros((B, 2, 6), dtype=np.int64)
    slot_time = np.zeros((B, 2, 6), dtype=np.int64)
    attempts = np.zeros((B, 2, 2), dtype=np.int64)
    credit_p = np.zeros(B, dtype=np.int64)
    credit_s = np.zeros(B, dtype=np.int64)
    scans_busy = np.zeros(B, dtype=np.int64)
    scans_total = np.zeros(B, dtype=np.int64)
    cnt = counts.tolist()
    stime = slot_time.tolist()
    att = attempts.tolist()
    cp = [0] * B
    cs = [0] * B
    sb = [0] * B
    st = [0] * B

    every = config.track_every
    hist = [[0] * params.window(i) for i in range(params.m_primary + 1)]
    hist_empty = [0]

    warm, total = config.measurement_warmup, config.run_length
    measured = total - warm
    scan_log: list[tuple[int, bool]] = []

    now = 0
    ts = 0                       # slots completed
    start_tick = None
    pending_scan = 0             # earliest scan window not yet finalized
    busy_windows: set[int] = set()
    last_idle = False            # no scan completed yet: secondaries wait
    truncated = 0

    def batch_of(slot: int) -> int:
        return (slot - warm) * B // measured

    def mark_busy(a: int, b: int) -> None:
        # windows [kT, kT+t) that intersect the primary airtime [a, b)
        k_lo = max(pending_scan, (a - scan) // period + 1)
        k_hi = -((-b) // period) - 1
        for k in range(k_lo, k_hi + 1):
            busy_windows.add(k)

    while ts < total:
        if ts == warm and start_tick is None:
            start_tick = now
        # finalize scans that ended
        while pending_scan * period + scan <= now:
            busy = pending_scan in busy_windows
            busy_windows.discard(pending_scan)
            if scheme is Scheme.SENSING:
                last_idle = not busy
                if ts >= warm:
                    b = batch_of(ts)
                    st[b] += 1
                    sb[b] += busy
            if trace is not None:
                scan_log.append((pending_scan * period, busy))
            pending_scan += 1

        phase = now % period
        if scheme is Scheme.COEXIST:
            sec_on = ns > 0
            boundary = None
        else:
            in_scan = phase < scan
            sec_on = ns > 0 and not in_scan and (scheme is Scheme.SILENT or last_idle)
            boundary = now - phase + (scan if in_scan else period)
        contenders = [*prim, *secs] if sec_on else prim
        state = 1 if sec_on else 0

        k = min(rem[i] for i in contenders)
        if k > 0:
            # a run of idle slots
            if ts < warm:
                limit = warm - ts
            else:
                limit = warm - (-(batch_of(ts) + 1) * measured // B) - ts
            steps = min(k, limit)
            if boundary is not None:
                steps = min(steps, -((now - boundary) // idle_len))
            for i in contenders:
                rem[i] -= steps
            if every and ts >= warm:
                _tally(hist[stage[0]], hist_empty, drawn[0], rem[0] + steps, ts, steps, every)
            if trace is not None:
                for u in range(steps):
                    trace.write(f"{(now + u * idle_len) / res:.{_digits(res)}f} {state + 1} idle -\n")
            if ts >= warm:
                b = batch_of(ts)
                cnt[b][state][IDLE] += steps
                stime[b][state][IDLE] += steps * idle_len
            now += steps * idle_len
            ts += steps
            continue

        tx_p = [i for i in prim if rem[i] == 0]
        tx_s = [i for i in secs if rem[i] == 0] if sec_on else []
        for i in contenders:
            if rem[i] > 0:
                rem[i] -= 1
        if every and ts >= warm:
            before = 0 if tx_p and tx_p[0] == 0 else rem[0] + 1
            _tally(hist[stage[0]], hist_empty, drawn[0], before, ts, 1, every)

        n_p, n_s = len(tx_p), len(tx_s)
        sec_air = 0
        cut = False
        if n_s:
            # a lone transmitter sends a full packet; a colliding one the collision airtime
            full = air_ss if n_p + n_s == 1 else air_sc
            sec_air = full if boundary is None else min(full, boundary - now)
            cut = sec_air < full
        if n_p == 1 and n_s == 0:
            kind, air, gap = P_SUCC, air_ps, difs
        elif n_p == 0 and n_s == 1:
            kind, air, gap = S_SUCC, sec_air, difs
        elif n_s == 0:
            kind, air, gap = PP_COLL, air_pc, eifs
        elif n_p == 0:
            kind, air, gap = SS_COLL, sec_air, eifs
        else:
            kind, air, gap = PS_COLL, max(air_pc, sec_air), eifs
        duration = air + gap
        if n_p:
            mark_busy(now, now + (air_ps if kind == P_SUCC else air_pc))

        if ts >= warm:
            b = batch_of(ts)
            cnt[b][state][kind] += 1
            att[b][state][0] += n_p
            att[b][state][1] += n_s
            stime[b][state][kind] += duration
            if kind == P_SUCC:
                cp[b] += air_ps + credit_extra
            elif kind == S_SUCC and (config.count_partial or not cut):
                cs[b] += sec_air + credit_extra
        if cut:
            truncated += 1
        if trace is not None:
            ids = ",".join(map(str, tx_p + tx_s))
            trace.write(f"{now / res:.{_digits(res)}f} {state + 1} {SLOT_TYPES[kind]} {ids}\n")

        success = kind in (P_SUCC, S_SUCC)
        for i in tx_p + tx_s:
            if success:
                stage[i] = 0
                drawn[i] = randrange(w0[i])
                rem[i] = empty_wait(i) + drawn[i]
            else:
                stage[i] = min(stage[i] + 1, mmax[i])
                rem[i] = drawn[i] = randrange(w0[i] << stage[i])
        now += duration
        ts += 1

    stats = SimStats(
        config, res,
        np.array(cnt, dtype=np.int64), np.array(stime, dtype=np.int64),
        np.array(att, dtype=np.int64),
        np.array(cp, dtype=np.int64), np.array(cs, dtype=np.int64),
        np.array(sb, dtype=np.int64), np.array(st, dtype=np.int64),
        start_tick=start_tick, end_tick=now, truncated=truncated, scan_log=scan_log,
        final_nodes=tuple(
            NodeState("primary" if i < np_ else "secondary", stage[i], min(rem[i], drawn[i]),
                      rem[i] <= drawn[i], i >= np_ and not sec_on)
            for i in range(n)),
    )
    if every:
        stats.node_states = StationaryDistribution(
            float(hist_empty[0]), tuple(np.array(h, dtype=float) for h in hist))
    return stats


def _digits(res: int) -> int:
    return len(str(res)) - 1


def _tally(counts, empty, drawn, rem_before, ts, steps, every) -> None:
    # node 0 counts down from rem_before over slots ts .. ts+steps-1; record
    # its state at the slots that are multiples of `every`. While the count
    # exceeds the drawn back-off the node sits in the empty-queue state.
    for u in range(-(-ts // every) * every, ts + steps, every):
        r = rem_before - (u - ts)
        if r > drawn:
            empty[0] += 1
        else:
            counts[r] += 1


# --------------------------------------------------------------------------
# comparison with the closed-form model

METRICS = ("tau_p1", "tau_p2", "tau_s2", "alpha_c", "pt", "st")
COMPARISON_COLUMNS = ("metric", "simulated", "std_error", "analytic", "abs_error",
                      "rel_error", "z", "passed")


@dataclass(frozen=True)
class Tolerance:
    """A metric passes when it lies within ``n_se`` standard errors of the
    analytic value and, if listed in ``rel``, within that relative error."""

    n_se: float = 3.0
    rel: tuple[tuple[str, float], ...] = (("pt", 0.05),)

    def rel_for(self, metric: str) -> Optional[float]:
        return dict(self.rel).get(metric)


@dataclass(frozen=True)
class MetricComparison:
    metric: str
    simulated: Optional[float]
    std_error: Optional[float]
    analytic: Optional[float]
    passed: Optional[bool]

    @property
    def abs_error(self) -> Optional[float]:
        if self.simulated is None or self.analytic is None:
            return None
        return self.simulated - self.analytic

    @property
    def rel_error(self) -> Optional[float]:
        err = self.abs_error
        return None if err is None or self.analytic == 0 else err / abs(self.analytic)

    @property
    def z(self) -> Optional[float]:
        err = self.abs_error
        return None if err is None or not self.std_error else err / self.std_error

    def row(self) -> list:
        cell = lambda x: "" if x is None else repr(float(x))  # noqa: E731
        flag = "" if self.passed is None else int(self.passed)
        return [self.metric, cell(self.simulated), cell(self.std_error), cell(self.analytic),
                cell(self.abs_error), cell(self.rel_error), cell(self.z), flag]


@dataclass(frozen=True)
class DiscrepancyReport:
    rows: tuple[MetricComparison, ...]

    @property
    def passed(self) -> bool:
        """True when no assessed metric failed (unassessed ones are skipped)."""
        return all(r.passed is not False for r in self.rows)

    def __getitem__(self, metric: str) -> MetricComparison:
        for r in self.rows:
            if r.metric == metric:
                return r
        raise KeyError(metric)

    def write_csv(self, out: TextIO) -> None:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(COMPARISON_COLUMNS)
        for r in self.rows:
            w.writerow(r.row())


def analytic_metrics(analysis) -> dict[str, Optional[float]]:
    """The closed-form counterparts of :meth:`SimStats.estimates`."""
    sensing = analysis.report.scheme.scheme is Scheme.SENSING
    ns = analysis.params.n_secondary
    return {
        "tau_p1": analysis.state1.tau_p1,
        "tau_p2": analysis.state2.tau_p2,
        "tau_s2": analysis.state2.tau_s2 if ns else None,
        "alpha_c": analysis.scan.alpha_c if sensing else None,
        "pt": analysis.report.pt,
        "st": analysis.report.st,
    }


def compare_estimates(observed: Mapping[str, tuple[Optional[float], Optional[float]]],
                      expected: Mapping[str, Optional[float]],
                      tolerance: Tolerance = Tolerance()) -> DiscrepancyReport:
    """Per-metric errors of ``observed`` (value, standard error) against ``expected``.

    A metric with no observed or expected value is reported but not assessed.
    """
    rows = []
    for metric in METRICS:
        if metric not in observed and metric not in expected:
            continue
        value, se = observed.get(metric, (None, None))
        target = expected.get(metric)
        passed = None
        if value is not None and target is not None:
            err = abs(value - target)
            checks = []
            if se is not None:
                checks.append(err <= tolerance.n_se * se)
            elif err == 0.0:
                checks.append(True)
            rel = tolerance.rel_for(metric)
            if rel is not None:
                checks.append(err <= rel * abs(target))
            passed = all(checks) if checks else None
        rows.append(MetricComparison(metric, value, se, target, passed))
    return DiscrepancyReport(tuple(rows))


def compare_to_analytical(stats: SimStats, analysis,
                          tolerance: Tolerance = Tolerance()) -> DiscrepancyReport:
    cfg = stats.config
    if (cfg.params, cfg.timing) != (analysis.params, analysis.timing) \
            or cfg.scheme != analysis.report.scheme:
        raise ValueError("simulation and analysis describe different scenarios")
    return compare_estimates(stats.batch_means(), analytic_metrics(analysis), tolerance)


# --------------------------------------------------------------------------
# per-run records

STATS_COLUMNS = ("replication", "seed", "slots", "time_slots", "tau_p1", "tau_p2", "tau_s2",
                 "alpha_c", "pt", "st", "scans", "busy_scans", "truncated")


def stats_row(stats: SimStats, replication: int) -> list:
    tot = stats.totals()
    est = tot.estimates()
    cell = lambda x: "" if x is None else repr(float(x))  # noqa: E731
    return [replication, stats.config.rng_seed, int(tot.counts.sum()),
            repr(tot.total_time / stats.resolution),
            *(cell(est[k]) for k in METRICS),
            int(tot.scans_total.sum()), int(tot.scans_busy.sum()), stats.truncated]


@dataclass(frozen=True)
class NodeState:
    """Back-off state of one node at the end of a run."""

    role: str
    stage: int
    counter: int
    queue_nonempty: bool
    frozen: bool = False
