"""Command-line front end: solve, sweep, optimize, simulate, validate.

Scenario values come from a preset, then an optional flat YAML config, then
``--key value`` flags, each layer overriding the previous one. Tables are
written as CSV with a fixed column order.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import replace
from typing import Any, Iterable, Optional, Sequence

import numpy as np
import yaml

from .fixed_point import ConvergenceError
from .optimize import (
    DEFAULT_BETA_GRID,
    DEFAULT_T_GRID_US,
    DEFAULT_WS_GRID,
    OptimizationProblem,
    optimize,
)
from .params import (
    CONFIG_KEYS,
    SIM_KEYS,
    Scenario,
    ValidationError,
    load_config,
    preset,
    scenario_from_mapping,
)
from .sim import (
    COMPARISON_COLUMNS,
    STATS_COLUMNS,
    SimConfig,
    Tolerance,
    analytic_metrics,
    combine_replications,
    compare_estimates,
    run_simulation,
    stats_row,
)
from .throughput import Analysis, analyze

log = logging.getLogger("coexdcf")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_BAD_INPUT, EXIT_NO_CONVERGENCE = 0, 1, 2, 3

SWEEP_VARIABLES = ("n_primary", "n_secondary", "scan_t_us", "w_secondary", "beta",
                   "lambda_primary", "lambda_secondary")

SOLUTION_COLUMNS = (
    "tau_p1", "p_p1", "tau_p2", "tau_s2", "p_p2", "p_s2",
    "p_idle", "p_succ", "p_coll", "p_slot",
    "q_ii", "q_si", "q_is", "q_ci", "q_ic", "q_cc", "q_slot",
    "alpha_b", "alpha_i", "alpha_c", "pt", "st", "st_conditional", "baseline_pt",
)
OPTIMUM_COLUMNS = ("scheme", "t_us", "w_s", "beta", "pt", "st", "baseline_pt", "pt_floor",
                   "feasible")
VALIDATE_COLUMNS = ("scenario",) + COMPARISON_COLUMNS


# --------------------------------------------------------------------------
# scenario assembly

def _scalar(text: str) -> Any:
    value = yaml.safe_load(text)
    if isinstance(value, (dict, list)):
        raise ValidationError(f"expected a scalar, got {text!r}")
    return value


def gather(args: argparse.Namespace) -> dict[str, Any]:
    """Preset, then config file, then explicit flags."""
    mapping = preset(args.preset)
    if args.config:
        mapping.update(load_config(args.config))
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            mapping[key] = _scalar(value)
    if getattr(args, "seed_flag", None) is not None:
        mapping["seed"] = args.seed_flag
    return mapping


def split_mapping(mapping: dict[str, Any]) -> tuple[Scenario, dict[str, Any]]:
    sim = {k: mapping[k] for k in SIM_KEYS if k in mapping}
    rest = {k: v for k, v in mapping.items() if k not in SIM_KEYS}
    return scenario_from_mapping(rest), sim


def sim_config(scenario: Scenario, opts: dict[str, Any], seed: Optional[int] = None) -> SimConfig:
    count_partial = opts.get("count_partial", True)
    if isinstance(count_partial, str):
        count_partial = count_partial.lower() in ("1", "true", "yes")
    return SimConfig(
        scenario.params, scenario.timing, scenario.scheme,
        run_length=int(opts.get("run_length", 500_000)),
        rng_seed=int(opts.get("seed", 0)) if seed is None else seed,
        measurement_warmup=None if opts.get("warmup") is None else int(opts["warmup"]),
        count_partial=bool(count_partial),
    )


# --------------------------------------------------------------------------
# output helpers

def _cell(x: Any) -> Any:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def solution_row(a: Analysis) -> list:
    s1, s2, d1, d2, sc, rep = a.state1, a.state2, a.slots1, a.slots2, a.scan, a.report
    values = (
        s1.tau_p1, s1.p_p1, s2.tau_p2, s2.tau_s2, s2.p_p2, s2.p_s2,
        d1.p_idle, d1.p_succ, d1.p_coll, d1.p_slot,
        d2.q_ii, d2.q_si, d2.q_is, d2.q_ci, d2.q_ic, d2.q_cc, d2.q_slot,
        sc.alpha_b, sc.alpha_i, sc.alpha_c, rep.pt, rep.st, rep.st_conditional, rep.baseline_pt,
    )
    return [_cell(v) for v in values]


class _Output:
    """File or stdout, as a context manager."""

    def __init__(self, path: Optional[str]):
        self.path = path

    def __enter__(self):
        if self.path in (None, "-"):
            return sys.stdout
        self.fh = open(self.path, "w", encoding="utf-8", newline="")
        return self.fh

    def __exit__(self, *exc):
        if self.path not in (None, "-"):
            self.fh.close()


def _writer(fh) -> Any:
    return csv.writer(fh, lineterminator="\n")


def _print_text(a: Analysis, out) -> None:
    p, s1, s2, sc, rep = a.params, a.state1, a.state2, a.scan, a.report
    out.write(f"scenario: N_p={p.n_primary} N_s={p.n_secondary} W_p={p.w_primary} "
              f"W_s={p.w_secondary} m={p.m_primary}/{p.m_secondary} "
              f"lambda={p.lambda_primary}/{p.lambda_secondary} "
              f"t={a.timing.to_us('scan_t'):g}us scheme={rep.scheme.scheme.value}"
              f" beta={rep.scheme.beta:g}\n")
    out.write(f"state 1: tau_p1={s1.tau_p1:.6f} p_p1={s1.p_p1:.6f}\n")
    if p.n_secondary == 0:
        out.write("state 2: degenerate (no secondary nodes), equal to state 1\n")
    else:
        out.write(f"state 2: tau_p2={s2.tau_p2:.6f} tau_s2={s2.tau_s2:.6f} "
                  f"p_p2={s2.p_p2:.6f} p_s2={s2.p_s2:.6f}\n")
    out.write(f"scan: alpha_b={sc.alpha_b:.6f} alpha_i={sc.alpha_i:.6f} alpha_c={sc.alpha_c:.6f}\n")
    out.write(f"throughput: PT={rep.pt:.6f} ST={rep.st:.6f} ST_conditional={rep.st_conditional:.6f} "
              f"PT_alone={rep.baseline_pt:.6f}\n")


# --------------------------------------------------------------------------
# commands

def cmd_solve(args: argparse.Namespace) -> int:
    scenario, _ = split_mapping(gather(args))
    a = analyze(scenario.params, scenario.timing, scenario.scheme)
    with _Output(args.out) as out:
        if args.csv:
            w = _writer(out)
            w.writerow(SOLUTION_COLUMNS)
            w.writerow(solution_row(a))
        else:
            _print_text(a, out)
    return EXIT_OK


def parse_values(text: str) -> list[float]:
    """``a,b,c`` or ``start:stop:step`` (stop inclusive)."""
    text = text.strip()
    if not text:
        return []
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValidationError(f"range must be start:stop:step with step > 0, got {text!r}")
        start, stop, step = parts
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [start + k * step for k in range(max(n, 0))]
    return [float(x) for x in text.split(",") if x.strip()]


def _sweep_value(variable: str, value: float) -> Any:
    if variable in ("n_primary", "n_secondary", "w_secondary"):
        if not float(value).is_integer():
            raise ValidationError(f"{variable} must be an integer, got {value}")
        return int(value)
    return float(value)


def sweep_rows(base: dict[str, Any], variable: str, values: Sequence[float]) -> Iterable[list]:
    if variable not in SWEEP_VARIABLES:
        raise ValidationError(f"cannot sweep {variable!r}; choose from {SWEEP_VARIABLES}")
    if not values:
        raise ValidationError("sweep value list is empty")
    scenarios = []
    for v in values:
        mapping = {**base, variable: _sweep_value(variable, v)}
        scenarios.append((v, split_mapping(mapping)[0]))
    for v, sc in scenarios:
        a = analyze(sc.params, sc.timing, sc.scheme)
        yield [variable, _cell(_sweep_value(variable, v)), *solution_row(a)]


def cmd_sweep(args: argparse.Namespace) -> int:
    rows = list(sweep_rows(gather(args), args.variable, parse_values(args.values)))
    with _Output(args.out) as out:
        w = _writer(out)
        w.writerow(("variable", "value") + SOLUTION_COLUMNS)
        w.writerows(rows)
    return EXIT_OK


def cmd_optimize(args: argparse.Namespace) -> int:
    scenario, _ = split_mapping(gather(args))
    problem = OptimizationProblem(
        scenario.scheme.scheme, scenario.params, scenario.timing, loss_cap=args.loss_cap,
        t_grid_us=parse_values(args.t_grid) if args.t_grid else DEFAULT_T_GRID_US,
        w_s_grid=[int(w) for w in parse_values(args.ws_grid)] if args.ws_grid else DEFAULT_WS_GRID,
        beta_grid=parse_values(args.beta_grid) if args.beta_grid else DEFAULT_BETA_GRID,
    )
    res = optimize(problem)
    with _Output(args.out) as out:
        w = _writer(out)
        w.writerow(OPTIMUM_COLUMNS)
        w.writerow([res.scheme.value, _cell(res.t_us), res.w_s, _cell(res.beta), _cell(res.pt),
                    _cell(res.st), _cell(res.baseline_pt),
                    _cell((1.0 - problem.loss_cap) * res.baseline_pt), int(res.feasible)])
    if args.grid_out:
        with _Output(args.grid_out) as out:
            res.write_grid(out)
    if not res.feasible:
        log.warning("no grid point keeps the primary above the floor; reporting the max-PT point")
    return EXIT_OK


def simulate_replications(cfg: SimConfig, replications: int, trace_path: Optional[str] = None):
    runs = []
    for r in range(replications):
        c = replace(cfg, rng_seed=cfg.rng_seed + r)
        if trace_path and r == 0:
            with open(trace_path, "w", encoding="utf-8") as fh:
                runs.append(run_simulation(c, trace=fh))
        else:
            runs.append(run_simulation(c))
    return runs


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.replications < 1:
        raise ValidationError(f"replications must be >= 1, got {args.replications}")
    scenario, opts = split_mapping(gather(args))
    cfg = sim_config(scenario, opts)
    runs = simulate_replications(cfg, args.replications, args.trace)

    with _Output(args.out) as out:
        w = _writer(out)
        w.writerow(STATS_COLUMNS)
        for r, stats in enumerate(runs):
            w.writerow(stats_row(stats, r))

    merged = combine_replications(runs) if len(runs) > 1 else runs[0]
    report = compare_estimates(merged.batch_means(),
                               analytic_metrics(analyze(scenario.params, scenario.timing,
                                                        scenario.scheme)),
                               Tolerance(args.n_se))
    if args.summary:
        with _Output(args.summary) as out:
            report.write_csv(out)
    else:
        if args.out in (None, "-"):
            sys.stdout.write("\n")
        report.write_csv(sys.stdout)
    return EXIT_OK


def load_scenarios(path: str) -> list[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        return []
    if isinstance(data, dict) and "scenarios" in data:
        data = data["scenarios"]
    if not isinstance(data, list) or not all(isinstance(d, dict) for d in data):
        raise ValidationError(f"{path}: expected a list of flat scenario mappings")
    return data


def validate_scenarios(base: dict[str, Any], scenarios: Sequence[dict[str, Any]],
                       replications: int, tolerance: Tolerance,
                       pt_bias: float = 0.0) -> tuple[list[list], bool]:
    """Simulate each scenario and compare with the closed form.

    ``pt_bias`` scales the analytic PT by (1 + pt_bias): a negative control
    that a working comparison must flag.
    """
    rows, ok = [], True
    for k, entry in enumerate(scenarios):
        entry = dict(entry)
        name = str(entry.pop("name", f"scenario-{k}"))
        reps = int(entry.pop("replications", replications))
        scenario, opts = split_mapping({**base, **entry})
        runs = simulate_replications(sim_config(scenario, opts), reps)
        merged = combine_replications(runs) if reps > 1 else runs[0]
        expected = analytic_metrics(analyze(scenario.params, scenario.timing, scenario.scheme))
        expected["pt"] *= 1.0 + pt_bias
        report = compare_estimates(merged.batch_means(), expected, tolerance)
        ok &= report.passed
        rows += [[name, *r.row()] for r in report.rows]
    return rows, ok


def cmd_validate(args: argparse.Namespace) -> int:
    scenarios = load_scenarios(args.scenarios)
    rows, ok = validate_scenarios(gather(args), scenarios, args.replications,
                                  Tolerance(args.n_se, (("pt", args.pt_rel_tol),)),
                                  args.inject_pt_bias)
    with _Output(args.out) as out:
        w = _writer(out)
        w.writerow(VALIDATE_COLUMNS)
        w.writerows(rows)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# --------------------------------------------------------------------------
# parser

def _scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", default="paper-2011", help="named parameter set (default %(default)s)")
    p.add_argument("--config", help="flat YAML file of config keys")
    g = p.add_argument_group("config keys (durations in microseconds)")
    for key in CONFIG_KEYS:
        if key == "seed":
            continue
        g.add_argument(f"--{key}", metavar="VALUE")
    p.add_argument("--seed", dest="seed_flag", type=int, help="RNG seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coexdcf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one scenario")
    _scenario_flags(p)
    p.add_argument("--csv", action="store_true", help="one CSV row instead of text")
    p.add_argument("--out", help="output file (default stdout)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="solve a scenario across one variable")
    _scenario_flags(p)
    p.add_argument("--variable", required=True, choices=SWEEP_VARIABLES)
    p.add_argument("--values", required=True, help="a,b,c or start:stop:step")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimize", help="grid-search the secondary design")
    _scenario_flags(p)
    p.add_argument("--loss-cap", type=float, default=0.10, help="allowed primary loss fraction")
    p.add_argument("--t-grid", help="scan durations in us (default 0:600:5)")
    p.add_argument("--ws-grid", help="secondary windows (default 4:512:1)")
    p.add_argument("--beta-grid", help="active fractions (default 0.05:1:0.05)")
    p.add_argument("--out", help="optimum row (default stdout)")
    p.add_argument("--grid-out", help="write every evaluated grid point here")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("simulate", help="run seeded replications of the simulator")
    _scenario_flags(p)
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--n-se", type=float, default=3.0, help="standard errors allowed")
    p.add_argument("--out", help="per-replication CSV (default stdout)")
    p.add_argument("--summary", help="aggregate comparison CSV")
    p.add_argument("--trace", help="slot-level trace of the first replication")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="simulation against closed form, pass/fail per metric")
    _scenario_flags(p)
    p.add_argument("--scenarios", required=True, help="YAML list of scenario overrides")
    p.add_argument("--replications", type=int, default=10)
    p.add_argument("--n-se", type=float, default=3.0)
    p.add_argument("--pt-rel-tol", type=float, default=0.05)
    p.add_argument("--inject-pt-bias", type=float, default=0.0,
                   help="scale analytic PT by 1+x (negative control)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValidationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
