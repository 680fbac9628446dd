import csv
import io
from dataclasses import replace

import pytest

from coexdcf.optimize import (
    GRID_COLUMNS,
    ROBUSTNESS_COLUMNS,
    OptimizationProblem,
    apply_design,
    optimize,
    optimize_coexist,
    optimize_sensing,
    optimize_silence,
    overestimate,
    robustness_sweep,
    write_robustness_csv,
)
from coexdcf.params import Scheme, SchemeConfig
from coexdcf.throughput import analyze

from conftest import scenario

SMALL_T = (0.0, 10.0, 20.0, 50.0, 100.0)
SMALL_WS = tuple(range(4, 200, 3))
SMALL_BETA = (0.25, 0.5, 0.75, 1.0)


def problem(scheme, n_p=16, n_s=4, **kw):
    sc = scenario(n_primary=n_p, n_secondary=n_s)
    kw.setdefault("t_grid_us", SMALL_T)
    kw.setdefault("w_s_grid", SMALL_WS)
    kw.setdefault("beta_grid", SMALL_BETA)
    return OptimizationProblem(scheme, sc.params, sc.timing, **kw)


@pytest.mark.parametrize("scheme", list(Scheme))
def test_reported_optimum_reevaluates_feasible(scheme):
    prob = problem(scheme)
    res = optimize(prob)
    assert res.feasible
    p, tm, sc = apply_design(res, prob.params, prob.timing)
    rep = analyze(p, tm, sc).report
    assert rep.pt == pytest.approx(res.pt, rel=1e-12)
    assert rep.st == pytest.approx(res.st, rel=1e-12)
    assert rep.pt >= (1 - prob.loss_cap) * rep.baseline_pt
    row = [g for g in res.grid if (g.t_us, g.w_s, g.beta) == (res.t_us, res.w_s, res.beta)]
    assert len(row) == 1 and row[0].st == res.st and row[0].feasible
    assert res.st == max(g.st for g in res.grid if g.feasible)


@pytest.mark.parametrize("scheme", list(Scheme))
def test_larger_grid_never_worse(scheme):
    small = optimize(problem(scheme, t_grid_us=SMALL_T[:3], w_s_grid=SMALL_WS[::4],
                             beta_grid=SMALL_BETA[:2]))
    large = optimize(problem(scheme))
    assert large.st >= small.st


def test_unit_beta_grid_is_coexistence():
    sil = optimize_silence(problem(Scheme.SILENT, beta_grid=(1.0,)))
    co = optimize_coexist(problem(Scheme.COEXIST))
    assert (sil.w_s, sil.st, sil.pt, sil.feasible) == (co.w_s, co.st, co.pt, co.feasible)
    assert [(g.w_s, g.pt, g.st) for g in sil.grid] == [(g.w_s, g.pt, g.st) for g in co.grid]


def test_loose_cap_is_unconstrained():
    res = optimize_sensing(problem(Scheme.SENSING, loss_cap=0.999999, t_grid_us=(0.0,)))
    assert all(g.feasible for g in res.grid)
    # at t = 0 the scan never sees the primary, so only the State-2 share matters
    best = max(res.grid, key=lambda g: (g.st, -g.w_s))
    assert (res.w_s, res.st) == (best.w_s, best.st)
    assert res.t_us == 0.0


def test_no_secondaries_trivial():
    res = optimize_coexist(problem(Scheme.COEXIST, n_s=0))
    assert res.feasible and res.st == 0.0
    assert res.w_s == min(SMALL_WS)


def test_infeasible_grid_reports_best_effort():
    res = optimize_coexist(problem(Scheme.COEXIST, loss_cap=0.001, w_s_grid=(4, 8)))
    assert not res.feasible
    assert res.pt == max(g.pt for g in res.grid)


def test_problem_validation():
    with pytest.raises(ValueError):
        problem(Scheme.SENSING, loss_cap=1.0)
    with pytest.raises(ValueError):
        problem(Scheme.SENSING, w_s_grid=())
    with pytest.raises(ValueError):
        problem(Scheme.SILENT, beta_grid=(0.0,))


# default grids, checked against reference optima by achieved ST
TABLE_ROWS = [
    (Scheme.SENSING, 16, 4, 0.064),
    (Scheme.SENSING, 32, 8, 0.054),
    (Scheme.SILENT, 16, 8, 0.065),
    (Scheme.COEXIST, 16, 16, 0.065),
    (Scheme.COEXIST, 32, 4, 0.056),
]


@pytest.mark.parametrize("scheme, n_p, n_s, st", TABLE_ROWS)
def test_table_optima(scheme, n_p, n_s, st):
    sc = scenario(n_primary=n_p, n_secondary=n_s)
    res = optimize(OptimizationProblem(scheme, sc.params, sc.timing))
    assert res.feasible
    assert res.st == pytest.approx(st, abs=5e-3)
    assert res.pt >= 0.9 * res.baseline_pt


def test_sensing_table_design_parameters():
    sc = scenario(n_primary=16, n_secondary=4)
    res = optimize_sensing(OptimizationProblem(Scheme.SENSING, sc.params, sc.timing))
    assert (res.t_us, res.w_s) == (10.0, 11)


def test_grid_csv_columns():
    res = optimize(problem(Scheme.SILENT, w_s_grid=(8, 16)))
    buf = io.StringIO()
    res.write_grid(buf)
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    assert tuple(rows[0]) == GRID_COLUMNS
    assert len(rows) == 1 + 2 * len(SMALL_BETA)
    assert rows[1][1] == ""          # no t for silence


def test_overestimate_rounds():
    sc = scenario(n_primary=10)
    assert overestimate(sc.params, 0.3).n_primary == 13
    assert overestimate(sc.params, -0.99).n_primary == 1


@pytest.mark.parametrize("n_p", [8, 12, 16, 20, 24])
def test_overestimated_primary_costs_under_five_percent(n_p):
    prob = problem(Scheme.SENSING, t_grid_us=tuple(range(0, 105, 5)), w_s_grid=tuple(range(4, 64)))
    actual = replace(prob.params, n_primary=n_p)
    row = robustness_sweep(prob, [(actual, overestimate(actual, 0.3))], (Scheme.SENSING,))[0]
    assert 0.85 < row.pt_fraction < 0.90


def test_matching_assumption_meets_cap():
    prob = problem(Scheme.SENSING)
    rows = robustness_sweep(prob, [(prob.params, prob.params)])
    assert [r.scheme for r in rows] == ["sensing", "coexist", "silent"]
    for r in rows:
        direct = optimize(replace(prob, scheme=Scheme(r.scheme)))
        assert r.pt == pytest.approx(direct.pt, rel=1e-12)
        assert r.st == pytest.approx(direct.st, rel=1e-12)
        assert r.pt >= r.design_floor
    buf = io.StringIO()
    write_robustness_csv(rows, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].split(",") == list(ROBUSTNESS_COLUMNS) and len(lines) == 4


def test_apply_design_sets_scheme():
    prob = problem(Scheme.SILENT)
    res = optimize(prob)
    _, _, sc = apply_design(res, prob.params, prob.timing)
    assert sc == SchemeConfig(Scheme.SILENT, res.beta)
