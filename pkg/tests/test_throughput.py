from dataclasses import replace

import numpy as np
import pytest

from coexdcf.params import NetworkParams, Scheme, SchemeConfig, scenario_from_mapping
from coexdcf.scan import ScanOutcomeModel
from coexdcf.throughput import (
    ThroughputReport,
    analyze,
    state1_throughput,
    throughput_coexist,
    throughput_sensing,
    throughput_silence,
)


def test_reference_scenario(base):
    rep = analyze(base.params, base.timing).report
    assert rep.pt == pytest.approx(0.688982, abs=1e-4)
    assert rep.st_conditional == pytest.approx(0.521148, abs=1e-4)
    assert rep.st == pytest.approx((1 - rep.alpha_c) * rep.st_conditional, rel=1e-15)


def test_always_busy_scan_gives_primary_alone(base):
    a = analyze(base.params, base.timing)
    rep = throughput_sensing(a.slots1, a.slots2, ScanOutcomeModel(1.0, 1.0, 1.0), base.timing)
    assert rep.pt == pytest.approx(state1_throughput(a.slots1, base.timing), rel=1e-15)
    assert rep.st == 0.0


def test_zero_beta_gives_primary_alone(base):
    a = analyze(base.params, base.timing)
    rep = throughput_silence(a.slots1, a.slots2, 0.0, base.timing)
    assert rep.pt == pytest.approx(rep.baseline_pt, rel=1e-15)
    assert rep.st == 0.0


def test_full_beta_is_coexistence(base):
    a = analyze(base.params, base.timing)
    sil = throughput_silence(a.slots1, a.slots2, 1.0, base.timing)
    co = throughput_coexist(a.slots1, a.slots2, base.timing)
    assert (sil.pt, sil.st, sil.st_conditional, sil.baseline_pt) == \
        (co.pt, co.st, co.st_conditional, co.baseline_pt)


def test_no_secondaries_leave_primary_untouched(base):
    params = replace(base.params, n_secondary=0)
    rep = analyze(params, base.timing, SchemeConfig(Scheme.COEXIST)).report
    assert rep.pt == rep.baseline_pt
    assert rep.st == 0.0


def test_silence_table_design():
    sc = scenario_from_mapping({"n_primary": 16, "n_secondary": 4, "w_secondary": 54})
    rep = analyze(sc.params, sc.timing, SchemeConfig(Scheme.SILENT, 0.7)).report
    assert rep.st == pytest.approx(0.065, abs=5e-3)
    assert rep.pt >= 0.682


@pytest.mark.parametrize("n_secondary, w_s", [(4, 80), (16, 314)])
def test_coexist_table_design(n_secondary, w_s):
    sc = scenario_from_mapping({"n_primary": 16, "n_secondary": n_secondary, "w_secondary": w_s})
    rep = analyze(sc.params, sc.timing, SchemeConfig(Scheme.COEXIST)).report
    assert rep.st == pytest.approx(0.065, abs=5e-3)
    assert rep.pt >= 0.9 * rep.baseline_pt


def test_sensing_monotone_in_scan_length():
    sc = scenario_from_mapping({"n_primary": 16, "n_secondary": 16})
    pts, sts = [], []
    for t_us in range(20, 605, 5):
        rep = analyze(sc.params, replace(sc.timing, scan_t=t_us / 20.0)).report
        pts.append(rep.pt)
        sts.append(rep.st)
    assert np.all(np.diff(pts) >= -1e-12)
    assert np.all(np.diff(sts) <= 1e-12)


@pytest.mark.parametrize("preset_name", ["paper-2011", "paper-2011-nominal"])
@pytest.mark.parametrize("scheme", [SchemeConfig(Scheme.SENSING), SchemeConfig(Scheme.SILENT, 0.6),
                                    SchemeConfig(Scheme.COEXIST)])
def test_time_budget_closes(preset_name, scheme):
    from coexdcf.params import preset
    sc = scenario_from_mapping({**preset(preset_name), "n_primary": 9, "n_secondary": 5,
                                "w_secondary": 48, "scan_t_us": 70})
    a = analyze(sc.params, sc.timing, scheme)
    t, d1, d2, rep = sc.timing, a.slots1, a.slots2, a.report
    extra_p = t.success_slot_p - t.credit_p      # part of a success slot not credited
    extra_s = t.success_slot_s - t.credit_s
    state1 = d1.p_slot * (d1.p_idle + d1.p_succ * extra_p + d1.p_coll * t.collision_slot_p)
    state2 = d2.q_slot * (d2.q_ii + d2.q_si * extra_p + d2.q_is * extra_s
                          + d2.q_ci * t.collision_slot_p + d2.q_ic * t.collision_slot_s
                          + d2.q_cc * t.collision_slot_ps)
    # credited shares within each state
    assert state1 + d1.p_slot * d1.p_succ * t.credit_p == pytest.approx(1.0, abs=1e-9)
    assert state2 + d2.q_slot * (d2.q_si * t.credit_p + d2.q_is * t.credit_s) == \
        pytest.approx(1.0, abs=1e-9)
    weight = {Scheme.SENSING: 1.0 - a.scan.alpha_c, Scheme.SILENT: scheme.beta,
              Scheme.COEXIST: 1.0}[scheme.scheme]
    other = (1.0 - weight) * state1 + weight * state2
    assert rep.pt + rep.st + other == pytest.approx(1.0, abs=1e-9)


def test_report_rejects_impossible_shares():
    with pytest.raises(ValueError):
        ThroughputReport(0.7, 0.4, 0.4, 0.8, SchemeConfig())


def test_analyze_validates():
    from coexdcf.params import ValidationError
    with pytest.raises(ValidationError):
        analyze(NetworkParams(n_primary=0), scenario_from_mapping({}).timing)
