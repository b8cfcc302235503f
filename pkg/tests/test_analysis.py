import math

import numpy as np
import pytest

from jpspf.analysis import (
    AnalysisError,
    analytic_gain,
    gain_curves,
    gain_curves_csv,
    gain_genie,
    gain_probe_all,
    pf_utility,
    probe_count_distribution,
    theory_report,
    total_variation,
)
from jpspf.channel import RateModel
from jpspf.stopping import build_threshold_table

from oracles import direct_stopping_gain

EXP = RateModel.exponential()
UNI = RateModel.uniform()
FOUR = RateModel.discrete([0.2, 0.6, 1.2, 2.0], [0.25] * 4)


def harmonic(K):
    return sum(1 / k for k in range(1, K + 1))


def test_probe_law_exponential():
    p = probe_count_distribution(EXP, 0.1, 20)
    v = build_threshold_table(EXP, 0.1, 20).thresholds
    assert len(p) == 10
    assert sum(p) == pytest.approx(1.0, abs=1e-12)
    assert p[0] == pytest.approx(math.exp(-v[1]), abs=1e-12)
    assert p[0] == pytest.approx(0.2006, abs=1e-3)
    assert all(x >= 0 for x in p)
    assert probe_count_distribution(EXP, 0.1, 1) == [1.0]


@pytest.mark.parametrize("model", [EXP, UNI, FOUR], ids=lambda m: m.kind)
@pytest.mark.parametrize("K,beta", [(20, 0.1), (6, 0.15), (30, 0.05)])
def test_probe_law_matches_direct_simulation(model, K, beta):
    v = build_threshold_table(model, beta, K).thresholds
    _, _, freq = direct_stopping_gain(model.sample, v, beta, 400_000, np.random.default_rng(3))
    assert total_variation(probe_count_distribution(model, beta, K), freq) < 0.005


def test_gain_trivial_cases():
    k, g, se = analytic_gain(EXP, 0.1, 1, mc_samples=10_000)
    assert g == pytest.approx(0.9, abs=1e-3) and k == g
    _, g, _ = analytic_gain(RateModel.degenerate(), 0.1, 20, mc_samples=1000)
    assert g == pytest.approx(0.9, abs=1e-12)


# frozen from direct_stopping_gain, 4e6 slots each, stderr 4.6e-4
@pytest.mark.parametrize("K,expected", [(5, 1.4982), (10, 1.5162), (20, 1.5159)])
def test_gain_exponential_frozen(K, expected):
    _, g, se = analytic_gain(EXP, 0.1, K, mc_samples=400_000)
    assert g == pytest.approx(expected, abs=4 * math.hypot(se, 4.6e-4))


@pytest.mark.parametrize("model", [EXP, UNI, FOUR], ids=lambda m: m.kind)
@pytest.mark.parametrize("K,beta", [(20, 0.1), (4, 0.2), (30, 0.05)])
def test_gain_matches_direct_rule(model, K, beta):
    v = build_threshold_table(model, beta, K).thresholds
    ref, ref_se, _ = direct_stopping_gain(model.sample, v, beta, 1_000_000, np.random.default_rng(11))
    _, g, se = analytic_gain(model, beta, K, mc_samples=200_000,
                                        rng=np.random.default_rng(12))
    assert g == pytest.approx(ref, abs=4 * math.hypot(se, ref_se) + 1e-12)


def test_gain_bounds():
    for K in (2, 5, 10, 20):
        _, g, se = analytic_gain(EXP, 0.1, K, mc_samples=100_000)
        assert g <= (1 - 0.1) * harmonic(K) + 4 * se
        assert g >= 0.9 - 4 * se


def test_gain_stderr_scales_with_samples():
    ses = [analytic_gain(EXP, 0.1, 20, mc_samples=n, rng=np.random.default_rng(5))[2]
           for n in (50_000, 100_000)]
    assert ses[1] / ses[0] == pytest.approx(1 / math.sqrt(2), rel=0.2)


def test_gain_low_acceptance_raises(monkeypatch):
    import jpspf.analysis as an
    monkeypatch.setattr(an, "MIN_ACCEPTANCE", 1.1)
    with pytest.raises(AnalysisError):
        an.analytic_gain(EXP, 0.1, 5, mc_samples=100)


def test_gain_genie():
    assert gain_genie(EXP, 20) == pytest.approx(3.5977, abs=1e-4)
    assert gain_genie(EXP, 2) == pytest.approx(1.5, abs=1e-12)
    assert gain_genie(EXP, 1) == 1.0
    for m in (EXP, UNI, FOUR):
        mc = gain_genie(m, 7, mc_samples=1_000_000, rng=np.random.default_rng(1))
        assert gain_genie(m, 7) == pytest.approx(mc, abs=6e-3)
    assert gain_genie(UNI, 3) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        gain_genie(EXP, 0)


def test_gain_probe_all():
    assert gain_probe_all(EXP, 20, 0.1) == 0.0
    assert gain_probe_all(EXP, 10, 0.1) == 0.0
    assert gain_probe_all(EXP, 5, 0.1) == pytest.approx(0.5 * harmonic(5), abs=1e-12)
    assert gain_probe_all(EXP, 5, 0.1) == pytest.approx(1.1417, abs=1e-4)
    assert gain_probe_all(EXP, 1, 0.1) == pytest.approx(0.9)


def test_pf_utility():
    assert pf_utility([1, 1, 1]) == 0.0
    assert pf_utility([math.e, math.e ** 2]) == pytest.approx(3.0)
    assert pf_utility([2, 3]) == pytest.approx(math.log(6))
    for bad in ([1, 0], [1, -2]):
        with pytest.raises(ValueError):
            pf_utility(bad)


def test_theory_report_and_curves():
    rep = theory_report(EXP, 0.1, 20, mc_samples=50_000)
    assert rep.kappa * 20 == pytest.approx(rep.gain_jps)
    assert rep.kappa == pytest.approx(0.07583, abs=5e-4)
    assert rep.gain_pa == 0.0 and rep.gain_rr == 1.0
    assert rep.probe_probs_csv().splitlines()[0] == "j,p_j"
    assert len(rep.probe_probs_csv().splitlines()) == 11
    rows = gain_curves(EXP, 0.1, [1, 5, 20], mc_samples=20_000)
    text = gain_curves_csv(rows).splitlines()
    assert text[0] == "K,gain_jps,gain_ga,gain_pa,gain_rr"
    assert len(text) == 4
    jps = [r["gain_jps"] for r in rows]
    assert jps[0] < jps[1] < jps[2] + 0.01


def test_total_variation():
    assert total_variation([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert total_variation([1.0], [0.0, 1.0]) == 1.0
