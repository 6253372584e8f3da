import math

import numpy as np
import pytest

from q3sim.analysis import (Bench, CalibrationResult, calibrate_phases,
                            estimate_crosstalk, estimate_g2,
                            measure_config_probability, run_triple_test,
                            sorkin_epsilon, sorkin_kappa)
from q3sim.analysis import _fit_fringe_phase
from q3sim.circuit import (ALL_CONFIGS, BlockingConfig, CircuitParams,
                           build_circuit)
from q3sim.detection import (CoincidenceHistogram, DetectorSystem,
                             FilterParams, SpadParams)
from q3sim.errors import (BudgetError, DataError, FitError,
                          NormalizationError, ParameterError)
from q3sim.source import WeakCoherentCW

LABELS = [c.label for c in ALL_CONFIGS]
AMP = {"A": 0, "B": 1, "C": 2}


def born_table(amps):
    """Probability of each blocking configuration from three path amplitudes."""
    out = {}
    for cfg in ALL_CONFIGS:
        total = sum(amps[AMP[p]] for p in cfg.open_paths)
        out[cfg.label] = abs(total) ** 2
    return out


def ideal_table():
    return born_table(np.array([1.0, 1.0, 1.0]) / 3.0)


def make_bench(seed=0, policy="zero", ratio_error=0.0,
               extinction_db=float("inf"), insertion_loss_db=0.0,
               crosstalk=0.05, efficiency=0.5, dark_rate_cps=0.0,
               residual_pump_rate_cps=0.0, rate_cps=1.0e6):
    params = CircuitParams(ratio_error=ratio_error,
                           extinction_db=extinction_db,
                           insertion_loss_db=insertion_loss_db,
                           crosstalk=crosstalk,
                           phase_offset_policy=policy)
    spad = SpadParams(efficiency=efficiency, dark_rate_cps=dark_rate_cps,
                      jitter_fwhm_ps=0.0)
    return Bench(source=WeakCoherentCW(rate_cps), pump_fiber_mw=15.0,
                 circuit=build_circuit(params, seed),
                 filter_params=FilterParams(),
                 detectors=DetectorSystem.uniform(spad),
                 residual_pump_rate_cps=residual_pump_rate_cps, seed=seed)


# -- third-order statistic -----------------------------------------------------


def test_epsilon_vanishes_for_squared_amplitudes():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(300):
        amps = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        worst = max(worst, abs(sorkin_epsilon(born_table(amps))))
    assert worst < 1e-12


def test_epsilon_offset_and_scale():
    rng = np.random.default_rng(1)
    amps = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    table = born_table(amps)
    shifted = {k: 0.7 * v + 0.013 for k, v in table.items()}
    # the eight coefficients sum to zero, so a pedestal drops out and a
    # common gain only rescales
    assert abs(sorkin_epsilon(shifted)) < 1e-12
    bumped = dict(table)
    bumped["ABC"] += 2e-3
    assert sorkin_epsilon(bumped) == pytest.approx(2e-3, rel=1e-9)


def test_ideal_table_values():
    p = ideal_table()
    assert p["none"] == 0.0
    for single in ("A", "B", "C"):
        assert p[single] == pytest.approx(1.0 / 9.0, rel=1e-12)
    for pair in ("AB", "AC", "BC"):
        assert p[pair] == pytest.approx(4.0 / 9.0, rel=1e-12)
    assert p["ABC"] == pytest.approx(1.0, rel=1e-12)

    res = sorkin_kappa(p, {k: 1e-4 for k in p})
    assert abs(res.epsilon) < 1e-15
    assert res.delta == pytest.approx(2.0 / 3.0, rel=1e-12)
    assert abs(res.kappa) < 1e-12


def test_injected_kappa_recovery():
    p = ideal_table()
    p["ABC"] += 1e-3
    res = sorkin_kappa(p, {k: 1e-6 for k in p})
    # the pairwise terms do not involve the all-open table entry
    assert res.delta == pytest.approx(2.0 / 3.0, rel=1e-12)
    assert res.kappa == pytest.approx(1.5e-3, rel=1e-9)


def test_kappa_error_propagation():
    sigma = 1e-4
    res = sorkin_kappa(ideal_table(), {k: sigma for k in LABELS})
    assert res.epsilon_err == pytest.approx(math.sqrt(8.0) * sigma, rel=1e-12)
    # at kappa = 0 the quotient-rule term drops and each config contributes
    # sigma/delta
    assert res.kappa_err == pytest.approx(math.sqrt(8.0) * sigma / (2.0 / 3.0),
                                          rel=1e-6)


def test_bootstrap_agrees_with_jacobian():
    sigma = 1e-4
    res = sorkin_kappa(ideal_table(), {k: sigma for k in LABELS},
                       bootstrap_seed=7)
    assert res.kappa_err_bootstrap is not None
    assert res.kappa_err_bootstrap == pytest.approx(res.kappa_err, rel=0.1)


def test_sorkin_table_validation():
    p = ideal_table()
    s = {k: 1e-4 for k in LABELS}
    del p["BC"]
    with pytest.raises(DataError):
        sorkin_kappa(p, s)
    flat = {k: 0.25 for k in LABELS}
    with pytest.raises(NormalizationError):
        sorkin_kappa(flat, flat)


# -- bench probabilities --------------------------------------------------------


def test_bench_ideal_probability_ratios():
    bench = make_bench()
    codes = (0, 0)
    p_all = bench.click_probability(BlockingConfig.from_label("ABC"), codes)
    scale = FilterParams().signal_survival * 0.5
    assert p_all == pytest.approx(scale, rel=1e-12)
    for label, frac in (("A", 1 / 9), ("AB", 4 / 9), ("none", 0.0)):
        p = bench.click_probability(BlockingConfig.from_label(label), codes)
        assert p == pytest.approx(frac * scale, abs=1e-15)
    assert bench.analytic_max() == pytest.approx(1.0, rel=1e-12)


def test_bench_measure_modes():
    bench = make_bench()
    cfg = BlockingConfig.from_label("AB")
    codes = (0, 0)
    p = bench.click_probability(cfg, codes)
    assert bench.measure(cfg, codes, None) == p
    rng = np.random.default_rng(3)
    shots = 200000
    clicks = bench.measure(cfg, codes, shots, rng)
    assert abs(clicks - shots * p) < 5.0 * math.sqrt(shots * p * (1 - p))
    with pytest.raises(ParameterError):
        bench.measure(cfg, codes, 100, None)


def test_measure_config_probability_tracks_truth():
    bench = make_bench()
    cfg = BlockingConfig.from_label("AC")
    m = measure_config_probability(bench, cfg, 50000, seed=11, codes=(0, 0))
    truth = bench.click_probability(cfg, (0, 0))
    assert m.photons_in == 50000
    assert m.sigma > 0.0
    assert abs(m.p_hat - truth) < 5.0 * m.sigma
    with pytest.raises(ParameterError):
        measure_config_probability(bench, cfg, 0, seed=1)


def test_dark_subtraction_is_unbiased():
    bench = make_bench(dark_rate_cps=800.0)
    cfg = BlockingConfig.from_label("A")
    truth = bench.click_probability(cfg, (0, 0))
    n = 40000
    err_w = 0.0
    raw_bias = 0.0
    for seed in range(12):
        m = measure_config_probability(bench, cfg, n, seed=seed, codes=(0, 0))
        raw = measure_config_probability(bench, cfg, n, seed=seed,
                                         codes=(0, 0), dark_subtraction=False)
        err_w += (m.p_hat - truth) / m.sigma
        raw_bias += raw.p_hat - truth
    assert abs(err_w) / 12.0 < 3.0 / math.sqrt(12.0)
    # without subtraction every run sits above the truth
    assert raw_bias > 0.0


def test_run_triple_test_ideal():
    bench = make_bench()
    res, meas = run_triple_test(bench, 30000, seed=21, codes=(0, 0))
    assert [m.config for m in meas] == LABELS
    assert all(m.photons_in == 30000 for m in meas)
    assert res.counts == {m.config: m.clicks for m in meas}
    # reported table is referenced to the all-blocked rate
    assert res.probabilities["none"] == 0.0
    assert abs(res.kappa) < 4.0 * res.kappa_err
    assert res.delta > 0.0


def test_run_triple_test_determinism():
    bench = make_bench(policy="random", extinction_db=30.0, seed=5)
    a = run_triple_test(bench, 5000, seed=9, codes=(100, 200))
    b = run_triple_test(bench, 5000, seed=9, codes=(100, 200))
    assert a[0].probabilities == b[0].probabilities
    assert a[0].kappa == b[0].kappa


# -- calibration -----------------------------------------------------------------


def ang_dist(a, b):
    return abs((a - b + math.pi) % (2.0 * math.pi) - math.pi)


def test_calibrate_phases_noiseless():
    bench = make_bench(policy="random", ratio_error=0.01,
                       extinction_db=30.0, seed=3)
    cal = calibrate_phases(bench, budget=2048)
    assert isinstance(cal, CalibrationResult)
    assert cal.achieved_fraction >= 0.995
    assert cal.probes_used <= 2048
    assert len(cal.scan_trace) == cal.probes_used
    offsets = bench.circuit.fabrication_echo()["phase_offsets_rad"]
    for rec, true in zip(cal.recovered_offsets_rad, offsets):
        assert ang_dist(rec, true) < 0.05


def test_calibrate_phases_noisy():
    bench = make_bench(policy="random", ratio_error=0.01,
                       extinction_db=30.0, seed=5)
    cal = calibrate_phases(bench, budget=2048, shots_per_point=100000)
    assert cal.achieved_fraction >= 0.98


def test_calibration_budget():
    bench = make_bench(policy="random", seed=4)
    with pytest.raises(BudgetError):
        calibrate_phases(bench, budget=100, grid=16)
    cal = calibrate_phases(bench, budget=256, grid=16)
    assert cal.probes_used == 256


def test_calibration_trace_serializes():
    bench = make_bench(policy="random", seed=6)
    cal = calibrate_phases(bench, budget=300, grid=16)
    d = cal.to_dict()
    assert set(d) == {"codes", "achieved_fraction", "recovered_offsets_rad",
                      "crosstalk_used", "probes_used", "scan_trace"}
    codes, value = d["scan_trace"][0]
    assert len(codes) == 2 and isinstance(value, float)


def test_estimate_crosstalk_noiseless():
    bench = make_bench(policy="random", ratio_error=0.01,
                       extinction_db=30.0, seed=8)
    x_hat = estimate_crosstalk(bench)
    assert x_hat.shape == (2, 2)
    assert abs(x_hat[0, 1] - 0.05) < 1e-3
    assert abs(x_hat[1, 0] - 0.05) < 1e-3
    assert x_hat[0, 0] == 0.0 and x_hat[1, 1] == 0.0


def test_fit_fringe_phase():
    x = np.linspace(0.0, 2.0 * math.pi, 16, endpoint=False)
    y = 2.0 + 0.5 * np.cos(x + 0.7)
    assert _fit_fringe_phase(x, y) == pytest.approx(0.7, abs=1e-9)
    with pytest.raises(FitError):
        _fit_fringe_phase(x, np.full_like(x, 3.0))


# -- g2 normalization -----------------------------------------------------------


def make_hist():
    return CoincidenceHistogram(
        bin_starts_ps=np.array([-1000, -500, 0, 500], np.int64),
        counts=np.array([8, 4, 2, 6], np.int64),
        bin_ps=500, window_ps=1000, total_time_ps=2 * 10 ** 12,
        n_a=2000, n_b=2000)


def test_estimate_g2_normalization():
    est = estimate_g2(make_hist(), 1000.0, 1000.0, 2.0)
    norm = 1000.0 * 1000.0 * (500 / 1e12) * 2.0
    assert np.allclose(est.g2, np.array([8, 4, 2, 6]) / norm)
    assert np.allclose(est.stderr, np.sqrt([8, 4, 2, 6]) / norm)
    # zero-delay averages the two bins straddling tau = 0
    assert est.g2_at_zero == pytest.approx((4 + 2) / (2 * norm))
    assert est.g2_at_zero_err == pytest.approx(math.sqrt(6) / (2 * norm))
    assert est.singles_rates_cps == (1000.0, 1000.0)


def test_estimate_g2_validation():
    with pytest.raises(ParameterError):
        estimate_g2(make_hist(), 1000.0, 1000.0, 0.0)
    with pytest.raises(NormalizationError):
        estimate_g2(make_hist(), 0.0, 1000.0, 2.0)


def test_g2_estimate_to_dict():
    d = estimate_g2(make_hist(), 1000.0, 1000.0, 2.0).to_dict()
    assert d["bin_ps"] == 500
    assert len(d["g2"]) == 4
    assert isinstance(d["tau_bin_starts_ps"], list)
