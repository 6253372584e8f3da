import math

import numpy as np
import pytest

from q3sim.errors import CapacityError, ParameterError
from q3sim.source import (EmitterParams, PumpLaser, TwoLevelEmitter,
                          WeakCoherentCW, WeakCoherentPulsed, emission_rate,
                          excitation_rate, generate_photons, generate_stream,
                          mean_rate, pump_power, theoretical_g2)
from q3sim.timetags import PS_PER_S


def test_pump_power_line():
    laser = PumpLaser()
    free, fiber = pump_power(laser, 65.0)
    assert free == pytest.approx(30.0)           # (65-20) mA * 30/45 mW/mA
    assert fiber == pytest.approx(15.0)          # 50% fiber coupling
    assert pump_power(laser, 20.0) == (0.0, 0.0)
    assert pump_power(laser, 10.0) == (0.0, 0.0)  # below threshold


def test_pump_power_compliance():
    laser = PumpLaser()
    with pytest.raises(ParameterError):
        pump_power(laser, 151.0)
    with pytest.raises(ParameterError):
        pump_power(laser, -1.0)


def test_laser_parameter_validation():
    with pytest.raises(ParameterError):
        PumpLaser(fiber_coupling=0.0)
    with pytest.raises(ParameterError):
        PumpLaser(max_current_ma=10.0)  # below threshold


def test_emission_rate_saturation():
    em = EmitterParams(max_emission_rate_cps=1.0e6, saturation_power_mw=1.0)
    # P = 3 P_sat gives R_inf * 3/4
    assert emission_rate(em, 3.0) == pytest.approx(7.5e5)
    assert emission_rate(em, 0.0) == 0.0
    # monotone, saturating below R_inf
    rates = [emission_rate(em, p) for p in (0.1, 0.5, 1.0, 5.0, 50.0)]
    assert all(b > a for a, b in zip(rates, rates[1:]))
    assert rates[-1] < 1.0e6


def test_excitation_rate_identity():
    em = EmitterParams(lifetime_tau1_ns=3.0, max_emission_rate_cps=5.0e6)
    gamma = em.decay_rate_cps
    assert gamma == pytest.approx(1e9 / 3.0)
    r = emission_rate(em, 15.0)
    k = excitation_rate(em, 15.0)
    # the emission rate of the alternating cycle is 1/(1/k + 1/gamma)
    assert 1.0 / (1.0 / k + 1.0 / gamma) == pytest.approx(r, rel=1e-12)


def test_excitation_rate_requires_headroom():
    # an emission rate at the decay rate would need infinite pumping
    em = EmitterParams(lifetime_tau1_ns=1000.0, max_emission_rate_cps=2.0e6)
    with pytest.raises(ParameterError):
        excitation_rate(em, 1.0e6)
    with pytest.raises(ParameterError):
        excitation_rate(em, 0.0)


def test_mean_rates():
    em = EmitterParams(max_emission_rate_cps=1.0e6, background_fraction=0.2)
    src = TwoLevelEmitter(em)
    r_sig = emission_rate(em, 3.0)
    assert mean_rate(src, 3.0) == pytest.approx(r_sig / 0.8)
    assert mean_rate(WeakCoherentCW(4.2e5), 3.0) == 4.2e5
    assert mean_rate(WeakCoherentPulsed(1e6, 0.25), 3.0) == pytest.approx(2.5e5)


def test_theoretical_g2_shapes():
    em = EmitterParams(lifetime_tau1_ns=3.0, background_fraction=0.1,
                       max_emission_rate_cps=5e6)
    src = TwoLevelEmitter(em)
    rho = 0.9
    g0 = theoretical_g2(src, 15.0, 0.0)
    assert g0 == pytest.approx(1.0 - rho ** 2)
    far = theoretical_g2(src, 15.0, 1e6)
    assert far == pytest.approx(1.0)
    tau = np.linspace(-20.0, 20.0, 41)
    curve = theoretical_g2(src, 15.0, tau)
    assert curve.shape == tau.shape
    assert np.all(np.diff(curve[tau >= 0]) >= 0)      # dip recovers monotonically
    assert curve[0] == pytest.approx(curve[-1])        # symmetric in |tau|
    assert theoretical_g2(WeakCoherentCW(1e6), 15.0, 0.0) == 1.0
    assert theoretical_g2(WeakCoherentPulsed(1e6, 0.1), 15.0, 0.0) == 1.0


def test_cw_stream_is_poisson():
    rate = 1.0e6
    t_s = 2.0
    s = generate_stream(WeakCoherentCW(rate), 15.0, t_s, seed=42)
    n = len(s)
    mu = rate * t_s
    assert abs(n - mu) < 5.0 * math.sqrt(mu)
    # exponential inter-arrivals: mean and CV close to 1/rate and 1
    dt = np.diff(s.times_ps) / PS_PER_S
    assert np.mean(dt) == pytest.approx(1.0 / rate, rel=0.01)
    assert np.std(dt) / np.mean(dt) == pytest.approx(1.0, abs=0.01)


def test_pulsed_stream_on_grid():
    rep = 1.0e6
    mu = 0.2
    t_s = 1.0
    s = generate_stream(WeakCoherentPulsed(rep, mu), 15.0, t_s, seed=1)
    n = len(s)
    expect = rep * t_s * mu
    assert abs(n - expect) < 5.0 * math.sqrt(expect)
    period_ps = PS_PER_S / rep
    assert np.all(np.asarray(s.times_ps) % int(period_ps) == 0)


def test_two_level_stream_rate_and_antibunching():
    em = EmitterParams(lifetime_tau1_ns=50.0, max_emission_rate_cps=2.0e6,
                       background_fraction=0.0)
    src = TwoLevelEmitter(em)
    t_s = 2.0
    s = generate_stream(src, 15.0, t_s, seed=3)
    r = emission_rate(em, 15.0)
    n = len(s)
    assert abs(n - r * t_s) < 5.0 * math.sqrt(r * t_s)

    # signal-only inter-arrivals follow the two-stage (hypoexponential) law
    k = excitation_rate(em, 15.0)
    g = em.decay_rate_cps
    dt = np.diff(s.times_ps) / PS_PER_S
    for q in (0.2, 0.5, 1.0, 2.0):
        t = q / r
        cdf = 1.0 - (g * math.exp(-k * t) - k * math.exp(-g * t)) / (g - k)
        emp = float(np.mean(dt <= t))
        # binomial error on the empirical CDF
        tol = 5.0 * math.sqrt(cdf * (1 - cdf) / dt.size) + 1e-9
        assert abs(emp - cdf) < tol

    # pair deficit at short delay: far fewer close pairs than a Poisson
    # stream of the same rate
    tau_ns = 5.0
    close = int(np.sum(dt < tau_ns * 1e-9))
    poisson_expect = dt.size * (1.0 - math.exp(-r * tau_ns * 1e-9))
    assert close < 0.25 * poisson_expect


def test_background_raises_short_delay_pairs():
    quiet = EmitterParams(lifetime_tau1_ns=50.0, max_emission_rate_cps=2.0e6,
                          background_fraction=0.0)
    noisy = EmitterParams(lifetime_tau1_ns=50.0, max_emission_rate_cps=2.0e6,
                          background_fraction=0.3)
    dt_q = np.diff(generate_stream(TwoLevelEmitter(quiet), 15.0, 1.0, 5).times_ps)
    dt_n = np.diff(generate_stream(TwoLevelEmitter(noisy), 15.0, 1.0, 5).times_ps)
    lim_ps = 5000
    frac_q = np.mean(dt_q < lim_ps)
    frac_n = np.mean(dt_n < lim_ps)
    assert frac_n > 3.0 * max(frac_q, 1e-12)


def test_stream_determinism():
    src = WeakCoherentCW(5e5)
    a = generate_stream(src, 15.0, 1.0, seed=99)
    b = generate_stream(src, 15.0, 1.0, seed=99)
    c = generate_stream(src, 15.0, 1.0, seed=100)
    assert np.array_equal(a.times_ps, b.times_ps)
    assert not np.array_equal(a.times_ps, c.times_ps)


def test_stream_channel_assignment():
    s = generate_stream(WeakCoherentCW(1e5), 15.0, 0.1, 0, channel=2)
    assert set(s.channels.tolist()) <= {2}
    assert s.origin == "emitted"


def test_generate_photons_exact_budget():
    src = WeakCoherentCW(1e6)
    s = generate_photons(src, 15.0, 12345, seed=7)
    assert len(s) == 12345
    assert s.times_ps[0] >= 0
    assert s.duration_ps == s.times_ps[-1]


def test_generate_photons_settle_skip():
    src = WeakCoherentCW(1e6)
    skip = 0.25
    s = generate_photons(src, 15.0, 50000, seed=7, skip_s=skip)
    # re-referenced to the end of the settle window; budget unchanged
    assert len(s) == 50000
    expect_span = 50000 / 1e6
    assert s.duration_s == pytest.approx(expect_span, rel=0.05)


def test_capacity_guard():
    with pytest.raises(CapacityError):
        generate_stream(WeakCoherentCW(10.0), 15.0, 2.0e6, seed=0)
    with pytest.raises(ParameterError):
        generate_photons(WeakCoherentCW(10.0), 15.0, 0, seed=0)


def test_two_level_dark_pump_is_empty():
    em = EmitterParams()
    s = generate_stream(TwoLevelEmitter(em), 0.0, 0.5, seed=0)
    assert len(s) == 0
    assert s.duration_s == 0.5
