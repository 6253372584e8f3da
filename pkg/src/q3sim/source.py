"""Pump laser and photon-source models.

The flagship source is a two-level emitter pumped above threshold: photon
emission alternates an exponential excitation wait (rate k_ex, set by the
pump) with an exponential radiative decay (rate 1/tau1).  That cycle
produces antibunched arrival times with

    g2(tau) = 1 - rho^2 * exp(-(k_ex + 1/tau1) * |tau|)

where rho is the signal fraction once the Poissonian background pedestal is
added.  Weak-coherent comparators (CW and pulsed) provide the g2 = 1
reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ParameterError, SignalError
from .rng import as_generator, STREAM_SOURCE
from .timetags import PS_PER_S, TimeTagSeries, seconds_to_ps


@dataclass(frozen=True)
class PumpLaser:
    """Diode pump with a linear power-current curve above threshold.

    Defaults follow the flight driver: 30 mW free-space output at 65 mA,
    150 mA compliance, ~5 uA drive stability, and 50% single-mode fiber
    coupling (middle of the measured 50-60% band).
    """

    threshold_current_ma: float = 20.0
    slope_mw_per_ma: float = 30.0 / 45.0
    max_current_ma: float = 150.0
    fiber_coupling: float = 0.5
    current_stability_ua: float = 5.0

    def __post_init__(self):
        if self.threshold_current_ma < 0:
            raise ParameterError("threshold_current_ma must be >= 0")
        if self.slope_mw_per_ma <= 0:
            raise ParameterError("slope_mw_per_ma must be > 0")
        if self.max_current_ma <= self.threshold_current_ma:
            raise ParameterError("max_current_ma must exceed threshold_current_ma")
        if not 0.0 < self.fiber_coupling <= 1.0:
            raise ParameterError("fiber_coupling must lie in (0, 1]")


def pump_power(laser: PumpLaser, current_ma: float) -> tuple[float, float]:
    """Return (free-space mW, fiber-coupled mW) at a drive current.

    Zero below threshold; linear above.  Currents outside [0, max] are
    rejected because the driver cannot produce them.
    """
    if not 0.0 <= current_ma <= laser.max_current_ma:
        raise ParameterError(
            f"current {current_ma:g} mA outside [0, {laser.max_current_ma:g}] mA")
    free = max(0.0, (current_ma - laser.threshold_current_ma) * laser.slope_mw_per_ma)
    return free, free * laser.fiber_coupling


@dataclass(frozen=True)
class EmitterParams:
    """Two-level emitter figures.

    lifetime_tau1_ns        excited-state lifetime (1/decay rate)
    saturation_power_mw     pump power at half the asymptotic rate
    max_emission_rate_cps   asymptotic emission rate R_inf
    background_fraction     Poissonian pedestal as a fraction of total flux
    wavelength_nm           emission wavelength, above 700 nm
    """

    lifetime_tau1_ns: float = 3.0
    saturation_power_mw: float = 1.0
    max_emission_rate_cps: float = 5.0e6
    background_fraction: float = 0.05
    wavelength_nm: float = 785.0

    def __post_init__(self):
        if self.lifetime_tau1_ns <= 0:
            raise ParameterError("lifetime_tau1_ns must be > 0")
        if self.saturation_power_mw <= 0:
            raise ParameterError("saturation_power_mw must be > 0")
        if self.max_emission_rate_cps <= 0:
            raise ParameterError("max_emission_rate_cps must be > 0")
        if not 0.0 <= self.background_fraction < 1.0:
            raise ParameterError("background_fraction must lie in [0, 1)")
        if self.wavelength_nm <= 700.0:
            raise ParameterError("wavelength_nm must be > 700")

    @property
    def decay_rate_cps(self) -> float:
        return 1.0e9 / self.lifetime_tau1_ns


@dataclass(frozen=True)
class TwoLevelEmitter:
    emitter: EmitterParams = EmitterParams()


@dataclass(frozen=True)
class WeakCoherentCW:
    mean_rate_cps: float

    def __post_init__(self):
        if self.mean_rate_cps <= 0:
            raise ParameterError("mean_rate_cps must be > 0")


@dataclass(frozen=True)
class WeakCoherentPulsed:
    rep_rate_hz: float
    mean_photon_number: float

    def __post_init__(self):
        if self.rep_rate_hz <= 0:
            raise ParameterError("rep_rate_hz must be > 0")
        if self.mean_photon_number <= 0:
            raise ParameterError("mean_photon_number must be > 0")


SourceKind = Union[TwoLevelEmitter, WeakCoherentCW, WeakCoherentPulsed]


def emission_rate(emitter: EmitterParams, pump_fiber_mw: float) -> float:
    """Saturation curve R(P) = R_inf * P / (P + P_sat)."""
    if pump_fiber_mw < 0:
        raise ParameterError("pump power must be >= 0")
    return emitter.max_emission_rate_cps * pump_fiber_mw / (
        pump_fiber_mw + emitter.saturation_power_mw)


def excitation_rate(emitter: EmitterParams, pump_fiber_mw: float) -> float:
    """Excitation rate k_ex reproducing the saturation-curve emission rate.

    The alternating cycle emits at R = k_ex*G/(k_ex+G) with G = 1/tau1, so
    k_ex = R*G/(G-R).  Requires R < G, which holds whenever R_inf < G.
    """
    rate = emission_rate(emitter, pump_fiber_mw)
    gamma = emitter.decay_rate_cps
    if rate >= gamma:
        raise ParameterError(
            f"emission rate {rate:.3g}/s reaches the decay rate {gamma:.3g}/s; "
            "the two-level cycle cannot sustain it")
    if rate == 0.0:
        raise ParameterError("pump power is zero; the emitter is dark")
    return rate * gamma / (gamma - rate)


def mean_rate(source: SourceKind, pump_fiber_mw: float) -> float:
    """Model mean photon rate (signal plus background where applicable)."""
    if isinstance(source, TwoLevelEmitter):
        b = source.emitter.background_fraction
        return emission_rate(source.emitter, pump_fiber_mw) / (1.0 - b)
    if isinstance(source, WeakCoherentCW):
        return source.mean_rate_cps
    if isinstance(source, WeakCoherentPulsed):
        return source.rep_rate_hz * source.mean_photon_number
    raise ParameterError(f"unknown source kind {type(source).__name__}")


def theoretical_g2(source: SourceKind, pump_fiber_mw: float, tau_ns) -> np.ndarray | float:
    """Second-order correlation of the ideal model at delay tau (ns).

    Two-level emitter: 1 - rho^2 exp(-(k_ex + 1/tau1)|tau|) with
    rho = 1 - background_fraction.  Weak-coherent light: exactly 1.
    """
    tau = np.asarray(tau_ns, dtype=float)
    if isinstance(source, (WeakCoherentCW, WeakCoherentPulsed)):
        out = np.ones_like(tau)
        return float(out) if out.ndim == 0 else out
    if not isinstance(source, TwoLevelEmitter):
        raise ParameterError(f"unknown source kind {type(source).__name__}")
    em = source.emitter
    k_ex = excitation_rate(em, pump_fiber_mw)
    lam_per_ns = (k_ex + em.decay_rate_cps) / 1.0e9
    rho = 1.0 - em.background_fraction
    out = 1.0 - rho * rho * np.exp(-lam_per_ns * np.abs(tau))
    return float(out) if out.ndim == 0 else out


# -- waiting-time generators -------------------------------------------------
# Each generator is a resumable iterator over float seconds so that exact-
# count generation can extend a stream without restarting the process.


class _TwoLevelWaits:
    """Alternating Exp(k_ex) + Exp(gamma) cycle times."""

    def __init__(self, rng: np.random.Generator, k_ex: float, gamma: float):
        self.rng = rng
        self.k_ex = k_ex
        self.gamma = gamma
        self.t = 0.0

    def draw(self, n: int) -> np.ndarray:
        waits = self.rng.exponential(1.0 / self.k_ex, n)
        waits += self.rng.exponential(1.0 / self.gamma, n)
        times = self.t + np.cumsum(waits)
        self.t = float(times[-1]) if n else self.t
        return times


class _PoissonWaits:
    """Homogeneous Poisson process via exponential waits."""

    def __init__(self, rng: np.random.Generator, rate: float):
        self.rng = rng
        self.rate = rate
        self.t = 0.0

    def draw(self, n: int) -> np.ndarray:
        times = self.t + np.cumsum(self.rng.exponential(1.0 / self.rate, n))
        self.t = float(times[-1]) if n else self.t
        return times


def _block_size(horizon_s: float, rate: float) -> int:
    """Draw-block length: one pass for typical runs, capped to bound memory."""
    return int(min(max(1024, horizon_s * rate * 1.05 + 64), 4 << 20))


def _advance(proc, horizon_s: float, block: int) -> list[np.ndarray]:
    """Draw blocks from a waits process until it passes the horizon."""
    parts = []
    while proc.t < horizon_s:
        parts.append(proc.draw(block))
    return parts


def _emitted_times(source: SourceKind, pump_fiber_mw: float,
                   rng: np.random.Generator, horizon_s: float) -> np.ndarray:
    """All emission times (float seconds, sorted) up to at least horizon_s."""
    if isinstance(source, TwoLevelEmitter):
        em = source.emitter
        sig_rate = emission_rate(em, pump_fiber_mw)
        if sig_rate == 0.0:
            return np.empty(0)
        k_ex = excitation_rate(em, pump_fiber_mw)
        gamma = em.decay_rate_cps
        sig = _advance(_TwoLevelWaits(rng, k_ex, gamma), horizon_s,
                       _block_size(horizon_s, sig_rate))
        parts = sig
        b = em.background_fraction
        if b > 0.0:
            bg_rate = sig_rate * b / (1.0 - b)
            parts = sig + _advance(_PoissonWaits(rng, bg_rate), horizon_s,
                                   _block_size(horizon_s, bg_rate))
        times = np.concatenate(parts)
        times.sort(kind="stable")
        return times
    if isinstance(source, WeakCoherentCW):
        times = np.concatenate(_advance(_PoissonWaits(rng, source.mean_rate_cps),
                                        horizon_s,
                                        _block_size(horizon_s, source.mean_rate_cps)))
        return times
    if isinstance(source, WeakCoherentPulsed):
        n_pulses = int(math.floor(horizon_s * source.rep_rate_hz)) + 1
        counts = rng.poisson(source.mean_photon_number, n_pulses)
        pulse_t = np.arange(n_pulses) / source.rep_rate_hz
        return np.repeat(pulse_t, counts)
    raise ParameterError(f"unknown source kind {type(source).__name__}")


def generate_stream(source: SourceKind, pump_fiber_mw: float, duration_s: float,
                    seed: int | np.random.Generator, *, channel: int = 0,
                    channel_count: int = 3) -> TimeTagSeries:
    """Simulate the emitted photon stream over a fixed window.

    Deterministic for a given (seed, parameters).  Times are rounded to
    integer picoseconds; ties are allowed (pulsed sources emit photon pairs
    at the same pulse time).
    """
    duration_ps = seconds_to_ps(duration_s)
    rng = as_generator(seed, STREAM_SOURCE)
    times_s = _emitted_times(source, pump_fiber_mw, rng, duration_s)
    times_ps = np.round(times_s * PS_PER_S).astype(np.int64)
    times_ps = times_ps[times_ps <= duration_ps]
    ch = np.full(times_ps.size, channel, dtype=np.uint8)
    return TimeTagSeries(times_ps, ch, duration_ps, "emitted", channel_count)


def generate_photons(source: SourceKind, pump_fiber_mw: float, n: int,
                     seed: int | np.random.Generator, *, skip_s: float = 0.0,
                     channel: int = 0, channel_count: int = 3) -> TimeTagSeries:
    """Simulate exactly ``n`` emitted photons (after an optional settle skip).

    Photons arriving inside the first ``skip_s`` seconds are discarded (the
    switch settle window); the stream is then truncated at the n-th photon
    and re-referenced so t=0 is the end of the settle window.  Returns a
    series whose duration is the arrival time of the last photon.
    """
    if n <= 0:
        raise ParameterError("photon count must be positive")
    rng = as_generator(seed, STREAM_SOURCE)
    rate = mean_rate(source, pump_fiber_mw)
    if rate <= 0.0:
        raise SignalError("the source is dark; a photon budget cannot be met")
    horizon = skip_s + (n + 10.0 * math.sqrt(n) + 16.0) / rate
    times_s = _emitted_times(source, pump_fiber_mw, rng, horizon)
    times_s = times_s[times_s >= skip_s]
    while times_s.size < n:
        horizon *= 1.5
        times_s = _emitted_times(source, pump_fiber_mw, rng, horizon)
        times_s = times_s[times_s >= skip_s]
    times_s = times_s[:n] - skip_s
    times_ps = np.round(times_s * PS_PER_S).astype(np.int64)
    seconds_to_ps(times_s[-1])  # capacity check on the realized span
    ch = np.full(n, channel, dtype=np.uint8)
    return TimeTagSeries(times_ps, ch, int(times_ps[-1]), "emitted", channel_count)
