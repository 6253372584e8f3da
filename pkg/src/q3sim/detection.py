"""Spectral filter, SPAD detection chain, and coincidence counting.

The SPAD pipeline order is fixed: efficiency thinning, dark-count merge,
Gaussian timing jitter (truncated at 5 sigma), re-sort, then non-paralyzable
dead time.  Dead time is applied last so the output stream satisfies the
hardware guarantee exactly: no two clicks closer than tau_d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numba
import numpy as np

from .errors import ConfigurationError, NormalizationError, ParameterError
from .rng import as_generator, STREAM_DETECTOR, STREAM_FILTER
from .timetags import PS_PER_S, TimeTagSeries

FWHM_TO_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))  # 2.355
JITTER_TRUNCATION_SIGMA = 5.0


@dataclass(frozen=True)
class FilterParams:
    """Fiber Bragg grating: narrow notch for the pump, small broadband loss."""

    pump_suppression_db: float = 60.0
    broadband_loss_db: float = 1.0
    center_wavelength_nm: float = 690.0
    bandwidth_pm: float = 500.0

    def __post_init__(self):
        if self.pump_suppression_db < 0 or self.broadband_loss_db < 0:
            raise ParameterError("filter attenuations must be >= 0")

    @property
    def signal_survival(self) -> float:
        return 10.0 ** (-self.broadband_loss_db / 10.0)

    @property
    def pump_leak_fraction(self) -> float:
        return 10.0 ** (-self.pump_suppression_db / 10.0)


def apply_filter(signal: TimeTagSeries, pump_photon_rate_cps: float,
                 f: FilterParams, seed: int | np.random.Generator) -> TimeTagSeries:
    """Thin the signal by the broadband loss and merge leaked pump photons.

    The leaked pump arrives as a Poisson stream at
    pump_photon_rate * 10^(-suppression/10), tagged on the signal's channel.
    """
    if pump_photon_rate_cps < 0:
        raise ParameterError("pump photon rate must be >= 0")
    rng = as_generator(seed, STREAM_FILTER)

    keep = rng.random(len(signal)) < f.signal_survival
    times = signal.times_ps[keep]
    channel = int(signal.channels[0]) if len(signal) else 0

    leak_rate = pump_photon_rate_cps * f.pump_leak_fraction
    n_leak = rng.poisson(leak_rate * signal.duration_s) if leak_rate > 0 else 0
    if n_leak:
        leak_times = np.sort(rng.integers(0, signal.duration_ps + 1, n_leak)).astype(np.int64)
        times = np.concatenate([times, leak_times])
        times.sort(kind="stable")
    ch = np.full(times.size, channel, dtype=np.uint8)
    return TimeTagSeries(times, ch, signal.duration_ps, signal.origin,
                         signal.channel_count)


@dataclass(frozen=True)
class SpadParams:
    """Single-photon avalanche diode.

    Flight detectors cap efficiency at 0.5; constructing with
    ``test_mode=True`` lifts the cap to 1.0 for idealized studies.
    """

    efficiency: float = 0.5
    dark_rate_cps: float = 100.0
    dead_time_ns: float = 60.0
    jitter_fwhm_ps: float = 500.0
    channel_id: int = 0
    test_mode: bool = False

    def __post_init__(self):
        cap = 1.0 if self.test_mode else 0.5
        if not 0.0 <= self.efficiency <= cap:
            raise ParameterError(f"efficiency must lie in [0, {cap:g}]")
        if not 0.0 <= self.dark_rate_cps <= 1000.0:
            raise ParameterError("dark_rate_cps must lie in [0, 1000]")
        if self.dead_time_ns <= 0:
            raise ParameterError("dead_time_ns must be > 0")
        if self.jitter_fwhm_ps < 0:
            raise ParameterError("jitter_fwhm_ps must be >= 0")
        if not 0 <= self.channel_id <= 255:
            raise ParameterError("channel_id must fit in a byte")


@numba.njit(cache=True)
def _dead_time_keep(times_ps: np.ndarray, dead_ps: np.int64) -> np.ndarray:
    """Non-paralyzable dead time: keep a tag iff >= dead_ps after the last kept."""
    keep = np.empty(times_ps.size, numba.boolean)
    last = np.int64(-(1 << 62))
    for i in range(times_ps.size):
        if times_ps[i] - last >= dead_ps:
            keep[i] = True
            last = times_ps[i]
        else:
            keep[i] = False
    return keep


def saturation_rate(input_rate_cps: float, dead_time_ns: float) -> float:
    """Non-paralyzable throughput R_in / (1 + R_in tau_d); limit 1/tau_d."""
    tau = dead_time_ns * 1e-9
    return input_rate_cps / (1.0 + input_rate_cps * tau)


def spad_detect(photons: TimeTagSeries, p: SpadParams,
                seed: int | np.random.Generator,
                duration_s: float | None = None, *,
                duration_ps: int | None = None) -> TimeTagSeries:
    """Detect a single-port photon stream.

    Output clicks are tagged on ``p.channel_id`` with origin "detected".
    ``duration_ps`` takes precedence over ``duration_s`` (exact integer path).
    """
    if duration_ps is None:
        duration_ps = photons.duration_ps if duration_s is None else int(round(duration_s * PS_PER_S))
    if duration_ps < photons.duration_ps:
        raise ParameterError("duration must cover the input series")
    rng = as_generator(seed, STREAM_DETECTOR)

    keep = rng.random(len(photons)) < p.efficiency
    t = photons.times_ps[keep].astype(np.float64)

    n_dark = rng.poisson(p.dark_rate_cps * duration_ps / PS_PER_S)
    if n_dark:
        dark = rng.uniform(0.0, float(duration_ps), n_dark)
        t = np.concatenate([t, dark])

    if p.jitter_fwhm_ps > 0 and t.size:
        sigma = p.jitter_fwhm_ps / FWHM_TO_SIGMA
        jit = rng.normal(0.0, sigma, t.size)
        lim = JITTER_TRUNCATION_SIGMA * sigma
        np.clip(jit, -lim, lim, out=jit)
        t = t + jit
        np.clip(t, 0.0, float(duration_ps), out=t)

    ti = np.sort(np.round(t).astype(np.int64), kind="stable")
    dead_ps = np.int64(round(p.dead_time_ns * 1000.0))
    if ti.size:
        ti = ti[_dead_time_keep(ti, dead_ps)]
    ch = np.full(ti.size, p.channel_id, dtype=np.uint8)
    return TimeTagSeries(ti, ch, duration_ps, "detected", photons.channel_count)


@dataclass(frozen=True)
class DetectorSystem:
    """Three SPADs plus shared detection bookkeeping.

    ``timebin_resolution_ps`` is the time-interval counter's configured
    resolution; it is carried in reports but does not re-quantize the
    picosecond axis (the counter's internal behavior is out of model scope).
    """

    spads: tuple[SpadParams, SpadParams, SpadParams]
    peak_power_w: float = 12.5
    timebin_resolution_ps: float = 36.0

    def __post_init__(self):
        ids = [s.channel_id for s in self.spads]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("SPAD channel ids must be distinct")

    @staticmethod
    def uniform(spad: SpadParams) -> "DetectorSystem":
        from dataclasses import replace
        return DetectorSystem(tuple(replace(spad, channel_id=k) for k in range(3)))


def detect_all(ports: Mapping[int, TimeTagSeries], sys: DetectorSystem,
               seed: int | np.random.Generator,
               duration_s: float | None = None) -> TimeTagSeries:
    """Detect every wired port with its SPAD and merge onto one time axis.

    ``ports`` maps SPAD indices (0..2) to single-port photon series.  SPADs
    without a wired port stay silent.  Each SPAD draws from its own
    substream of ``seed``.
    """
    if not ports:
        raise ConfigurationError("no ports wired")
    if any(k not in (0, 1, 2) for k in ports):
        raise ConfigurationError("the system hosts SPAD indices 0..2 only")
    dur_ps = max(p.duration_ps for p in ports.values())
    if duration_s is not None:
        dur_ps = max(dur_ps, int(round(duration_s * PS_PER_S)))
    detected = []
    for idx in sorted(ports):
        rng = as_generator(seed, STREAM_DETECTOR, idx)
        detected.append(spad_detect(ports[idx], sys.spads[idx], rng,
                                    duration_ps=dur_ps))
    return TimeTagSeries.merge(detected, dur_ps)


@dataclass(frozen=True)
class CoincidenceHistogram:
    """Cross-correlation histogram of time differences t_b - t_a.

    Bins are half-open [k*bin, (k+1)*bin) picoseconds covering
    [-window, +window); every pair inside the span is counted (full
    correlation, not start-stop).
    """

    bin_starts_ps: np.ndarray
    counts: np.ndarray
    bin_ps: int
    window_ps: int
    total_time_ps: int
    n_a: int
    n_b: int

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("bin_start_ps,count\n")
            for b, c in zip(self.bin_starts_ps.tolist(), self.counts.tolist()):
                fh.write(f"{b},{c}\n")


def coincidence_histogram(tags: TimeTagSeries, channel_a: int, channel_b: int,
                          window_ns: float, bin_ps: int) -> CoincidenceHistogram:
    """Histogram all pairwise delays between two channels.

    The bin width must divide the full span 2*window evenly.  For equal
    channels the trivial self-pairs are excluded.
    """
    if window_ns <= 0 or bin_ps <= 0:
        raise ParameterError("window and bin must be positive")
    window_ps = int(round(window_ns * 1000.0))
    if (2 * window_ps) % bin_ps != 0:
        raise ParameterError(
            f"bin {bin_ps} ps must divide the full span {2 * window_ps} ps evenly")

    t_a = tags.times_ps[tags.channels == channel_a]
    t_b = tags.times_ps[tags.channels == channel_b]
    n_bins = (2 * window_ps) // bin_ps
    counts = np.zeros(n_bins, dtype=np.int64)

    chunk = 1 << 20
    for s in range(0, t_a.size, chunk):
        a = t_a[s:s + chunk]
        lo = np.searchsorted(t_b, a - window_ps, side="left")
        hi = np.searchsorted(t_b, a + window_ps, side="left")
        total = int((hi - lo).sum())
        if total == 0:
            continue
        # expand [lo, hi) index ranges into explicit pair indices
        reps = hi - lo
        row = np.repeat(a, reps)
        idx = np.repeat(lo - np.concatenate(([0], np.cumsum(reps)[:-1])), reps)
        idx = idx + np.arange(total)
        dt = t_b[idx] - row
        bins = (dt + window_ps) // bin_ps
        counts += np.bincount(bins, minlength=n_bins).astype(np.int64)

    if channel_a == channel_b and t_a.size:
        counts[window_ps // bin_ps] -= t_a.size  # remove zero-lag self pairs

    starts = np.arange(n_bins, dtype=np.int64) * bin_ps - window_ps
    return CoincidenceHistogram(starts, counts, bin_ps, window_ps,
                                tags.duration_ps, int(t_a.size), int(t_b.size))
