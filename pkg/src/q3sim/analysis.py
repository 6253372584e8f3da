"""Estimators for count data: g2, Born-rule triple test, phase calibration.

The triple test measures click probabilities under the eight blocking
configurations and forms

    eps = P_ABC - P_AB - P_AC - P_BC + P_A + P_B + P_C - P_0
    I_xy = P_xy - P_x - P_y + P_0        (pairwise interference terms)
    delta = |I_AB| + |I_AC| + |I_BC|
    kappa = eps / delta

Under the squared-amplitude rule eps vanishes identically for any path
amplitudes, so kappa is the dimensionless deviation statistic.  Both eps
and delta are invariant under a constant additive offset (darks, stray
light) and under a common multiplicative efficiency, which is what makes
kappa robust against the detection chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from . import circuit as circ
from . import detection as det
from . import source as src
from .circuit import ALL_CONFIGS, BlockingConfig, CircuitState
from .errors import (BudgetError, DataError, FitError, NormalizationError,
                     ParameterError, SignalError)
from .rng import (as_generator, substream, STREAM_BOOTSTRAP, STREAM_CALIBRATION,
                  STREAM_CIRCUIT, STREAM_DETECTOR, STREAM_EXPERIMENT,
                  STREAM_FILTER, STREAM_SOURCE)
from .timetags import PS_PER_S, TimeTagSeries

_PAIRS = ("AB", "AC", "BC")
_SINGLES = ("A", "B", "C")


# -- g2 ----------------------------------------------------------------------


@dataclass(frozen=True)
class G2Estimate:
    """Normalized coincidence histogram with its zero-delay summary."""

    tau_bin_starts_ps: np.ndarray
    g2: np.ndarray
    stderr: np.ndarray
    g2_at_zero: float
    g2_at_zero_err: float
    singles_rates_cps: tuple[float, float]
    integration_time_s: float
    bin_ps: int

    def to_dict(self) -> dict:
        return {
            "tau_bin_starts_ps": self.tau_bin_starts_ps.tolist(),
            "g2": self.g2.tolist(),
            "stderr": self.stderr.tolist(),
            "g2_at_zero": self.g2_at_zero,
            "g2_at_zero_err": self.g2_at_zero_err,
            "singles_rates_cps": list(self.singles_rates_cps),
            "integration_time_s": self.integration_time_s,
            "bin_ps": self.bin_ps,
        }


def estimate_g2(hist: det.CoincidenceHistogram, singles_a_cps: float,
                singles_b_cps: float, integration_time_s: float) -> G2Estimate:
    """Normalize a coincidence histogram to g2 values.

    g2_k = C_k / (r_a r_b bin T); the zero-delay figure averages the two
    bins spanning |tau| <= bin.  Counting errors are sqrt(C_k) propagated
    through the same normalization.
    """
    if integration_time_s <= 0:
        raise ParameterError("integration time must be positive")
    norm = singles_a_cps * singles_b_cps * (hist.bin_ps / PS_PER_S) * integration_time_s
    if norm <= 0.0:
        raise NormalizationError(
            "singles rates give zero accidental normalization; g2 is undefined")
    counts = hist.counts.astype(float)
    g2 = counts / norm
    err = np.sqrt(counts) / norm

    central = np.isin(hist.bin_starts_ps, (-hist.bin_ps, 0))
    c_central = float(counts[central].sum())
    n_central = int(central.sum())
    g2_zero = c_central / (norm * n_central)
    g2_zero_err = math.sqrt(c_central) / (norm * n_central)
    return G2Estimate(hist.bin_starts_ps, g2, err, g2_zero, g2_zero_err,
                      (singles_a_cps, singles_b_cps), integration_time_s,
                      hist.bin_ps)


# -- Sorkin statistics ---------------------------------------------------------


def _get(probabilities: Mapping, label: str) -> float:
    for key, value in probabilities.items():
        k = key.label if isinstance(key, BlockingConfig) else str(key)
        if k == label:
            return float(value)
    raise DataError(f"missing configuration '{label}' in probability table")


def _table(probabilities: Mapping) -> dict[str, float]:
    return {c.label: _get(probabilities, c.label) for c in ALL_CONFIGS}


def sorkin_epsilon(probabilities: Mapping) -> float:
    """Third-order interference term; exactly zero under the squared rule."""
    p = _table(probabilities)
    return (p["ABC"] - p["AB"] - p["AC"] - p["BC"]
            + p["A"] + p["B"] + p["C"] - p["none"])


def _pair_terms(p: Mapping[str, float]) -> dict[str, float]:
    return {xy: p[xy] - p[xy[0]] - p[xy[1]] + p["none"] for xy in _PAIRS}


@dataclass(frozen=True)
class SorkinResult:
    """Normalized third-order interference statistic with uncertainties."""

    probabilities: dict[str, float]
    sigmas: dict[str, float]
    epsilon: float
    epsilon_err: float
    delta: float
    kappa: float
    kappa_err: float
    counts: dict[str, int] | None = None
    kappa_err_bootstrap: float | None = None

    def to_dict(self) -> dict:
        out = {
            "probabilities": dict(self.probabilities),
            "sigmas": dict(self.sigmas),
            "epsilon": self.epsilon,
            "epsilon_err": self.epsilon_err,
            "delta": self.delta,
            "kappa": self.kappa,
            "kappa_err": self.kappa_err,
        }
        if self.counts is not None:
            out["counts"] = dict(self.counts)
        if self.kappa_err_bootstrap is not None:
            out["kappa_err_bootstrap"] = self.kappa_err_bootstrap
        return out


_EPS_COEFF = {"ABC": 1.0, "AB": -1.0, "AC": -1.0, "BC": -1.0,
              "A": 1.0, "B": 1.0, "C": 1.0, "none": -1.0}


def sorkin_kappa(probabilities: Mapping, sigmas: Mapping, *,
                 counts: Mapping | None = None,
                 bootstrap_seed: int | None = None,
                 bootstrap_resamples: int = 1000) -> SorkinResult:
    """Compute eps, delta and kappa = eps/delta with error propagation.

    Errors are first order in the eight independent per-configuration
    uncertainties.  With ``bootstrap_seed`` the result also carries a
    resampled kappa spread (Gaussian perturbation of the table, seeded).
    """
    p = _table(probabilities)
    s = {c.label: float(_get(sigmas, c.label)) for c in ALL_CONFIGS}

    eps = sorkin_epsilon(p)
    pairs = _pair_terms(p)
    delta = sum(abs(v) for v in pairs.values())
    if delta == 0.0:
        raise NormalizationError(
            "pairwise interference terms vanish; kappa is undefined")
    kappa = eps / delta

    eps_err = math.sqrt(sum((s[k]) ** 2 for k in _EPS_COEFF))

    # d(delta)/dP via the sign of each pair term; d(kappa)/dP by quotient rule.
    ddelta = {lbl: 0.0 for lbl in p}
    for xy, val in pairs.items():
        sgn = math.copysign(1.0, val) if val != 0.0 else 0.0
        ddelta[xy] += sgn
        ddelta[xy[0]] -= sgn
        ddelta[xy[1]] -= sgn
        ddelta["none"] += sgn
    kappa_var = 0.0
    for lbl in p:
        dk = (_EPS_COEFF[lbl] - kappa * ddelta[lbl]) / delta
        kappa_var += (dk * s[lbl]) ** 2
    result = SorkinResult(
        probabilities=p, sigmas=s, epsilon=eps, epsilon_err=eps_err,
        delta=delta, kappa=kappa, kappa_err=math.sqrt(kappa_var),
        counts={k: int(_get(counts, k)) for k in p} if counts is not None else None,
    )

    if bootstrap_seed is not None:
        rng = substream(bootstrap_seed, STREAM_BOOTSTRAP)
        labels = list(p)
        base = np.array([p[l] for l in labels])
        scale = np.array([s[l] for l in labels])
        kappas = np.empty(bootstrap_resamples)
        for i in range(bootstrap_resamples):
            draw = base + rng.normal(0.0, 1.0, base.size) * scale
            table = dict(zip(labels, draw))
            e = sorkin_epsilon(table)
            d = sum(abs(v) for v in _pair_terms(table).values())
            kappas[i] = e / d if d else np.nan
        result = replace(result, kappa_err_bootstrap=float(np.nanstd(kappas)))
    return result


# -- experiment bench ----------------------------------------------------------


@dataclass
class Bench:
    """Source + circuit + detection chain wired for probe measurements.

    ``measure`` supports two shot models: the exact per-photon Bernoulli
    chain reduces to a binomial draw of the analytic click probability
    (used for calibration probes, darks excluded), and ``shots=None``
    returns the noiseless probability itself.  Full Monte Carlo streams are
    the business of :func:`measure_config_probability`.
    """

    source: src.SourceKind
    pump_fiber_mw: float
    circuit: CircuitState
    filter_params: det.FilterParams
    detectors: det.DetectorSystem
    residual_pump_rate_cps: float = 1.0e8
    seed: int = 0

    def state_for(self, blocking: BlockingConfig,
                  codes: Sequence[int] | None = None) -> CircuitState:
        state = self.circuit.with_blocking(blocking)
        if codes is not None:
            state = state.with_codes(codes)
        return state

    def click_probability(self, blocking: BlockingConfig,
                          codes: Sequence[int] | None = None) -> float:
        """Analytic per-photon click probability at the interferometer SPAD."""
        amps = circ.output_amplitude(self.state_for(blocking, codes))
        p_port = abs(amps.interferometer) ** 2
        return p_port * self.filter_params.signal_survival * self.detectors.spads[0].efficiency

    def interferometer_probability(self, blocking: BlockingConfig,
                                   codes: Sequence[int] | None = None) -> float:
        amps = circ.output_amplitude(self.state_for(blocking, codes))
        return abs(amps.interferometer) ** 2

    def analytic_max(self) -> float:
        return circ.analytic_max_probability(self.circuit)

    def measure(self, blocking: BlockingConfig, codes: Sequence[int] | None,
                shots: int | None, rng: np.random.Generator | None = None) -> float:
        """Probe the raw all-chain click rate (counts, or probability if noiseless)."""
        p = self.click_probability(blocking, codes)
        if shots is None:
            return p
        if rng is None:
            raise ParameterError("a noisy measurement needs its generator")
        return float(rng.binomial(int(shots), p))


@dataclass(frozen=True)
class ConfigMeasurement:
    config: str
    clicks: int
    photons_in: int
    duration_s: float
    p_hat: float
    sigma: float


def measure_config_probability(bench: Bench, cfg: BlockingConfig, n_in: int,
                               seed: int | np.random.Generator, *,
                               codes: Sequence[int] | None = None,
                               settle_skip_s: float = 0.0,
                               dark_subtraction: bool = True) -> ConfigMeasurement:
    """Monte Carlo estimate of one blocking configuration's click probability.

    Simulates exactly ``n_in`` photons through source, circuit, filter and
    the interferometer SPAD.  ``p_hat = (clicks - D*T)/n_in`` when dark
    subtraction is on; the uncertainty combines binomial counting and the
    Poisson dark term at first order.
    """
    if n_in <= 0:
        raise ParameterError("photon budget must be positive")
    seed_is_rng = isinstance(seed, np.random.Generator)
    rng_src = seed if seed_is_rng else substream(seed, STREAM_SOURCE)
    rng_circ = seed if seed_is_rng else substream(seed, STREAM_CIRCUIT)
    rng_filt = seed if seed_is_rng else substream(seed, STREAM_FILTER)
    rng_det = seed if seed_is_rng else substream(seed, STREAM_DETECTOR)

    photons = src.generate_photons(bench.source, bench.pump_fiber_mw, n_in,
                                   rng_src, skip_s=settle_skip_s)
    state = bench.state_for(cfg, codes)
    routed = circ.transmit_stream(state, photons, rng_circ)
    filtered = det.apply_filter(routed[circ.PORT_INTERFEROMETER],
                                bench.residual_pump_rate_cps,
                                bench.filter_params, rng_filt)
    clicks_series = det.spad_detect(filtered, bench.detectors.spads[0], rng_det)
    clicks = len(clicks_series)
    duration_s = photons.duration_s

    spad = bench.detectors.spads[0]
    dark_mean = spad.dark_rate_cps * duration_s
    raw = clicks / n_in
    p_hat = (clicks - dark_mean) / n_in if dark_subtraction else raw
    var = clicks * max(1.0 - raw, 0.0) + dark_mean
    sigma = math.sqrt(var) / n_in
    return ConfigMeasurement(cfg.label, clicks, n_in, duration_s, p_hat, sigma)


def run_triple_test(bench: Bench, n_per_config: int, seed: int, *,
                    codes: Sequence[int] | None = None,
                    settle_skip_s: float = 0.0,
                    bootstrap_seed: int | None = None) -> tuple[SorkinResult, list[ConfigMeasurement]]:
    """Measure all eight blocking configurations and form the kappa statistic.

    kappa is computed from the raw per-configuration estimates (it is
    invariant under the additive dark/leak pedestal); the reported
    probability table has the measured all-blocked rate subtracted, which
    is the hardware-faithful background reference.
    """
    measurements = []
    for k, cfg in enumerate(ALL_CONFIGS):
        m = measure_config_probability(
            bench, cfg, n_per_config, substream(seed, STREAM_EXPERIMENT, k),
            codes=codes, settle_skip_s=settle_skip_s, dark_subtraction=False)
        measurements.append(m)
    raw_p = {m.config: m.p_hat for m in measurements}
    sig = {m.config: m.sigma for m in measurements}
    counts = {m.config: m.clicks for m in measurements}
    result = sorkin_kappa(raw_p, sig, counts=counts, bootstrap_seed=bootstrap_seed)

    # presentation: reference the measured empty-configuration rate
    p_empty = raw_p["none"]
    shifted = {k: v - p_empty for k, v in result.probabilities.items()}
    return replace(result, probabilities=shifted), measurements


# -- phase calibration ----------------------------------------------------------


@dataclass(frozen=True)
class CalibrationResult:
    codes: tuple[int, int]
    achieved_fraction: float
    recovered_offsets_rad: tuple[float, float]
    crosstalk_used: tuple[tuple[float, ...], ...]
    probes_used: int
    scan_trace: list

    def to_dict(self) -> dict:
        return {
            "codes": list(self.codes),
            "achieved_fraction": self.achieved_fraction,
            "recovered_offsets_rad": list(self.recovered_offsets_rad),
            "crosstalk_used": [list(r) for r in self.crosstalk_used],
            "probes_used": self.probes_used,
            "scan_trace": [[list(c), v] for c, v in self.scan_trace],
        }


def _compensation_matrix(heaters) -> np.ndarray:
    n = len(heaters)
    m = np.eye(n)
    for k, h in enumerate(heaters):
        for j in range(n):
            if j != k:
                m[k, j] = h.crosstalk_row[j]
    return m


def calibrate_phases(bench: Bench, budget: int = 2048, *,
                     grid: int = 16, shots_per_point: int | None = None) -> CalibrationResult:
    """Find DAC codes maximizing the all-open interferometer click rate.

    Stage 1 scans a grid x grid lattice of effective heater powers over one
    full 2-pi period per shifter; stage 2 runs coordinate ascent with
    three-point quadratic refinement until the power step falls below the
    DAC resolution or the probe budget is exhausted.  Crosstalk is
    compensated by scanning in effective-power space u = (I + X) P, so the
    two axes decouple.

    ``shots_per_point=None`` probes the noiseless click probability; an
    integer draws binomial counts at that many source photons per probe.
    """
    if budget < grid * grid:
        raise BudgetError(
            f"budget {budget} cannot cover one {grid}x{grid} grid pass")
    heaters = bench.circuit.heaters
    drive = bench.circuit.drive
    p2pi = heaters[0].p2pi_mw
    rng = substream(bench.seed, STREAM_CALIBRATION)
    comp = np.linalg.inv(_compensation_matrix(heaters))
    all_open = BlockingConfig.from_label("ABC")

    probes = 0
    trace: list = []

    def codes_at(u: np.ndarray) -> tuple[int, int]:
        # effective power -> physical power -> nearest DAC codes
        p_phys = comp @ u
        return tuple(circ.code_for_power(heaters[k], drive, max(float(p_phys[k]), 0.0))
                     for k in range(2))

    def probe(u: np.ndarray) -> float:
        nonlocal probes
        if probes >= budget:
            raise BudgetError("probe budget exhausted")
        probes += 1
        value = bench.measure(all_open, codes_at(u), shots_per_point, rng)
        trace.append((codes_at(u), float(value)))
        return float(value)

    # scan one period offset a full period up so compensation stays feasible
    base = np.array([p2pi, p2pi])
    step0 = p2pi / grid
    best_u, best_v = None, -1.0
    for i in range(grid):
        for j in range(grid):
            u = base + np.array([i, j]) * step0
            v = probe(u)
            if v > best_v:
                best_u, best_v = u, v
    if best_v <= 0.0:
        raise SignalError("all calibration probes returned zero rate")

    # phase step below the DAC quantization is as fine as the hardware resolves
    min_step_mw = circ.phase_quantization_step(heaters[0], drive) * p2pi / (2.0 * math.pi)
    step = step0
    u = best_u.copy()
    value = best_v
    while step > min_step_mw and probes + 4 <= budget:
        improved = False
        for axis in range(2):
            lo = u.copy(); lo[axis] -= step
            hi = u.copy(); hi[axis] += step
            try:
                f_lo, f_hi = probe(lo), probe(hi)
            except BudgetError:
                break
            f0 = value
            cand_u, cand_v = u, f0
            for uu, vv in ((lo, f_lo), (hi, f_hi)):
                if vv > cand_v:
                    cand_u, cand_v = uu, vv
            denom = f_lo - 2.0 * f0 + f_hi
            if denom < 0.0 and probes < budget:
                shift = 0.5 * step * (f_lo - f_hi) / denom
                vert = u.copy()
                vert[axis] += min(max(shift, -step), step)
                f_v = probe(vert)
                if f_v > cand_v:
                    cand_u, cand_v = vert, f_v
            if cand_v > value:
                u, value = cand_u.copy(), cand_v
                improved = True
        if not improved:
            step /= 2.0
    final_codes = codes_at(u)

    truth = bench.interferometer_probability(all_open, final_codes)
    achieved = truth / circ.analytic_max_probability(bench.circuit)
    recovered = tuple(
        float((-2.0 * math.pi * u[k] / p2pi) % (2.0 * math.pi)) for k in range(2))
    xt = tuple(tuple(h.crosstalk_row) for h in heaters)
    return CalibrationResult(final_codes, float(achieved), recovered, xt,
                             probes, trace)


# -- crosstalk estimation --------------------------------------------------------


_SHIFTER_PATH = {0: "B", 1: "C"}


def _fit_fringe_phase(known_phase: np.ndarray, y: np.ndarray) -> float:
    """Least-squares phase of y = a + b cos(known + theta); exact for clean data."""
    basis = np.column_stack([np.ones_like(known_phase),
                             np.cos(known_phase), np.sin(known_phase)])
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    a, bc, bs = coef
    amp = math.hypot(bc, bs)
    if amp < 1e-12 or (a > 0 and amp / a < 1e-6):
        raise FitError("insufficient fringe contrast for a phase fit")
    # y ~ a + amp cos(known + theta) with bc = amp cos(theta), bs = -amp sin(theta)
    return math.atan2(-bs, bc)


def estimate_crosstalk(bench: Bench, *, probe_points: int = 5,
                       scan_points: int = 16,
                       shots_per_point: int | None = None) -> np.ndarray:
    """Estimate the thermal crosstalk matrix from fringe-phase drifts.

    For each ordered shifter pair (victim i, aggressor j): open path A and
    the victim's path, block the third; scan the victim over one 2-pi power
    period at several fixed aggressor powers; the fitted fringe phase moves
    as (2 pi / P_2pi) X_ij P_j, so a linear fit of phase against aggressor
    power yields X_ij.
    """
    heaters = bench.circuit.heaters
    drive = bench.circuit.drive
    p2pi = heaters[0].p2pi_mw
    rng = substream(bench.seed, STREAM_CALIBRATION, 1)
    x_hat = np.zeros((2, 2))

    for victim in range(2):
        aggressor = 1 - victim
        open_paths = frozenset({"A", _SHIFTER_PATH[victim]})
        blocking = BlockingConfig(open_paths)
        agg_powers = np.linspace(0.0, 2.0 * p2pi, probe_points)
        scan_powers = np.linspace(0.0, p2pi, scan_points, endpoint=False)

        phases = np.empty(probe_points)
        realized_agg = np.empty(probe_points)
        for a_idx, p_agg in enumerate(agg_powers):
            y = np.empty(scan_points)
            known = np.empty(scan_points)
            for s_idx, p_vic in enumerate(scan_powers):
                powers = np.zeros(2)
                powers[victim] = p_vic
                powers[aggressor] = p_agg
                codes = tuple(circ.code_for_power(heaters[k], drive, powers[k])
                              for k in range(2))
                drive_now = drive.with_codes(codes)
                # the controller knows its quantized powers exactly
                known[s_idx] = (2.0 * math.pi / p2pi) * circ.heater_power_mw(
                    heaters[victim], drive_now, victim)
                realized_agg[a_idx] = circ.heater_power_mw(
                    heaters[aggressor], drive_now, aggressor)
                y[s_idx] = bench.measure(blocking, codes, shots_per_point, rng)
            phases[a_idx] = _fit_fringe_phase(known, y)
        phases = np.unwrap(phases)
        slope = np.polyfit(realized_agg, phases, 1)[0]
        x_hat[victim, aggressor] = slope * p2pi / (2.0 * math.pi)
    return x_hat
