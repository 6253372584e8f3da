"""Reconfigurable three-path photonic circuit.

Topology (single input, left to right):

    input -> 1-to-3 divider (33/66 coupler, then 50/50) -> paths A, B, C
    each path -> MZI blocking switch -> thermo-optic phase shifter (B, C only;
    A is the phase reference) -> 3-to-1 combiner (time-reversed divider)
    -> single interferometer output

The bottom path (C) doubles as the autocorrelation tap: blocking its switch
routes the light to a balanced coupler feeding two tap outputs instead of
the combiner.  Insertion loss is lumped into one end-to-end amplitude
factor.  Both the divider and the combiner are modeled as 3-mode unitaries
built from two directional couplers, so probability is conserved exactly
over all output and dump ports when the lumped loss is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigurationError, ParameterError
from .rng import as_generator, STREAM_CIRCUIT, STREAM_FABRICATION
from .timetags import TimeTagSeries

PATHS = ("A", "B", "C")

# Output port names, in channel order used by the detector wiring.
PORT_INTERFEROMETER = "interferometer"
PORT_TAP_1 = "tap_1"
PORT_TAP_2 = "tap_2"


@dataclass(frozen=True)
class Coupler:
    """Directional coupler with power cross ratio r.

    Transfer matrix [[sqrt(1-r), i sqrt(r)], [i sqrt(r), sqrt(1-r)]].
    ``ratio_error`` is the fabrication tolerance as a fraction of r; realized
    parts satisfy |realized - nominal| <= ratio_error * nominal.
    """

    cross_ratio: float
    ratio_error: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.cross_ratio <= 1.0:
            raise ParameterError("cross_ratio must lie in [0, 1]")
        if not 0.0 <= self.ratio_error < 1.0:
            raise ParameterError("ratio_error must lie in [0, 1)")

    def perturbed(self, unit_offset: float) -> "Coupler":
        """Realized coupler at a relative offset in [-1, 1] of the tolerance."""
        if not -1.0 <= unit_offset <= 1.0:
            raise ParameterError("unit_offset must lie in [-1, 1]")
        r = self.cross_ratio * (1.0 + unit_offset * self.ratio_error)
        return Coupler(min(max(r, 0.0), 1.0), self.ratio_error)


def coupler_matrix(c: Coupler) -> np.ndarray:
    r = c.cross_ratio
    t = math.sqrt(1.0 - r)
    k = 1j * math.sqrt(r)
    return np.array([[t, k], [k, t]], dtype=complex)


class SwitchState(Enum):
    OPEN = "open"
    BLOCKED = "blocked"


@dataclass(frozen=True)
class Switch:
    """MZI blocking switch (internal shifters absorbed into the state)."""

    state: SwitchState = SwitchState.OPEN
    extinction_db: float = 30.0
    settle_time_ms: float = 100.0

    def __post_init__(self):
        if self.extinction_db < 30.0:
            raise ParameterError("extinction_db must be >= 30")
        if self.settle_time_ms < 0:
            raise ParameterError("settle_time_ms must be >= 0")


def path_transmission(sw: Switch) -> float:
    """Amplitude transmitted into the interferometer arm.

    Open: 1.  Blocked: sqrt(10^(-ER/10)), the residual power leakage at the
    stated extinction ratio (exactly 0 for ER = inf).
    """
    if sw.state is SwitchState.OPEN:
        return 1.0
    if math.isinf(sw.extinction_db):
        return 0.0
    return math.sqrt(10.0 ** (-sw.extinction_db / 10.0))


def blocked_branch_amplitude(sw: Switch) -> float:
    """Amplitude leaving through the switch's drop branch when blocked."""
    if sw.state is SwitchState.OPEN:
        return 0.0
    leak = 0.0 if math.isinf(sw.extinction_db) else 10.0 ** (-sw.extinction_db / 10.0)
    return math.sqrt(1.0 - leak)


@dataclass(frozen=True)
class Heater:
    """Thermo-optic phase shifter driven by a DAC current channel.

    phase = phase_offset + (2 pi / p2pi_mw) * (P_self + sum_j X[j] * P_j)
    with P = I^2 R.  ``crosstalk_row`` holds the thermal coupling X to every
    shifter (own entry zero).
    """

    resistance_ohm: float = 90.0
    p2pi_mw: float = 10.0
    phase_offset_rad: float = 0.0
    crosstalk_row: tuple[float, ...] = (0.0, 0.0)

    def __post_init__(self):
        if not 70.0 <= self.resistance_ohm <= 110.0:
            raise ParameterError("resistance_ohm must lie in [70, 110]")
        if not 0.0 < self.p2pi_mw <= 10.0:
            raise ParameterError("p2pi_mw must lie in (0, 10]")


@dataclass(frozen=True)
class HeaterDrive:
    """Eight-channel current DAC state.

    Channels 0 and 1 drive the interferometer shifters on paths B and C;
    the remaining channels belong to the MZI-internal shifters, which the
    model absorbs into the switch state enum.
    """

    codes: tuple[int, ...] = (0, 0, 0, 0, 0, 0, 0, 0)
    current_resolution_ua: float = 23.0
    max_current_ma: float = 23.0

    def __post_init__(self):
        if len(self.codes) != 8:
            raise ParameterError("drive carries exactly 8 channel codes")
        if self.current_resolution_ua <= 0 or self.max_current_ma <= 0:
            raise ParameterError("current scale must be positive")
        top = self.max_code
        for k, c in enumerate(self.codes):
            if not 0 <= c <= top:
                raise ParameterError(
                    f"channel {k} code {c} outside [0, {top}] "
                    f"(max current {self.max_current_ma:g} mA)")

    @property
    def max_code(self) -> int:
        return int(self.max_current_ma * 1000.0 / self.current_resolution_ua)

    def current_a(self, channel: int) -> float:
        return self.codes[channel] * self.current_resolution_ua * 1e-6

    def with_codes(self, codes: Iterable[int]) -> "HeaterDrive":
        new = tuple(int(c) for c in codes)
        if len(new) < 8:
            new = new + self.codes[len(new):]
        return replace(self, codes=new)


def heater_power_mw(heater: Heater, drive: HeaterDrive, channel: int) -> float:
    i = drive.current_a(channel)
    return i * i * heater.resistance_ohm * 1000.0


def max_heater_power(max_current_ma: float, resistance_ohm: float) -> float:
    """Largest dissipated power in mW at the drive's compliance current."""
    i = max_current_ma * 1e-3
    return i * i * resistance_ohm * 1000.0


def heater_phases(heaters: tuple[Heater, ...], drive: HeaterDrive) -> np.ndarray:
    """Phases of all shifters under a drive, including thermal crosstalk."""
    powers = np.array([heater_power_mw(h, drive, k) for k, h in enumerate(heaters)])
    phases = np.empty(len(heaters))
    for k, h in enumerate(heaters):
        row = np.asarray(h.crosstalk_row, dtype=float)
        if row.size != len(heaters):
            raise ConfigurationError(
                f"heater {k} crosstalk row has {row.size} entries, expected {len(heaters)}")
        coupled = powers[k] + float(row @ powers) - row[k] * powers[k]
        phases[k] = h.phase_offset_rad + 2.0 * math.pi * coupled / h.p2pi_mw
    return phases


def code_for_power(heater: Heater, drive: HeaterDrive, power_mw: float) -> int:
    """Nearest DAC code dissipating a target power in this heater."""
    if power_mw < 0:
        raise ParameterError("power must be >= 0")
    i_a = math.sqrt(power_mw / 1000.0 / heater.resistance_ohm)
    code = round(i_a / (drive.current_resolution_ua * 1e-6))
    return min(max(code, 0), drive.max_code)


def phase_quantization_step(heater: Heater, drive: HeaterDrive,
                            power_mw: float | None = None) -> float:
    """Phase change between adjacent DAC codes near an operating power.

    Defaults to the middle of the 2-pi power range (the phase-pi point),
    where the scan spends its time.
    """
    if power_mw is None:
        power_mw = heater.p2pi_mw / 2.0
    code = code_for_power(heater, drive, power_mw)
    code = max(code, 1)
    lo = heater_power_mw(heater, HeaterDrive((code - 1,) * 8,
                                             drive.current_resolution_ua,
                                             drive.max_current_ma), 0)
    hi = heater_power_mw(heater, HeaterDrive((code,) * 8,
                                             drive.current_resolution_ua,
                                             drive.max_current_ma), 0)
    return 2.0 * math.pi * (hi - lo) / heater.p2pi_mw


@dataclass(frozen=True)
class BlockingConfig:
    """Which interferometer paths are open."""

    open_paths: frozenset[str]

    def __post_init__(self):
        bad = self.open_paths - set(PATHS)
        if bad:
            raise ParameterError(f"unknown paths {sorted(bad)}; valid paths are {PATHS}")

    @staticmethod
    def from_label(label: str) -> "BlockingConfig":
        if label in ("none", "0", ""):
            return BlockingConfig(frozenset())
        return BlockingConfig(frozenset(label))

    @property
    def label(self) -> str:
        return "".join(p for p in PATHS if p in self.open_paths) or "none"

    def is_open(self, path: str) -> bool:
        return path in self.open_paths


#: Canonical measurement order for the eight blocking configurations.
ALL_CONFIGS = tuple(BlockingConfig.from_label(lbl) for lbl in
                    ("none", "A", "B", "C", "AB", "AC", "BC", "ABC"))


@dataclass(frozen=True)
class CircuitState:
    """Complete circuit configuration: realized parts plus runtime settings.

    ``leak_phases_rad`` are the unknown (scenario-fixed) phases carried by
    blocked-path leakage light.  ``divider``/``combiner`` hold the realized
    coupler pairs (33/66 first, 50/50 second).
    """

    blocking: BlockingConfig
    drive: HeaterDrive
    divider: tuple[Coupler, Coupler]
    combiner: tuple[Coupler, Coupler]
    tap_coupler: Coupler
    switches: tuple[Switch, Switch, Switch]
    heaters: tuple[Heater, Heater]
    leak_phases_rad: tuple[float, float, float] = (0.0, 0.0, 0.0)
    insertion_loss_db: float = 2.0

    def __post_init__(self):
        if self.insertion_loss_db < 0:
            raise ParameterError("insertion_loss_db must be >= 0")
        states = tuple(
            SwitchState.OPEN if self.blocking.is_open(p) else SwitchState.BLOCKED
            for p in PATHS)
        fixed = tuple(replace(sw, state=st) for sw, st in zip(self.switches, states))
        object.__setattr__(self, "switches", fixed)

    @property
    def loss_amplitude(self) -> float:
        return 10.0 ** (-self.insertion_loss_db / 20.0)

    def with_blocking(self, blocking: BlockingConfig) -> "CircuitState":
        return replace(self, blocking=blocking)

    def with_codes(self, codes: Iterable[int]) -> "CircuitState":
        return replace(self, drive=self.drive.with_codes(codes))

    def fabrication_echo(self) -> dict:
        """Realized per-scenario values, echoed into reports."""
        return {
            "divider_cross_ratios": [c.cross_ratio for c in self.divider],
            "combiner_cross_ratios": [c.cross_ratio for c in self.combiner],
            "tap_cross_ratio": self.tap_coupler.cross_ratio,
            "phase_offsets_rad": [h.phase_offset_rad for h in self.heaters],
            "leak_phases_rad": list(self.leak_phases_rad),
        }


def _divider_unitary(first: Coupler, second: Coupler) -> np.ndarray:
    """3-mode unitary of the 1-to-3 divider.

    Mode order (bus, A, C): the 33/66 coupler taps path A off the bus, the
    50/50 coupler splits the rest into B (bus through) and C (cross).
    """
    u1 = np.eye(3, dtype=complex)
    u1[np.ix_((0, 1), (0, 1))] = coupler_matrix(first)
    u2 = np.eye(3, dtype=complex)
    u2[np.ix_((0, 2), (0, 2))] = coupler_matrix(second)
    return u2 @ u1


_PATH_MODES = {"A": 1, "B": 0, "C": 2}


def divider_amplitudes(first: Coupler, second: Coupler) -> np.ndarray:
    """Path amplitudes (A, B, C) for unit input on the divider bus."""
    u = _divider_unitary(first, second)
    return np.array([u[_PATH_MODES[p], 0] for p in PATHS])


def combiner_amplitudes(state: CircuitState) -> np.ndarray:
    """Per-path coupling amplitudes into the combined output port.

    The combiner is the time-reverse of a divider built from its own
    realized couplers: its transfer is the conjugate transpose, so path p
    couples into the output with conj(divider amplitude of p).
    """
    return np.conj(divider_amplitudes(*state.combiner))


@dataclass(frozen=True)
class OutputAmplitudes:
    """Field amplitudes at every circuit exit for unit input."""

    interferometer: complex
    tap_1: complex
    tap_2: complex
    combiner_dumps: tuple[complex, complex]
    switch_dumps: tuple[complex, complex]  # paths A and B drop branches

    def port_probabilities(self) -> dict[str, float]:
        return {
            PORT_INTERFEROMETER: abs(self.interferometer) ** 2,
            PORT_TAP_1: abs(self.tap_1) ** 2,
            PORT_TAP_2: abs(self.tap_2) ** 2,
        }

    def total_probability(self) -> float:
        parts = (self.interferometer, self.tap_1, self.tap_2,
                 *self.combiner_dumps, *self.switch_dumps)
        return float(sum(abs(a) ** 2 for a in parts))


def output_amplitude(state: CircuitState) -> OutputAmplitudes:
    """Propagate unit input amplitude through the configured circuit.

    Path phases: A is the reference; B and C carry the shifter phases from
    DAC channels 0 and 1.  Blocked-path leakage keeps propagating with the
    scenario's fixed leak phase.  The lumped insertion loss multiplies every
    photon exit (not the dump bookkeeping, which exists for conservation
    checks and is reported lossless).
    """
    a_div = divider_amplitudes(*state.divider)
    phases = heater_phases(state.heaters, state.drive)
    path_phase = {"A": 0.0, "B": float(phases[0]), "C": float(phases[1])}

    into_comb = np.zeros(3, dtype=complex)
    switch_dumps = []
    tap_in = 0.0 + 0.0j
    for k, p in enumerate(PATHS):
        sw = state.switches[k]
        t = path_transmission(sw)
        if sw.state is SwitchState.BLOCKED:
            t = t * np.exp(1j * state.leak_phases_rad[k])
        into_comb[k] = a_div[k] * t * np.exp(1j * path_phase[p])
        branch = blocked_branch_amplitude(sw) * a_div[k]
        if p == "C":
            # tap light leaves before the C shifter, so no heater phase
            tap_in = branch
        elif sw.state is SwitchState.BLOCKED:
            switch_dumps.append(branch)
        else:
            switch_dumps.append(0.0 + 0.0j)

    u_comb = _divider_unitary(*state.combiner).conj().T
    mode_in = np.zeros(3, dtype=complex)
    for k, p in enumerate(PATHS):
        mode_in[_PATH_MODES[p]] = into_comb[k]
    mode_out = u_comb @ mode_in

    tap_m = coupler_matrix(state.tap_coupler)
    tap_out = tap_m @ np.array([tap_in, 0.0], dtype=complex)

    loss = state.loss_amplitude
    return OutputAmplitudes(
        interferometer=complex(mode_out[0] * loss),
        tap_1=complex(tap_out[0] * loss),
        tap_2=complex(tap_out[1] * loss),
        combiner_dumps=(complex(mode_out[1]), complex(mode_out[2])),
        switch_dumps=tuple(switch_dumps),
    )


def analytic_max_probability(state: CircuitState) -> float:
    """Largest all-open interferometer output probability over shifter phases.

    The coupler construction makes every per-path divider*combiner product
    real and non-negative, so the maximum is (sum of magnitudes)^2 times the
    lumped loss.
    """
    a_div = divider_amplitudes(*state.divider)
    b_comb = combiner_amplitudes(state)
    mags = np.abs(a_div * b_comb)
    return float((mags.sum() * state.loss_amplitude) ** 2)


def transmit_stream(state: CircuitState, photons: TimeTagSeries,
                    seed: int | np.random.Generator) -> dict[str, TimeTagSeries]:
    """Route emitted photons through the circuit (Bernoulli per photon).

    Returns single-channel series per output port: interferometer on
    channel 0, tap outputs on channels 1 and 2.  Photons that exit through
    dump ports are dropped.
    """
    rng = as_generator(seed, STREAM_CIRCUIT)
    amps = output_amplitude(state)
    probs = amps.port_probabilities()
    p0 = probs[PORT_INTERFEROMETER]
    p1 = probs[PORT_TAP_1]
    p2 = probs[PORT_TAP_2]
    if p0 + p1 + p2 > 1.0 + 1e-9:
        raise ConfigurationError("port probabilities exceed 1; check the circuit state")

    u = rng.random(len(photons))
    masks = {
        PORT_INTERFEROMETER: u < p0,
        PORT_TAP_1: (u >= p0) & (u < p0 + p1),
        PORT_TAP_2: (u >= p0 + p1) & (u < p0 + p1 + p2),
    }
    out = {}
    for channel, (port, mask) in enumerate(masks.items()):
        t = photons.times_ps[mask]
        out[port] = TimeTagSeries(t, np.full(t.size, channel, np.uint8),
                                  photons.duration_ps, "emitted",
                                  photons.channel_count)
    return out


@dataclass(frozen=True)
class CircuitParams:
    """Scenario-level fabrication and drive parameters."""

    ratio_error: float = 0.01
    extinction_db: float = 30.0
    settle_time_ms: float = 100.0
    insertion_loss_db: float = 2.0
    resistance_ohm: float = 90.0
    p2pi_mw: float = 10.0
    crosstalk: float = 0.05
    phase_offset_policy: str = "random"  # or "zero"
    current_resolution_ua: float = 23.0
    max_current_ma: float = 23.0

    def __post_init__(self):
        if self.phase_offset_policy not in ("random", "zero"):
            raise ParameterError("phase_offset_policy must be 'random' or 'zero'")
        if not 0.0 <= self.crosstalk < 1.0:
            raise ParameterError("crosstalk must lie in [0, 1)")


NOMINAL_FIRST_RATIO = 1.0 / 3.0
NOMINAL_SECOND_RATIO = 0.5


def build_circuit(params: CircuitParams, seed: int | np.random.Generator) -> CircuitState:
    """Sample one fabricated circuit instance for a scenario seed.

    Coupler ratios land uniformly inside their tolerance band; unknown
    fabrication phase offsets are uniform on [0, 2 pi) (policy "random");
    blocked-path leakage phases are uniform on [0, 2 pi) and then fixed for
    the scenario's lifetime.
    """
    rng = as_generator(seed, STREAM_FABRICATION)

    def sample(nominal: float) -> Coupler:
        return Coupler(nominal, params.ratio_error).perturbed(rng.uniform(-1.0, 1.0))

    divider = (sample(NOMINAL_FIRST_RATIO), sample(NOMINAL_SECOND_RATIO))
    combiner = (sample(NOMINAL_FIRST_RATIO), sample(NOMINAL_SECOND_RATIO))
    tap = sample(NOMINAL_SECOND_RATIO)

    if params.phase_offset_policy == "random":
        offsets = rng.uniform(0.0, 2.0 * math.pi, 2)
    else:
        offsets = np.zeros(2)
        rng.uniform(0.0, 2.0 * math.pi, 2)  # keep the draw layout stable
    leak_phases = tuple(rng.uniform(0.0, 2.0 * math.pi, 3))

    x = params.crosstalk
    heaters = tuple(
        Heater(params.resistance_ohm, params.p2pi_mw, float(offsets[k]),
               crosstalk_row=(0.0, x) if k == 0 else (x, 0.0))
        for k in range(2))
    switches = tuple(Switch(SwitchState.OPEN, params.extinction_db,
                            params.settle_time_ms) for _ in range(3))
    drive = HeaterDrive(current_resolution_ua=params.current_resolution_ua,
                        max_current_ma=params.max_current_ma)
    return CircuitState(
        blocking=BlockingConfig.from_label("ABC"),
        drive=drive,
        divider=divider,
        combiner=combiner,
        tap_coupler=tap,
        switches=switches,
        heaters=heaters,
        insertion_loss_db=params.insertion_loss_db,
        leak_phases_rad=leak_phases,
    )
