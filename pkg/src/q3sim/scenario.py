"""Scenario files: JSON in, validated typed configuration out.

A scenario is one experiment plus every knob of the modeled hardware.
Every key is optional except ``experiment``; defaults reproduce the flight
design values.  Unknown keys anywhere are rejected so typos cannot
silently fall back to defaults.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any

from . import detection as det
from . import mission as mis
from . import source as src
from .circuit import CircuitParams
from .errors import ValidationError

EXPERIMENTS = ("g2", "born", "calibrate", "passes", "power")

_STATIONS = {"berlin": mis.BERLIN, "longyearbyen": mis.LONGYEARBYEN}


class _Section:
    """Typed, bounds-checked access to one nested dict; rejects leftovers."""

    def __init__(self, data: dict, path: str):
        if not isinstance(data, dict):
            raise ValidationError(path, "expected an object")
        self.data = dict(data)
        self.path = path

    def _field(self, name: str) -> str:
        return f"{self.path}.{name}" if self.path else name

    def take(self, name: str, default, *, lo=None, hi=None, allow_inf=False,
             choices=None, integer=False):
        if name not in self.data:
            return default
        value = self.data.pop(name)
        field = self._field(name)
        if choices is not None:
            if value not in choices:
                raise ValidationError(field, f"must be one of {sorted(choices)}")
            return value
        if isinstance(value, str) and allow_inf and value.lower() in ("inf", "infinity"):
            value = math.inf
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(field, "must be a number")
        if integer:
            if value != int(value):
                raise ValidationError(field, "must be an integer")
            value = int(value)
        else:
            value = float(value)
        if lo is not None and value < lo:
            raise ValidationError(field, f"must lie in [{lo:g}, {'inf' if hi is None else format(hi, 'g')}]")
        if hi is not None and value > hi and not (allow_inf and math.isinf(value)):
            raise ValidationError(field, f"must lie in [{0 if lo is None else format(lo, 'g')}, {hi:g}]")
        return value

    def take_bool(self, name: str, default: bool) -> bool:
        if name not in self.data:
            return default
        value = self.data.pop(name)
        if not isinstance(value, bool):
            raise ValidationError(self._field(name), "must be true or false")
        return value

    def take_raw(self, name: str, default=None):
        return self.data.pop(name, default)

    def subsection(self, name: str) -> "_Section":
        return _Section(self.data.pop(name, {}), self._field(name))

    def finish(self) -> None:
        if self.data:
            unknown = sorted(self.data)
            raise ValidationError(self._field(unknown[0]), "unknown key")


@dataclass(frozen=True)
class RunParams:
    duration_s: float = 1.0
    photons_per_config: int = 100_000
    g2_window_ns: float = 100.0
    g2_bin_ps: int = 1000
    calibration_budget: int = 2048
    calibration_shots: int | None = 100_000
    calibration_grid: int = 16
    settle_windows: float = 3.0
    estimate_crosstalk: bool = False
    bootstrap_seed: int | None = None


@dataclass(frozen=True)
class MissionParams:
    orbit: mis.OrbitSpec
    station: mis.GroundStation
    span_days: float
    duty_cycle: float
    budget: mis.PowerBudget


@dataclass(frozen=True)
class Scenario:
    experiment: str
    seed: int
    laser: src.PumpLaser
    pump_current_ma: float
    source: src.SourceKind
    circuit_params: CircuitParams
    heater_codes: tuple[int, int] | None
    filter_params: det.FilterParams
    spad: det.SpadParams
    residual_pump_rate_cps: float
    timebin_resolution_ps: float
    run: RunParams
    mission: MissionParams
    echo: dict

    @property
    def pump_fiber_mw(self) -> float:
        return src.pump_power(self.laser, self.pump_current_ma)[1]

    def detectors(self) -> det.DetectorSystem:
        return det.DetectorSystem.uniform(self.spad)


def _parse_laser(sec: _Section) -> src.PumpLaser:
    laser = src.PumpLaser(
        threshold_current_ma=sec.take("threshold_current_ma", 20.0, lo=0.0),
        slope_mw_per_ma=sec.take("slope_mw_per_ma", 30.0 / 45.0, lo=1e-6),
        max_current_ma=sec.take("max_current_ma", 150.0, lo=1e-3),
        fiber_coupling=sec.take("fiber_coupling", 0.5, lo=1e-9, hi=1.0),
        current_stability_ua=sec.take("current_stability_ua", 5.0, lo=0.0),
    )
    sec.finish()
    return laser


def _parse_source(sec: _Section) -> tuple[src.SourceKind, float]:
    kind = sec.take("kind", "two_level",
                    choices=("two_level", "weak_coherent_cw", "weak_coherent_pulsed"))
    pump_ma = sec.take("pump_current_ma", 65.0, lo=0.0)
    if kind == "two_level":
        emitter = src.EmitterParams(
            lifetime_tau1_ns=sec.take("lifetime_tau1_ns", 3.0, lo=1e-3),
            saturation_power_mw=sec.take("saturation_power_mw", 1.0, lo=1e-9),
            max_emission_rate_cps=sec.take("max_emission_rate_cps", 5.0e6, lo=1.0),
            background_fraction=sec.take("background_fraction", 0.05, lo=0.0, hi=0.999),
            wavelength_nm=sec.take("wavelength_nm", 785.0, lo=700.0 + 1e-9),
        )
        out: src.SourceKind = src.TwoLevelEmitter(emitter)
    elif kind == "weak_coherent_cw":
        out = src.WeakCoherentCW(sec.take("mean_rate_cps", 1.0e6, lo=1e-3))
    else:
        out = src.WeakCoherentPulsed(
            rep_rate_hz=sec.take("rep_rate_hz", 1.0e6, lo=1e-3),
            mean_photon_number=sec.take("mean_photon_number", 0.1, lo=1e-9),
        )
    sec.finish()
    return out, pump_ma


def _parse_circuit(sec: _Section) -> tuple[CircuitParams, tuple[int, int] | None]:
    params = CircuitParams(
        ratio_error=sec.take("ratio_error", 0.01, lo=0.0, hi=0.999),
        extinction_db=sec.take("extinction_db", 30.0, lo=30.0, allow_inf=True),
        settle_time_ms=sec.take("settle_time_ms", 100.0, lo=0.0),
        insertion_loss_db=sec.take("insertion_loss_db", 2.0, lo=0.0),
        resistance_ohm=sec.take("resistance_ohm", 90.0, lo=70.0, hi=110.0),
        p2pi_mw=sec.take("p2pi_mw", 10.0, lo=1e-6, hi=10.0),
        crosstalk=sec.take("crosstalk", 0.05, lo=0.0, hi=0.999),
        phase_offset_policy=sec.take("phase_offset_policy", "random",
                                     choices=("random", "zero")),
        current_resolution_ua=sec.take("current_resolution_ua", 23.0, lo=1e-3),
        max_current_ma=sec.take("max_current_ma", 23.0, lo=1e-3),
    )
    codes_raw = sec.take_raw("heater_codes")
    codes = None
    if codes_raw is not None:
        if (not isinstance(codes_raw, list) or len(codes_raw) != 2
                or not all(isinstance(c, int) and not isinstance(c, bool) for c in codes_raw)):
            raise ValidationError(f"{sec.path}.heater_codes",
                                  "must be a list of two integer DAC codes")
        max_code = int(params.max_current_ma * 1000.0 / params.current_resolution_ua)
        if not all(0 <= c <= max_code for c in codes_raw):
            raise ValidationError(f"{sec.path}.heater_codes",
                                  f"codes must lie in [0, {max_code}]")
        codes = (codes_raw[0], codes_raw[1])
    sec.finish()
    return params, codes


def _parse_filter(sec: _Section) -> det.FilterParams:
    params = det.FilterParams(
        pump_suppression_db=sec.take("pump_suppression_db", 60.0, lo=0.0),
        broadband_loss_db=sec.take("broadband_loss_db", 1.0, lo=0.0),
        center_wavelength_nm=sec.take("center_wavelength_nm", 690.0, lo=1.0),
        bandwidth_pm=sec.take("bandwidth_pm", 500.0, lo=0.0),
    )
    sec.finish()
    return params


def _parse_detector(sec: _Section) -> tuple[det.SpadParams, float, float]:
    test_mode = sec.take_bool("test_mode", False)
    cap = 1.0 if test_mode else 0.5
    spad = det.SpadParams(
        efficiency=sec.take("efficiency", 0.5, lo=0.0, hi=cap),
        dark_rate_cps=sec.take("dark_rate_cps", 100.0, lo=0.0, hi=1000.0),
        dead_time_ns=sec.take("dead_time_ns", 60.0, lo=1e-3),
        jitter_fwhm_ps=sec.take("jitter_fwhm_ps", 500.0, lo=0.0),
        test_mode=test_mode,
    )
    residual = sec.take("residual_pump_rate_cps", 1.0e8, lo=0.0)
    timebin = sec.take("timebin_resolution_ps", 36.0, lo=0.0)
    sec.finish()
    return spad, residual, timebin


def _parse_run(sec: _Section) -> RunParams:
    shots_raw = sec.take_raw("calibration_shots", "unset")
    if shots_raw == "unset":
        shots: int | None = 100_000
    elif shots_raw is None:
        shots = None
    elif isinstance(shots_raw, int) and not isinstance(shots_raw, bool) and shots_raw > 0:
        shots = shots_raw
    else:
        raise ValidationError(f"{sec.path}.calibration_shots",
                              "must be a positive integer or null")
    boot_raw = sec.take_raw("bootstrap_seed")
    if boot_raw is not None and (isinstance(boot_raw, bool) or not isinstance(boot_raw, int)
                                 or boot_raw < 0):
        raise ValidationError(f"{sec.path}.bootstrap_seed",
                              "must be a non-negative integer")
    params = RunParams(
        duration_s=sec.take("duration_s", 1.0, lo=1e-12, hi=1.0e6),
        photons_per_config=sec.take("photons_per_config", 100_000, lo=1, integer=True),
        g2_window_ns=sec.take("g2_window_ns", 100.0, lo=1e-3),
        g2_bin_ps=sec.take("g2_bin_ps", 1000, lo=1, integer=True),
        calibration_budget=sec.take("calibration_budget", 2048, lo=1, integer=True),
        calibration_shots=shots,
        calibration_grid=sec.take("calibration_grid", 16, lo=2, hi=64, integer=True),
        settle_windows=sec.take("settle_windows", 3.0, lo=0.0),
        estimate_crosstalk=sec.take_bool("estimate_crosstalk", False),
        bootstrap_seed=boot_raw,
    )
    sec.finish()
    return params


def _parse_mission(sec: _Section, strict: bool) -> MissionParams:
    altitude = sec.take("altitude_km", 550.0,
                        lo=mis.DESIGN_ALTITUDE_BAND_KM[0],
                        hi=mis.DESIGN_ALTITUDE_BAND_KM[1])
    if strict:
        lo, hi = mis.MISSION_ALTITUDE_BAND_KM
        if not lo <= altitude <= hi:
            raise ValidationError(f"{sec.path}.altitude_km",
                                  f"strict mission mode requires [{lo:g}, {hi:g}] km")
    orbit = mis.OrbitSpec(
        altitude_km=altitude,
        inclination_deg=sec.take("inclination_deg", 64.0, lo=0.0, hi=180.0),
        raan_deg=sec.take("raan_deg", 0.0, lo=-360.0, hi=360.0),
        arg_lat_deg=sec.take("arg_lat_deg", 0.0, lo=-360.0, hi=360.0),
        epoch_utc_s=sec.take("epoch_utc_s", 0.0, lo=0.0),
    )
    mask = sec.take("elevation_mask_deg", 0.0, lo=0.0, hi=89.0)
    station_raw = sec.take_raw("station", "berlin")
    if isinstance(station_raw, str):
        key = station_raw.lower()
        if key not in _STATIONS:
            raise ValidationError(f"{sec.path}.station",
                                  f"unknown station; built-ins are {sorted(_STATIONS)}")
        base = _STATIONS[key]
        station = mis.GroundStation(base.name, base.latitude_deg,
                                    base.longitude_deg, mask)
    elif isinstance(station_raw, dict):
        sub = _Section(station_raw, f"{sec.path}.station")
        name = sub.take_raw("name", "custom")
        station = mis.GroundStation(
            str(name),
            sub.take("latitude_deg", 0.0, lo=-90.0, hi=90.0),
            sub.take("longitude_deg", 0.0, lo=-360.0, hi=360.0),
            sub.take("min_elevation_deg", mask, lo=0.0, hi=89.0),
        )
        sub.finish()
    else:
        raise ValidationError(f"{sec.path}.station", "must be a name or an object")
    budget = mis.PowerBudget(
        avg_generation_w=sec.take("avg_generation_w", 15.2, lo=0.0),
        battery_capacity_wh=sec.take("battery_capacity_wh", 69.0, lo=1e-3),
        payload_peak_w=sec.take("payload_peak_w", 12.5, lo=0.0),
        bus_overhead_w=sec.take("bus_overhead_w", 0.0, lo=0.0),
    )
    params = MissionParams(
        orbit=orbit,
        station=station,
        span_days=sec.take("span_days", 10.0, lo=1e-3, hi=3650.0),
        duty_cycle=sec.take("duty_cycle", 1.0, lo=0.0, hi=1.0),
        budget=budget,
    )
    sec.finish()
    return params


def load_scenario(data: dict | str, *, strict_mission: bool = False,
                  seed_override: int | None = None,
                  experiment_override: str | None = None) -> Scenario:
    """Validate a scenario mapping (or a path to a JSON file)."""
    if isinstance(data, str):
        try:
            with open(data) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ValidationError("scenario", f"cannot read file: {exc}")
        except json.JSONDecodeError as exc:
            raise ValidationError("scenario", f"invalid JSON: {exc}")
    root = _Section(data, "")

    experiment = root.take_raw("experiment")
    if experiment_override is not None:
        experiment = experiment_override
    if experiment not in EXPERIMENTS:
        raise ValidationError("experiment",
                              f"must be exactly one of {list(EXPERIMENTS)}")

    seed = root.take("seed", 0, integer=True)
    if seed_override is not None:
        seed = int(seed_override)
    if not 0 <= seed < 2 ** 64:
        raise ValidationError("seed", "must be an unsigned 64-bit integer")

    try:
        laser = _parse_laser(root.subsection("laser"))
        source, pump_ma = _parse_source(root.subsection("source"))
        circuit_params, heater_codes = _parse_circuit(root.subsection("circuit"))
        filter_params = _parse_filter(root.subsection("filter"))
        spad, residual, timebin = _parse_detector(root.subsection("detector"))
        run = _parse_run(root.subsection("run"))
        mission_params = _parse_mission(root.subsection("mission"), strict_mission)
    except ValidationError:
        raise
    except Exception as exc:  # bounds enforced by the dataclasses themselves
        raise ValidationError("scenario", str(exc))
    root.finish()

    if pump_ma > laser.max_current_ma:
        raise ValidationError("source.pump_current_ma",
                              f"must lie in [0, {laser.max_current_ma:g}] (laser compliance)")

    scenario = Scenario(
        experiment=experiment, seed=seed, laser=laser, pump_current_ma=pump_ma,
        source=source, circuit_params=circuit_params, heater_codes=heater_codes,
        filter_params=filter_params, spad=spad, residual_pump_rate_cps=residual,
        timebin_resolution_ps=timebin, run=run, mission=mission_params, echo={},
    )
    object.__setattr__(scenario, "echo", _build_echo(scenario))
    return scenario


def _build_echo(s: Scenario) -> dict:
    """Fully-resolved scenario configuration for the report."""
    source: dict[str, Any]
    if isinstance(s.source, src.TwoLevelEmitter):
        em = s.source.emitter
        source = {
            "kind": "two_level",
            "lifetime_tau1_ns": em.lifetime_tau1_ns,
            "saturation_power_mw": em.saturation_power_mw,
            "max_emission_rate_cps": em.max_emission_rate_cps,
            "background_fraction": em.background_fraction,
            "wavelength_nm": em.wavelength_nm,
        }
    elif isinstance(s.source, src.WeakCoherentCW):
        source = {"kind": "weak_coherent_cw", "mean_rate_cps": s.source.mean_rate_cps}
    else:
        source = {"kind": "weak_coherent_pulsed",
                  "rep_rate_hz": s.source.rep_rate_hz,
                  "mean_photon_number": s.source.mean_photon_number}
    source["pump_current_ma"] = s.pump_current_ma

    cp = s.circuit_params
    return {
        "experiment": s.experiment,
        "seed": s.seed,
        "laser": {
            "threshold_current_ma": s.laser.threshold_current_ma,
            "slope_mw_per_ma": s.laser.slope_mw_per_ma,
            "max_current_ma": s.laser.max_current_ma,
            "fiber_coupling": s.laser.fiber_coupling,
            "current_stability_ua": s.laser.current_stability_ua,
        },
        "source": source,
        "circuit": {
            "ratio_error": cp.ratio_error,
            "extinction_db": cp.extinction_db,
            "settle_time_ms": cp.settle_time_ms,
            "insertion_loss_db": cp.insertion_loss_db,
            "resistance_ohm": cp.resistance_ohm,
            "p2pi_mw": cp.p2pi_mw,
            "crosstalk": cp.crosstalk,
            "phase_offset_policy": cp.phase_offset_policy,
            "current_resolution_ua": cp.current_resolution_ua,
            "max_current_ma": cp.max_current_ma,
            "heater_codes": list(s.heater_codes) if s.heater_codes else None,
        },
        "filter": {
            "pump_suppression_db": s.filter_params.pump_suppression_db,
            "broadband_loss_db": s.filter_params.broadband_loss_db,
            "center_wavelength_nm": s.filter_params.center_wavelength_nm,
            "bandwidth_pm": s.filter_params.bandwidth_pm,
        },
        "detector": {
            "efficiency": s.spad.efficiency,
            "dark_rate_cps": s.spad.dark_rate_cps,
            "dead_time_ns": s.spad.dead_time_ns,
            "jitter_fwhm_ps": s.spad.jitter_fwhm_ps,
            "test_mode": s.spad.test_mode,
            "residual_pump_rate_cps": s.residual_pump_rate_cps,
            "timebin_resolution_ps": s.timebin_resolution_ps,
        },
        "run": {
            "duration_s": s.run.duration_s,
            "photons_per_config": s.run.photons_per_config,
            "g2_window_ns": s.run.g2_window_ns,
            "g2_bin_ps": s.run.g2_bin_ps,
            "calibration_budget": s.run.calibration_budget,
            "calibration_shots": s.run.calibration_shots,
            "calibration_grid": s.run.calibration_grid,
            "settle_windows": s.run.settle_windows,
            "estimate_crosstalk": s.run.estimate_crosstalk,
            "bootstrap_seed": s.run.bootstrap_seed,
        },
        "mission": {
            "altitude_km": s.mission.orbit.altitude_km,
            "inclination_deg": s.mission.orbit.inclination_deg,
            "raan_deg": s.mission.orbit.raan_deg,
            "arg_lat_deg": s.mission.orbit.arg_lat_deg,
            "epoch_utc_s": s.mission.orbit.epoch_utc_s,
            "station": {
                "name": s.mission.station.name,
                "latitude_deg": s.mission.station.latitude_deg,
                "longitude_deg": s.mission.station.longitude_deg,
                "min_elevation_deg": s.mission.station.min_elevation_deg,
            },
            "span_days": s.mission.span_days,
            "duty_cycle": s.mission.duty_cycle,
            "avg_generation_w": s.mission.budget.avg_generation_w,
            "battery_capacity_wh": s.mission.budget.battery_capacity_wh,
            "payload_peak_w": s.mission.budget.payload_peak_w,
            "bus_overhead_w": s.mission.budget.bus_overhead_w,
            "mission_compliant": s.mission.orbit.mission_compliant,
        },
    }
