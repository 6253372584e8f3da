"""Orbit mechanics, ground-station contact prediction, and power budget.

The orbit model is a circular two-body trajectory with the secular J2
right-ascension drift, flown over a rotating spherical Earth.  That is the
right fidelity for contact statistics: pass counts and daily contact
minutes are set by geometry, not by short-period perturbations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParameterError

EARTH_RADIUS_KM = 6371.0
MU_EARTH_M3_S2 = 3.986004418e14
J2_EARTH = 1.08263e-3
EARTH_ROTATION_RAD_S = 7.2921159e-5
TROPICAL_YEAR_DAYS = 365.2422
SECONDS_PER_DAY = 86400.0

MISSION_ALTITUDE_BAND_KM = (487.0, 604.0)
DESIGN_ALTITUDE_BAND_KM = (400.0, 650.0)


def orbital_period(altitude_km: float) -> float:
    """Keplerian period 2 pi sqrt(a^3/mu) for a circular orbit at altitude."""
    if altitude_km < 0:
        raise ParameterError("altitude must be >= 0")
    a_m = (EARTH_RADIUS_KM + altitude_km) * 1000.0
    return 2.0 * math.pi * math.sqrt(a_m ** 3 / MU_EARTH_M3_S2)


def mean_motion(altitude_km: float) -> float:
    return 2.0 * math.pi / orbital_period(altitude_km)


def nodal_precession_rate(altitude_km: float, inclination_deg: float) -> float:
    """Secular J2 RAAN drift in rad/s (negative = westward)."""
    a_m = (EARTH_RADIUS_KM + altitude_km) * 1000.0
    n = mean_motion(altitude_km)
    ratio = EARTH_RADIUS_KM * 1000.0 / a_m
    return -1.5 * J2_EARTH * n * ratio * ratio * math.cos(math.radians(inclination_deg))


def sso_inclination(altitude_km: float) -> float:
    """Inclination whose J2 node drift tracks the mean Sun (360 deg/year)."""
    target = 2.0 * math.pi / (TROPICAL_YEAR_DAYS * SECONDS_PER_DAY)
    a_m = (EARTH_RADIUS_KM + altitude_km) * 1000.0
    n = mean_motion(altitude_km)
    ratio = EARTH_RADIUS_KM * 1000.0 / a_m
    cos_i = -target / (1.5 * J2_EARTH * n * ratio * ratio)
    if not -1.0 <= cos_i <= 1.0:
        raise DomainError(
            f"no real sun-synchronous inclination at {altitude_km:g} km")
    return math.degrees(math.acos(cos_i))


def horizon_half_angle_rad(altitude_km: float) -> float:
    """Earth-center angle from a station to its zero-elevation horizon ring."""
    return math.acos(EARTH_RADIUS_KM / (EARTH_RADIUS_KM + altitude_km))


def max_pass_duration_bound_s(altitude_km: float) -> float:
    """Upper bound on one pass: horizon chord at the slowest relative rate.

    The relative angular rate is at least the orbital rate minus Earth's
    rotation (prograde overhead worst case), so no simulated pass can last
    longer than chord / (n - omega_E).
    """
    chord = 2.0 * horizon_half_angle_rad(altitude_km)
    return chord / (mean_motion(altitude_km) - EARTH_ROTATION_RAD_S)


def visibility_latitude_bound_deg(altitude_km: float, inclination_deg: float) -> float:
    """Largest station latitude that can ever see the satellite (mask 0)."""
    i = min(inclination_deg, 180.0 - inclination_deg)
    return i + math.degrees(horizon_half_angle_rad(altitude_km))


@dataclass(frozen=True)
class OrbitSpec:
    """Circular orbit: altitude, inclination, initial node and phase.

    ``epoch_utc_s`` anchors the propagation's t=0 on the continuous UTC
    seconds axis; pass times are reported relative to it.
    """

    altitude_km: float = 550.0
    inclination_deg: float = 64.0
    raan_deg: float = 0.0
    arg_lat_deg: float = 0.0
    epoch_utc_s: float = 0.0

    def __post_init__(self):
        lo, hi = DESIGN_ALTITUDE_BAND_KM
        if not lo <= self.altitude_km <= hi:
            raise ParameterError(
                f"altitude {self.altitude_km:g} km outside the design band [{lo:g}, {hi:g}]")
        if not 0.0 <= self.inclination_deg <= 180.0:
            raise ParameterError("inclination must lie in [0, 180] deg")

    @property
    def mission_compliant(self) -> bool:
        lo, hi = MISSION_ALTITUDE_BAND_KM
        return lo <= self.altitude_km <= hi

    @property
    def period_s(self) -> float:
        return orbital_period(self.altitude_km)


@dataclass(frozen=True)
class GroundStation:
    name: str
    latitude_deg: float
    longitude_deg: float
    min_elevation_deg: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.latitude_deg <= 90.0:
            raise ParameterError("latitude must lie in [-90, 90] deg")
        if not 0.0 <= self.min_elevation_deg < 90.0:
            raise ParameterError("elevation mask must lie in [0, 90) deg")


BERLIN = GroundStation("Berlin", 52.5, 13.4)
LONGYEARBYEN = GroundStation("Longyearbyen", 78.2, 15.6)


@dataclass(frozen=True)
class PassWindow:
    rise_s: float
    set_s: float
    max_elevation_deg: float
    duration_s: float

    def __post_init__(self):
        if self.set_s < self.rise_s:
            raise ParameterError("set time precedes rise time")
        if abs(self.duration_s - (self.set_s - self.rise_s)) > 1e-6:
            raise ParameterError("duration must equal set - rise")


class _ElevationModel:
    """Vectorized satellite elevation seen from one station.

    Inertial frame with the station rotating at omega_E; epoch t=0 puts the
    station at its geographic longitude (reference meridian aligned).
    """

    def __init__(self, orbit: OrbitSpec, station: GroundStation):
        self.r_sat = EARTH_RADIUS_KM + orbit.altitude_km
        self.inc = math.radians(orbit.inclination_deg)
        self.raan0 = math.radians(orbit.raan_deg)
        self.u0 = math.radians(orbit.arg_lat_deg)
        self.n = mean_motion(orbit.altitude_km)
        self.raan_dot = nodal_precession_rate(orbit.altitude_km, orbit.inclination_deg)
        self.lat = math.radians(station.latitude_deg)
        self.lon = math.radians(station.longitude_deg)

    def elevation_deg(self, t_s: np.ndarray) -> np.ndarray:
        t = np.asarray(t_s, dtype=float)
        u = self.u0 + self.n * t
        node = self.raan0 + self.raan_dot * t
        cu, su = np.cos(u), np.sin(u)
        cn, sn = np.cos(node), np.sin(node)
        ci, si = math.cos(self.inc), math.sin(self.inc)
        sat = self.r_sat * np.stack([cn * cu - sn * su * ci,
                                     sn * cu + cn * su * ci,
                                     su * si])
        lon_t = self.lon + EARTH_ROTATION_RAD_S * t
        cl = math.cos(self.lat)
        stn = EARTH_RADIUS_KM * np.stack([cl * np.cos(lon_t),
                                          cl * np.sin(lon_t),
                                          np.full_like(t, math.sin(self.lat))])
        rel = sat - stn
        rng = np.sqrt((rel * rel).sum(axis=0))
        up = stn / EARTH_RADIUS_KM
        sin_el = (rel * up).sum(axis=0) / rng
        return np.degrees(np.arcsin(np.clip(sin_el, -1.0, 1.0)))


def _bisect_crossing(f, lo: float, hi: float, tol_s: float = 0.01) -> float:
    """Locate the sign change of f (scalar) inside [lo, hi]."""
    f_lo = f(lo)
    for _ in range(64):
        if hi - lo <= tol_s:
            break
        mid = 0.5 * (lo + hi)
        if (f(mid) > 0.0) == (f_lo > 0.0):
            lo, f_lo = mid, f(mid)
        else:
            hi = mid
    return 0.5 * (lo + hi)


def predict_passes(orbit: OrbitSpec, station: GroundStation, span_days: float,
                   *, coarse_step_s: float = 10.0) -> list[PassWindow]:
    """All contact windows above the station's elevation mask.

    Coarse sampling brackets mask crossings; bisection refines rise and set
    to 10 ms so the boundary elevations match the mask to well under 0.01
    degrees.  A pass already in progress at t=0 (or still open at the end
    of the span) is clipped to the span.
    """
    if span_days <= 0:
        raise ParameterError("span must be positive")
    model = _ElevationModel(orbit, station)
    span_s = span_days * SECONDS_PER_DAY
    grid = np.linspace(0.0, span_s, int(span_s / coarse_step_s) + 1)
    above = model.elevation_deg(grid) - station.min_elevation_deg

    def margin(t: float) -> float:
        return float(model.elevation_deg(np.array([t]))[0]) - station.min_elevation_deg

    passes = []
    inside = above[0] > 0.0
    rise_t = 0.0 if inside else None
    for k in range(1, grid.size):
        if not inside and above[k] > 0.0:
            rise_t = _bisect_crossing(margin, grid[k - 1], grid[k])
            inside = True
        elif inside and above[k] <= 0.0:
            set_t = _bisect_crossing(margin, grid[k - 1], grid[k])
            passes.append(_finish_pass(model, rise_t, set_t))
            inside = False
    if inside:
        passes.append(_finish_pass(model, rise_t, span_s))
    return passes


def _finish_pass(model: _ElevationModel, rise_t: float, set_t: float) -> PassWindow:
    fine = np.linspace(rise_t, set_t, max(int(set_t - rise_t), 8))
    peak = float(model.elevation_deg(fine).max())
    return PassWindow(rise_t, set_t, peak, set_t - rise_t)


@dataclass(frozen=True)
class ContactStats:
    passes_per_day: float
    minutes_per_day: float
    max_pass_s: float
    n_passes: int

    def to_dict(self) -> dict:
        return {
            "passes_per_day": self.passes_per_day,
            "minutes_per_day": self.minutes_per_day,
            "max_pass_s": self.max_pass_s,
            "n_passes": self.n_passes,
        }


def contact_statistics(passes: list[PassWindow], span_days: float) -> ContactStats:
    if span_days <= 0:
        raise ParameterError("span must be positive")
    total_s = sum(p.duration_s for p in passes)
    longest = max((p.duration_s for p in passes), default=0.0)
    return ContactStats(len(passes) / span_days, total_s / 60.0 / span_days,
                        longest, len(passes))


@dataclass(frozen=True)
class PowerBudget:
    """Orbit-average generation against bus and payload draw."""

    avg_generation_w: float = 15.2
    battery_capacity_wh: float = 69.0
    payload_peak_w: float = 12.5
    bus_overhead_w: float = 0.0

    def __post_init__(self):
        if self.battery_capacity_wh <= 0:
            raise ParameterError("battery capacity must be > 0")
        if self.avg_generation_w < 0 or self.payload_peak_w < 0 or self.bus_overhead_w < 0:
            raise ParameterError("powers must be >= 0")


@dataclass(frozen=True)
class EnergyReport:
    period_s: float
    duty_cycle: float
    payload_wh_per_orbit: float
    margin_wh_per_orbit: float
    worst_case_discharge_wh: float
    depth_of_discharge: float

    def to_dict(self) -> dict:
        return {
            "period_s": self.period_s,
            "duty_cycle": self.duty_cycle,
            "payload_wh_per_orbit": self.payload_wh_per_orbit,
            "margin_wh_per_orbit": self.margin_wh_per_orbit,
            "worst_case_discharge_wh": self.worst_case_discharge_wh,
            "depth_of_discharge": self.depth_of_discharge,
        }


def energy_margin(budget: PowerBudget, duty_cycle: float, period_s: float) -> EnergyReport:
    """Per-orbit energy margin at a payload duty cycle.

    margin = (generation - bus - duty * payload_peak) * T / 3600 Wh.  The
    worst-case discharge assumes zero generation while the payload runs at
    its duty cycle for a full orbit; its ratio to capacity is the
    depth-of-discharge figure.
    """
    if not 0.0 <= duty_cycle <= 1.0:
        raise ParameterError("duty cycle must lie in [0, 1]")
    if period_s <= 0:
        raise ParameterError("period must be positive")
    hours = period_s / 3600.0
    payload_wh = duty_cycle * budget.payload_peak_w * hours
    margin_wh = (budget.avg_generation_w - budget.bus_overhead_w) * hours - payload_wh
    worst = (budget.bus_overhead_w + duty_cycle * budget.payload_peak_w) * hours
    return EnergyReport(period_s, duty_cycle, payload_wh, margin_wh, worst,
                        worst / budget.battery_capacity_wh)
