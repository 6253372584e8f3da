"""Experiment orchestration: scenario in, deterministic report out.

Reports are plain dicts serialized with a stable layout (sorted keys,
17-significant-digit floats) so that identical scenario + seed reruns
produce byte-identical files.  Wall-clock timing therefore never enters
the report; the CLI prints it to stderr.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
import time

import numpy as np

from . import __version__
from . import analysis as ana
from . import circuit as circ
from . import detection as det
from . import mission as mis
from . import source as src
from .circuit import BlockingConfig
from .errors import DataError, ParameterError
from .rng import substream, STREAM_FILTER
from .scenario import Scenario
from .timetags import TimeTagSeries

SCHEMA_VERSION = 1

G2_BLOCKING = "AB"  # C's switch feeds the 50/50 monitor pair


def build_bench(scenario: Scenario) -> ana.Bench:
    circuit = circ.build_circuit(scenario.circuit_params, scenario.seed)
    return ana.Bench(
        source=scenario.source,
        pump_fiber_mw=scenario.pump_fiber_mw,
        circuit=circuit,
        filter_params=scenario.filter_params,
        detectors=scenario.detectors(),
        residual_pump_rate_cps=scenario.residual_pump_rate_cps,
        seed=scenario.seed,
    )


def _settle_skip_s(scenario: Scenario) -> float:
    return scenario.run.settle_windows * scenario.circuit_params.settle_time_ms / 1e3


def run_g2(scenario: Scenario, bench: ana.Bench) -> dict:
    """Autocorrelation of the source through path C's monitor pair.

    Paths A and B stay open so the interferometer keeps running; the
    blocked C switch routes its light to the 50/50 monitor splitter whose
    two outputs are the start/stop channels.
    """
    seed = scenario.seed
    run = scenario.run

    stream = src.generate_stream(scenario.source, scenario.pump_fiber_mw,
                                 run.duration_s, seed)
    state = bench.state_for(BlockingConfig.from_label(G2_BLOCKING),
                            scenario.heater_codes)
    routed = circ.transmit_stream(state, stream, seed)

    filtered = {}
    for idx, port in ((1, circ.PORT_TAP_1), (2, circ.PORT_TAP_2)):
        filtered[idx] = det.apply_filter(routed[port],
                                         scenario.residual_pump_rate_cps,
                                         scenario.filter_params,
                                         substream(seed, STREAM_FILTER, idx))
    detected = det.detect_all(filtered, bench.detectors, seed,
                              duration_s=run.duration_s)

    hist = det.coincidence_histogram(detected, 1, 2, run.g2_window_ns,
                                     run.g2_bin_ps)
    r1 = detected.rate_cps(1)
    r2 = detected.rate_cps(2)
    estimate = ana.estimate_g2(hist, r1, r2, run.duration_s)

    return {
        "blocking": G2_BLOCKING,
        "duration_s": run.duration_s,
        "photons_emitted": len(stream),
        "counts": {"start": int(len(detected.select_channel(1))),
                   "stop": int(len(detected.select_channel(2)))},
        "estimate": estimate.to_dict(),
        "theory_g2_at_zero": float(src.theoretical_g2(
            scenario.source, scenario.pump_fiber_mw, 0.0)),
    }


def run_born(scenario: Scenario, bench: ana.Bench) -> dict:
    """Eight-configuration triple test with the kappa statistic."""
    run = scenario.run

    calibration = None
    codes = scenario.heater_codes
    if codes is None:
        cal = ana.calibrate_phases(bench, run.calibration_budget,
                                   grid=run.calibration_grid,
                                   shots_per_point=run.calibration_shots)
        codes = cal.codes
        calibration = cal.to_dict()
        calibration.pop("scan_trace")

    result, measurements = ana.run_triple_test(
        bench, run.photons_per_config, scenario.seed, codes=codes,
        settle_skip_s=_settle_skip_s(scenario),
        bootstrap_seed=run.bootstrap_seed)

    sorkin = result.to_dict()
    z = abs(result.kappa) / result.kappa_err if result.kappa_err > 0 else math.inf
    return {
        "codes": list(codes),
        "calibration": calibration,
        "photons_per_config": run.photons_per_config,
        "total_photons": 8 * run.photons_per_config,
        "sorkin": sorkin,
        "kappa_z_score": z,
        "measurements": [
            {"config": m.config, "clicks": m.clicks, "photons_in": m.photons_in,
             "duration_s": m.duration_s, "p_hat": m.p_hat, "sigma": m.sigma}
            for m in measurements
        ],
    }


def run_calibrate(scenario: Scenario, bench: ana.Bench) -> dict:
    run = scenario.run
    cal = ana.calibrate_phases(bench, run.calibration_budget,
                               grid=run.calibration_grid,
                               shots_per_point=run.calibration_shots)
    out = {"calibration": cal.to_dict()}
    if run.estimate_crosstalk:
        x_hat = ana.estimate_crosstalk(bench,
                                       shots_per_point=run.calibration_shots)
        out["crosstalk_estimate"] = [[float(v) for v in row] for row in x_hat]
        out["crosstalk_true"] = [list(h.crosstalk_row)
                                 for h in bench.circuit.heaters]
    return out


def run_passes(scenario: Scenario) -> dict:
    m = scenario.mission
    passes = mis.predict_passes(m.orbit, m.station, m.span_days)
    stats = mis.contact_statistics(passes, m.span_days)
    epoch = m.orbit.epoch_utc_s
    return {
        "orbit": {
            "altitude_km": m.orbit.altitude_km,
            "inclination_deg": m.orbit.inclination_deg,
            "epoch_utc_s": epoch,
            "period_s": m.orbit.period_s,
            "nodal_precession_deg_per_day": math.degrees(
                mis.nodal_precession_rate(m.orbit.altitude_km,
                                          m.orbit.inclination_deg)) * mis.SECONDS_PER_DAY,
            "max_pass_bound_s": mis.max_pass_duration_bound_s(m.orbit.altitude_km),
            "visibility_latitude_bound_deg": mis.visibility_latitude_bound_deg(
                m.orbit.altitude_km, m.orbit.inclination_deg),
            "mission_compliant": m.orbit.mission_compliant,
        },
        "station": {
            "name": m.station.name,
            "latitude_deg": m.station.latitude_deg,
            "longitude_deg": m.station.longitude_deg,
            "min_elevation_deg": m.station.min_elevation_deg,
        },
        "span_days": m.span_days,
        "stats": stats.to_dict(),
        "passes": [
            {"rise_utc": epoch + p.rise_s, "set_utc": epoch + p.set_s,
             "max_elevation_deg": p.max_elevation_deg,
             "duration_s": p.duration_s}
            for p in passes
        ],
    }


def run_power(scenario: Scenario) -> dict:
    m = scenario.mission
    period = m.orbit.period_s
    headline = mis.energy_margin(m.budget, m.duty_cycle, period)
    sweep = [mis.energy_margin(m.budget, d / 10.0, period).to_dict()
             for d in range(11)]
    return {
        "period_s": period,
        "headline": headline.to_dict(),
        "duty_sweep": sweep,
    }


_PHOTONIC = {"g2": run_g2, "born": run_born, "calibrate": run_calibrate}
_MISSION = {"passes": run_passes, "power": run_power}


def run_scenario(scenario: Scenario) -> dict:
    """Execute the scenario's experiment and assemble the report dict.

    Everything except ``wall_time_s`` is a pure function of the scenario,
    so result sections compare byte-identical across reruns.
    """
    started = time.perf_counter()
    report = {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "q3sim", "version": __version__},
        "experiment": scenario.experiment,
        "scenario": scenario.echo,
    }
    if scenario.experiment in _PHOTONIC:
        bench = build_bench(scenario)
        report["fabrication"] = bench.circuit.fabrication_echo()
        report["results"] = _PHOTONIC[scenario.experiment](scenario, bench)
    else:
        report["results"] = _MISSION[scenario.experiment](scenario)
    report["wall_time_s"] = time.perf_counter() - started
    return report


# -- deterministic serialization -------------------------------------------------


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        raise DataError("NaN cannot be serialized into a report")
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _dump(obj, parts: list, indent: int) -> None:
    pad = "  " * indent
    if obj is None:
        parts.append("null")
    elif isinstance(obj, bool):
        parts.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        parts.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        parts.append(_fmt_float(float(obj)))
    elif isinstance(obj, str):
        parts.append(json.dumps(obj))
    elif isinstance(obj, np.ndarray):
        _dump(obj.tolist(), parts, indent)
    elif isinstance(obj, (list, tuple)):
        if not obj:
            parts.append("[]")
            return
        parts.append("[\n")
        for k, item in enumerate(obj):
            parts.append(pad + "  ")
            _dump(item, parts, indent + 1)
            parts.append(",\n" if k + 1 < len(obj) else "\n")
        parts.append(pad + "]")
    elif isinstance(obj, dict):
        if not obj:
            parts.append("{}")
            return
        keys = sorted(obj)
        parts.append("{\n")
        for k, key in enumerate(keys):
            if not isinstance(key, str):
                raise DataError("report keys must be strings")
            parts.append(pad + "  " + json.dumps(key) + ": ")
            _dump(obj[key], parts, indent + 1)
            parts.append(",\n" if k + 1 < len(keys) else "\n")
        parts.append(pad + "}")
    else:
        raise DataError(f"cannot serialize {type(obj).__name__} into a report")


def dumps_report(report: dict) -> str:
    """Stable JSON text: sorted keys, floats at 17 significant digits."""
    parts: list[str] = []
    _dump(report, parts, 0)
    parts.append("\n")
    return "".join(parts)


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_lines(header: str, rows) -> str:
    lines = [header]
    for row in rows:
        lines.append(",".join(
            _fmt_float(v) if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


def _csv_extras(report: dict) -> dict[str, str]:
    results = report["results"]
    extras = {}
    if report["experiment"] == "g2":
        est = results["estimate"]
        extras["histogram.csv"] = _csv_lines(
            "tau_bin_start_ps,g2,stderr",
            zip(est["tau_bin_starts_ps"], est["g2"], est["stderr"]))
    elif report["experiment"] == "born":
        extras["probabilities.csv"] = _csv_lines(
            "config,clicks,photons_in,p_hat,sigma",
            ((m["config"], m["clicks"], m["photons_in"], m["p_hat"], m["sigma"])
             for m in results["measurements"]))
    elif report["experiment"] == "calibrate":
        extras["trace.csv"] = _csv_lines(
            "code_0,code_1,value",
            ((c[0], c[1], float(v))
             for c, v in results["calibration"]["scan_trace"]))
    elif report["experiment"] == "passes":
        extras["passes.csv"] = _csv_lines(
            "rise_utc,set_utc,max_elev_deg,duration_s",
            ((p["rise_utc"], p["set_utc"], p["max_elevation_deg"], p["duration_s"])
             for p in results["passes"]))
    elif report["experiment"] == "power":
        extras["duty_sweep.csv"] = _csv_lines(
            "duty_cycle,payload_wh_per_orbit,margin_wh_per_orbit,depth_of_discharge",
            ((r["duty_cycle"], r["payload_wh_per_orbit"],
              r["margin_wh_per_orbit"], r["depth_of_discharge"])
             for r in results["duty_sweep"]))
    return extras


def emit_report(report: dict, out_dir: str, fmt: str = "json") -> list[str]:
    """Write the report into a directory; returns the paths written.

    ``json`` writes report.json alone; ``csv`` adds the per-experiment
    CSV tables next to it.
    """
    if fmt not in ("json", "csv"):
        raise ParameterError("format must be 'json' or 'csv'")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    target = os.path.join(out_dir, "report.json")
    _write_atomic(target, dumps_report(report))
    written.append(target)
    if fmt == "csv":
        for name, text in _csv_extras(report).items():
            target = os.path.join(out_dir, name)
            _write_atomic(target, text)
            written.append(target)
    return written
