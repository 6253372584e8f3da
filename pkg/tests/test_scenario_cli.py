import json
import shutil
import subprocess
import sys
from pathlib import Path

import jsonschema
import pytest

import q3sim
from q3sim.errors import DataError, ValidationError
from q3sim.runner import dumps_report, emit_report, run_scenario
from q3sim.scenario import load_scenario

SCHEMA = json.loads(
    (Path(q3sim.__file__).parent / "schema" / "report.schema.json").read_text())

FAST_G2 = {"experiment": "g2", "seed": 7,
           "source": {"kind": "weak_coherent_cw", "mean_rate_cps": 2e5},
           "run": {"duration_s": 0.2, "g2_window_ns": 50.0, "g2_bin_ps": 5000}}
FAST_BORN = {"experiment": "born", "seed": 3,
             "circuit": {"heater_codes": [0, 0],
                         "phase_offset_policy": "zero"},
             "run": {"photons_per_config": 5000}}
FAST_CAL = {"experiment": "calibrate", "seed": 2,
            "run": {"calibration_budget": 300, "calibration_shots": None}}
FAST_PASSES = {"experiment": "passes", "seed": 1,
               "mission": {"span_days": 0.3}}
FAST_POWER = {"experiment": "power", "seed": 1}


def cli(*args, **kw):
    return subprocess.run([sys.executable, "-m", "q3sim.cli", *args],
                          capture_output=True, text=True, **kw)


# -- loader ---------------------------------------------------------------------


def test_minimal_scenario_defaults():
    s = load_scenario({"experiment": "g2", "seed": 1})
    assert s.experiment == "g2" and s.seed == 1
    assert s.pump_current_ma == 65.0
    assert s.pump_fiber_mw == pytest.approx(15.0)
    assert s.run.duration_s == 1.0
    assert s.mission.orbit.altitude_km == 550.0
    assert s.mission.station.name == "Berlin"
    assert s.spad.efficiency == 0.5
    assert s.heater_codes is None
    assert s.echo["source"]["kind"] == "two_level"


def test_unknown_keys_name_their_path():
    with pytest.raises(ValidationError, match="bogus"):
        load_scenario({"experiment": "g2", "seed": 1, "bogus": 1})
    with pytest.raises(ValidationError, match="detector.bogus"):
        load_scenario({"experiment": "g2", "seed": 1,
                       "detector": {"bogus": 1}})
    with pytest.raises(ValidationError, match="mission.station"):
        load_scenario({"experiment": "passes", "seed": 1,
                       "mission": {"station": "atlantis"}})


def test_seed_bounds():
    load_scenario({"experiment": "g2", "seed": 2 ** 64 - 1})
    with pytest.raises(ValidationError, match="seed"):
        load_scenario({"experiment": "g2", "seed": -1})
    with pytest.raises(ValidationError, match="seed"):
        load_scenario({"experiment": "g2", "seed": 2 ** 64})


def test_experiment_required_and_overridable():
    with pytest.raises(ValidationError, match="experiment"):
        load_scenario({"seed": 1})
    with pytest.raises(ValidationError, match="experiment"):
        load_scenario({"experiment": "juggle", "seed": 1})
    s = load_scenario({"seed": 5}, experiment_override="power")
    assert s.experiment == "power"
    s = load_scenario({"experiment": "g2", "seed": 5}, seed_override=9)
    assert s.seed == 9


def test_detector_efficiency_cap():
    with pytest.raises(ValidationError, match="efficiency"):
        load_scenario({"experiment": "g2", "seed": 1,
                       "detector": {"efficiency": 0.7}})
    s = load_scenario({"experiment": "g2", "seed": 1,
                       "detector": {"efficiency": 0.7, "test_mode": True}})
    assert s.spad.efficiency == 0.7


def test_pump_current_compliance():
    with pytest.raises(ValidationError, match="pump_current_ma"):
        load_scenario({"experiment": "g2", "seed": 1,
                       "source": {"pump_current_ma": 200.0}})


def test_heater_codes_validation():
    s = load_scenario({"experiment": "born", "seed": 1,
                       "circuit": {"heater_codes": [100, 200]}})
    assert s.heater_codes == (100, 200)
    for bad in ([1], [1, 2, 3], [0, 99999], [0.5, 1], "xy"):
        with pytest.raises(ValidationError, match="heater_codes"):
            load_scenario({"experiment": "born", "seed": 1,
                           "circuit": {"heater_codes": bad}})


def test_strict_mission_band():
    data = {"experiment": "passes", "seed": 1,
            "mission": {"altitude_km": 450.0}}
    s = load_scenario(data)
    assert s.echo["mission"]["mission_compliant"] is False
    with pytest.raises(ValidationError, match="altitude_km"):
        load_scenario(data, strict_mission=True)
    with pytest.raises(ValidationError, match="altitude_km"):
        load_scenario({"experiment": "passes", "seed": 1,
                       "mission": {"altitude_km": 300.0}})


def test_scenario_file_roundtrip(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps(FAST_POWER))
    s = load_scenario(str(p))
    assert s.experiment == "power"
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ValidationError, match="JSON"):
        load_scenario(str(bad))
    with pytest.raises(ValidationError, match="read"):
        load_scenario(str(tmp_path / "missing.json"))


# -- runner reports -------------------------------------------------------------


@pytest.mark.parametrize("data", [FAST_G2, FAST_BORN, FAST_CAL, FAST_PASSES,
                                  FAST_POWER],
                         ids=["g2", "born", "calibrate", "passes", "power"])
def test_reports_match_schema(data):
    report = run_scenario(load_scenario(data))
    jsonschema.Draft202012Validator.check_schema(SCHEMA)
    jsonschema.validate(report_roundtrip(report), SCHEMA)


def report_roundtrip(report):
    return json.loads(dumps_report(report))


def test_results_byte_identical_across_runs():
    a = run_scenario(load_scenario(FAST_G2))
    b = run_scenario(load_scenario(FAST_G2))
    assert dumps_report(a["results"]) == dumps_report(b["results"])
    assert dumps_report(a["scenario"]) == dumps_report(b["scenario"])
    assert dumps_report(a["fabrication"]) == dumps_report(b["fabrication"])


def test_seed_changes_results():
    a = run_scenario(load_scenario(FAST_G2))
    b = run_scenario(load_scenario(dict(FAST_G2, seed=8)))
    assert dumps_report(a["results"]) != dumps_report(b["results"])


def test_dumps_report_contract():
    s = dumps_report({"b": 1.5, "a": float("inf"), "c": [1, 2]})
    assert s.index('"a"') < s.index('"b"') < s.index('"c"')
    assert "Infinity" in s
    parsed = json.loads(s)
    assert parsed["a"] == float("inf")
    with pytest.raises(DataError):
        dumps_report({"x": float("nan")})


def test_float_precision_survives_roundtrip():
    vals = {"x": 0.1 + 0.2, "y": 5730.127089334606, "z": 1e-300}
    parsed = json.loads(dumps_report(vals))
    assert parsed == vals


@pytest.mark.parametrize("data,extra", [(FAST_G2, "histogram.csv"),
                                        (FAST_BORN, "probabilities.csv"),
                                        (FAST_CAL, "trace.csv"),
                                        (FAST_PASSES, "passes.csv"),
                                        (FAST_POWER, "duty_sweep.csv")],
                         ids=["g2", "born", "calibrate", "passes", "power"])
def test_emit_report_csv_bundle(tmp_path, data, extra):
    report = run_scenario(load_scenario(data))
    out = tmp_path / "out"
    emit_report(report, str(out), "csv")
    assert (out / "report.json").exists()
    assert (out / extra).exists()
    lines = (out / extra).read_text().splitlines()
    assert len(lines) >= 1 and "," in lines[0]
    json.loads((out / "report.json").read_text())


def test_passes_csv_header(tmp_path):
    report = run_scenario(load_scenario(FAST_PASSES))
    out = tmp_path / "out"
    emit_report(report, str(out), "csv")
    header = (out / "passes.csv").read_text().splitlines()[0]
    assert header == "rise_utc,set_utc,max_elev_deg,duration_s"


# -- command line ----------------------------------------------------------------


def test_cli_power_to_stdout():
    proc = cli("power", "--seed", "1")
    assert proc.returncode == 0
    report = json.loads(proc.stdout)
    assert report["experiment"] == "power"
    assert report["results"]["headline"]["payload_wh_per_orbit"] == pytest.approx(
        19.89627461574516)
    jsonschema.validate(report, SCHEMA)


def test_console_script_installed():
    exe = shutil.which("q3sim")
    assert exe, "console script q3sim not on PATH"
    proc = subprocess.run([exe, "power", "--seed", "2"], capture_output=True,
                          text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["experiment"] == "power"


def test_cli_validation_exit_code(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"experiment": "g2", "seed": 1, "bogus": 1}))
    proc = cli("g2", "--scenario", str(p))
    assert proc.returncode == 2
    assert "bogus" in proc.stderr
    proc = cli("g2", "--scenario", str(tmp_path / "missing.json"))
    assert proc.returncode == 2


def test_cli_csv_needs_out_dir():
    proc = cli("power", "--seed", "1", "--format", "csv")
    assert proc.returncode == 2
    assert "--out" in proc.stderr or "output" in proc.stderr


def test_cli_writes_bundle(tmp_path):
    out = tmp_path / "bundle"
    proc = cli("power", "--seed", "1", "--out", str(out), "--format", "csv")
    assert proc.returncode == 0
    assert (out / "report.json").exists()
    assert (out / "duty_sweep.csv").exists()


def test_cli_strict_mission(tmp_path):
    p = tmp_path / "low.json"
    p.write_text(json.dumps({"experiment": "power", "seed": 1,
                             "mission": {"altitude_km": 450.0}}))
    assert cli("power", "--scenario", str(p)).returncode == 0
    proc = cli("power", "--scenario", str(p), "--strict-mission")
    assert proc.returncode == 2


def test_cli_analyze(tmp_path):
    rows = ["config,counts,shots"]
    shots = 900000
    table = {"none": 0, "A": 100000, "B": 100000, "C": 100000,
             "AB": 400000, "AC": 400000, "BC": 400000, "ABC": 900000}
    rows += [f"{k},{v},{shots}" for k, v in table.items()]
    p = tmp_path / "counts.csv"
    p.write_text("\n".join(rows) + "\n")
    proc = cli("analyze", "--counts", str(p))
    assert proc.returncode == 0
    report = json.loads(proc.stdout)
    sorkin = report["results"]["sorkin"]
    assert abs(sorkin["kappa"]) < 3.0 * sorkin["kappa_err"] + 1e-12
    jsonschema.validate(report, SCHEMA)

    bad = tmp_path / "bad.csv"
    bad.write_text("who,what\n1,2\n")
    assert cli("analyze", "--counts", str(bad)).returncode == 2
    short = tmp_path / "short.csv"
    short.write_text("config,counts,shots\nA,5,3\n")
    assert cli("analyze", "--counts", str(short)).returncode == 2


def test_cli_seed_override_changes_results(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps(FAST_G2))
    a = cli("g2", "--scenario", str(p), "--seed", "11")
    b = cli("g2", "--scenario", str(p), "--seed", "12")
    assert a.returncode == 0 and b.returncode == 0
    ra, rb = json.loads(a.stdout), json.loads(b.stdout)
    assert ra["scenario"]["seed"] == 11
    assert ra["results"] != rb["results"]
