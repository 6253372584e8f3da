"""Digital twin of a three-path photonic payload and its orbit."""

__version__ = "0.1.0"

from .analysis import (Bench, CalibrationResult, G2Estimate, SorkinResult,
                       calibrate_phases, estimate_crosstalk, estimate_g2,
                       measure_config_probability, run_triple_test,
                       sorkin_epsilon, sorkin_kappa)
from .circuit import (ALL_CONFIGS, BlockingConfig, CircuitParams, CircuitState,
                      Coupler, Heater, HeaterDrive, Switch, SwitchState,
                      analytic_max_probability, build_circuit,
                      output_amplitude, transmit_stream)
from .detection import (CoincidenceHistogram, DetectorSystem, FilterParams,
                        SpadParams, apply_filter, coincidence_histogram,
                        detect_all, saturation_rate, spad_detect)
from .errors import Q3SimError
from .mission import (ContactStats, EnergyReport, GroundStation, OrbitSpec,
                      PassWindow, PowerBudget, contact_statistics,
                      energy_margin, orbital_period, predict_passes,
                      sso_inclination)
from .rng import substream
from .scenario import Scenario, load_scenario
from .source import (EmitterParams, PumpLaser, TwoLevelEmitter, WeakCoherentCW,
                     WeakCoherentPulsed, emission_rate, generate_photons,
                     generate_stream, mean_rate, pump_power, theoretical_g2)
from .timetags import TimeTagSeries

__all__ = [
    "__version__",
    "ALL_CONFIGS", "Bench", "BlockingConfig", "CalibrationResult",
    "CircuitParams", "CircuitState", "CoincidenceHistogram", "ContactStats",
    "Coupler", "DetectorSystem", "EmitterParams", "EnergyReport",
    "FilterParams", "G2Estimate", "GroundStation", "Heater", "HeaterDrive",
    "OrbitSpec", "PassWindow", "PowerBudget", "PumpLaser", "Q3SimError",
    "Scenario", "SorkinResult", "SpadParams", "Switch", "SwitchState",
    "TimeTagSeries", "TwoLevelEmitter", "WeakCoherentCW", "WeakCoherentPulsed",
    "analytic_max_probability", "apply_filter", "build_circuit",
    "calibrate_phases", "coincidence_histogram", "contact_statistics",
    "detect_all", "emission_rate", "energy_margin", "estimate_crosstalk",
    "estimate_g2", "generate_photons", "generate_stream", "load_scenario",
    "mean_rate", "measure_config_probability", "orbital_period",
    "output_amplitude", "predict_passes", "pump_power", "run_triple_test",
    "saturation_rate", "sorkin_epsilon", "sorkin_kappa", "spad_detect",
    "sso_inclination", "substream", "theoretical_g2", "transmit_stream",
]
