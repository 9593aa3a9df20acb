"""Interval observers for linear systems via Sylvester/KKL transformations."""

from .ivec import IntervalVector, contains, interval_image, width
from .lti import BoundSignals, LtiIntervalObserver, LtiPlant, default_target, design_lti
from .ltv_ct import CtLtvIntervalObserver, CtLtvPlant, KklTarget, LtvPlant, detect_tstar
from .ltv_dt import DtLtvIntervalObserver, DtLtvPlant, detect_kstar, uco_check
from .matops import pinv, solve_sylvester, split_pm
from .sim import Scenario, SimulationTrace, simulate, simulate_ct, simulate_dt

__version__ = "0.1.0"

__all__ = [
    "BoundSignals", "CtLtvIntervalObserver", "CtLtvPlant", "DtLtvIntervalObserver",
    "DtLtvPlant", "IntervalVector", "KklTarget", "LtiIntervalObserver", "LtiPlant",
    "LtvPlant", "Scenario", "SimulationTrace", "contains", "default_target", "design_lti",
    "detect_kstar", "detect_tstar", "interval_image", "pinv", "simulate", "simulate_ct",
    "simulate_dt", "solve_sylvester", "split_pm", "uco_check", "width",
]
