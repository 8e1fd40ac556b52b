"""Scenario assembly, initialization, compilation, simulation and comparison."""
from .compile import SystemModel, compile_system
from .initialize import InitialCondition, initialize
from .powerflow import PowerFlowResult, power_flow
from .schema import (FORMULATIONS, Scenario, default_scenario, default_scenario_path, diagnose, load_scenario,
                     scenario_from_dict, validate)
from .run import ComparisonReport, TimeSeriesResult, available_signals, compare, default_record, read_csv, run
