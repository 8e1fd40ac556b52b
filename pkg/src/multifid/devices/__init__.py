"""Dynamic device models with full and SPT-reduced variants."""
from .interface import InterfaceEquivalent, device_injection, to_norton, to_thevenin
from .inverter import (InverterParams, InverterVariant, droop_outer_rhs, inner_loop_reduced, inner_loop_rhs,
                       inverter_eval, lcl_filter_rhs, pll_rhs, vsm_outer_rhs)
from .machine import MachineParams, airgap_torque, machine_initial_state, machine_rhs

__all__ = [
    "InterfaceEquivalent", "device_injection", "to_norton", "to_thevenin",
    "InverterParams", "InverterVariant", "droop_outer_rhs", "inner_loop_reduced", "inner_loop_rhs",
    "inverter_eval", "lcl_filter_rhs", "pll_rhs", "vsm_outer_rhs",
    "MachineParams", "airgap_torque", "machine_initial_state", "machine_rhs",
]
