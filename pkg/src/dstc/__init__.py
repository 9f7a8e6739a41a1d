"""Emulator of a mismatched mixed-signal neuromorphic fabric running
spatiotemporal correlator networks built from balanced E-I elements."""

from .dynamics import AdExParams, DpiParams, NeuronState, SynapseState, SynapseType, run_neuron
from .ei import Balance, DelayProfile, NoRebound, characterize_delay, delay_distribution, make_ei_element
from .energy import EnergyCostTable, EnergyLedger, OpKind, Variant, column_activation_energy, lateral_spike_energy
from .errors import DstcError
from .fabric import CircuitAddress, Fabric, MismatchModel, sample_params

__version__ = "0.1.0"

__all__ = [
    "AdExParams",
    "Balance",
    "CircuitAddress",
    "DelayProfile",
    "DpiParams",
    "DstcError",
    "EnergyCostTable",
    "EnergyLedger",
    "Fabric",
    "MismatchModel",
    "NeuronState",
    "NoRebound",
    "OpKind",
    "SynapseState",
    "SynapseType",
    "Variant",
    "characterize_delay",
    "column_activation_energy",
    "delay_distribution",
    "lateral_spike_energy",
    "make_ei_element",
    "run_neuron",
    "sample_params",
]
