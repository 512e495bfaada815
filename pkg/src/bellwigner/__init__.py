"""Simulation and statistics for a six-photon Bell-Wigner (extended Wigner's
friend) experiment."""
from .circuit import (SettingPair, bell_state, expectation, four_photon_state, friend_measure,
                      fusion_gate_kraus, ideal_tables, observable, outcome_probabilities,
                      resource_state)
from .loopholes import NoiseModel, apply_noise, eta_threshold, s_of_eta
from .stats import (BellWignerResult, CountsTable, UncertainValue, analytic_result,
                    monte_carlo_uncertainty, s_value, sample_campaign)

__version__ = "0.1.0"

__all__ = [
    "BellWignerResult", "CountsTable", "NoiseModel", "SettingPair", "UncertainValue",
    "analytic_result", "apply_noise", "bell_state", "eta_threshold", "expectation",
    "four_photon_state", "friend_measure", "fusion_gate_kraus", "ideal_tables",
    "monte_carlo_uncertainty", "observable", "outcome_probabilities", "resource_state",
    "s_of_eta", "s_value", "sample_campaign",
]
