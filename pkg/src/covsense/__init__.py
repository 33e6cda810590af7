"""Low-rank channel-covariance estimation for hybrid mmWave MIMO receivers.

Submodules:

- ``channel``: array responses, clustered scenarios, channel draws and the true covariance
- ``structure``: Kronecker-to-rank-one permutation, Toeplitz weight matrices, energy ranks
- ``sensing``: hybrid training design, snapshot simulation and the reduced sensing operator
- ``solver``: the GCG-Alt low-rank solver and covariance reconstruction
- ``baseline``: dictionary OMP baseline and its flop model
- ``metrics`` / ``experiments``: evaluation metrics and the Monte-Carlo runner
"""

from .baseline import build_dictionary, dcomp_estimate, flops_dcomp
from .channel import (AngularSpread, ArrayGeometry, ArrayKind, ChannelScenario, ConfigurationError,
                      array_response, build_covariance, realize_channels, sample_scenario)
from .experiments import ExperimentConfig, run_experiment, write_results
from .metrics import flops_gcg_alt, nmse, subspace_efficiency
from .sensing import (MeasurementBatch, TrainingPlan, assemble_Q, design_training, sensing_vector,
                      simulate_snapshots)
from .solver import SolverConfig, gcg_alt, reconstruct_covariance
from .structure import build_weight_matrix, inverse_permute, permute, rank_for_energy

__version__ = "0.1.0"

__all__ = [
    "AngularSpread", "ArrayGeometry", "ArrayKind", "ChannelScenario", "ConfigurationError",
    "ExperimentConfig", "MeasurementBatch", "SolverConfig", "TrainingPlan",
    "array_response", "assemble_Q", "build_covariance", "build_dictionary", "build_weight_matrix",
    "dcomp_estimate", "design_training", "flops_dcomp", "flops_gcg_alt", "gcg_alt", "inverse_permute",
    "nmse", "permute", "rank_for_energy", "realize_channels", "reconstruct_covariance", "run_experiment",
    "sample_scenario", "sensing_vector", "simulate_snapshots", "subspace_efficiency", "write_results",
]
