"""spikemp: spiking neural networks with single-timestep membrane propagation."""

from .tensor import (
    GradTape,
    ShapeMismatchError,
    TapeError,
    Tensor,
    backward,
    check_gradients,
    elementwise,
    matmul,
    reduce,
)
from .neuron import (
    HandoffMismatch,
    MembraneState,
    NeuronConfig,
    Policy,
    ThresholdMode,
    TWUState,
    amp2_backward_factor,
    amp2_forward,
    run_twu_sequence,
    surrogate_g,
    surrogate_g_prime,
    twu_step,
)
from .shortcuts import Bundle, Combine, Kind, ShortcutKind, apply_shortcut
from .network import (
    ForwardTrace,
    NetworkSpec,
    SpecError,
    build_network,
    depth_mlp_spec,
    forward,
    loss_and_grad,
    pointnet_tiny_spec,
)
from .stats import InitStrategy, Strategy, closed_form_limits, monte_carlo_x, unrolled_recursion_oracle
from .energy import EnergyReport, estimate_energy, measure_firing_rates
from .datagen import generate_event_dataset, generate_point_dataset, integrate_event_frames
from .trainer import ExperimentConfig, RunRecord, run_ablation_grid, run_experiment

__version__ = "0.1.0"

__all__ = [
    "GradTape",
    "ShapeMismatchError",
    "TapeError",
    "Tensor",
    "backward",
    "check_gradients",
    "elementwise",
    "matmul",
    "reduce",
    "HandoffMismatch",
    "MembraneState",
    "NeuronConfig",
    "Policy",
    "ThresholdMode",
    "TWUState",
    "amp2_backward_factor",
    "amp2_forward",
    "run_twu_sequence",
    "surrogate_g",
    "surrogate_g_prime",
    "twu_step",
    "Bundle",
    "Combine",
    "Kind",
    "ShortcutKind",
    "apply_shortcut",
    "ForwardTrace",
    "NetworkSpec",
    "SpecError",
    "build_network",
    "depth_mlp_spec",
    "forward",
    "loss_and_grad",
    "pointnet_tiny_spec",
    "InitStrategy",
    "Strategy",
    "closed_form_limits",
    "monte_carlo_x",
    "unrolled_recursion_oracle",
    "EnergyReport",
    "estimate_energy",
    "measure_firing_rates",
    "generate_event_dataset",
    "generate_point_dataset",
    "integrate_event_frames",
    "ExperimentConfig",
    "RunRecord",
    "run_ablation_grid",
    "run_experiment",
]
