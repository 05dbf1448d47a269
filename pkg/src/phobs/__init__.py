"""Observer synthesis for port-Hamiltonian systems with state-dependent
input maps, with certified decay rates and a DEA case study."""

__version__ = "0.1.0"

from .embedding import (
    OperatingDomain,
    ParameterBounds,
    VertexSet,
    WeightVector,
    compute_parameter_bounds,
    enumerate_vertices,
    mean_value_residual,
    reconstruct,
    weights,
)
from .model import DEAParams, PHSystem, StateVec, dea_system
from .simulate import InputSignal, Scenario, Trajectory, bound_check, integrate
from .synthesis import SynthesisResult, max_decay_rate, scheduled_gain, synthesize

__all__ = [
    "DEAParams",
    "InputSignal",
    "OperatingDomain",
    "PHSystem",
    "ParameterBounds",
    "Scenario",
    "StateVec",
    "SynthesisResult",
    "Trajectory",
    "VertexSet",
    "WeightVector",
    "__version__",
    "bound_check",
    "compute_parameter_bounds",
    "dea_system",
    "enumerate_vertices",
    "integrate",
    "max_decay_rate",
    "mean_value_residual",
    "reconstruct",
    "scheduled_gain",
    "synthesize",
    "weights",
]
