"""Cauchy time functions on sampled 1+1 dimensional spacetimes: causal
graphs, volume (Geroch) time functions, steep temporal synthesis, surface
adaptation and group-invariant constructions."""

from .causal import CausalGraph, build_causal_graph
from .geroch import geroch_time, verify_cauchy, verify_time_function
from .spacetime import ModelSpec, SampledSpacetime, SurfaceGraph, build_group, build_model
from .steep import adapted_temporal, steep_bounded, steep_temporal
from .symmetry import average_field, average_measure, check_orbit_acausal, invariant_temporal

__version__ = "0.1.0"

__all__ = [
    "CausalGraph",
    "ModelSpec",
    "SampledSpacetime",
    "SurfaceGraph",
    "adapted_temporal",
    "average_field",
    "average_measure",
    "build_causal_graph",
    "build_group",
    "build_model",
    "check_orbit_acausal",
    "geroch_time",
    "invariant_temporal",
    "steep_bounded",
    "steep_temporal",
    "verify_cauchy",
    "verify_time_function",
]
