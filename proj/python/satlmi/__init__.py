"""Saturating state-feedback synthesis from models or noisy data."""

from ._core import (
    Error,
    InfeasibleError,
    NumericalError,
    Plant,
    SynthesisResult,
    certify,
    check_equivalence,
    deadzone,
    generate_data,
    informativity,
    relaxed_lmi,
    run_sweep,
    sat,
    simulate,
    synthesize_data,
    synthesize_model,
)

__all__ = [
    "Error",
    "InfeasibleError",
    "NumericalError",
    "Plant",
    "SynthesisResult",
    "certify",
    "check_equivalence",
    "deadzone",
    "generate_data",
    "informativity",
    "relaxed_lmi",
    "run_sweep",
    "sat",
    "simulate",
    "synthesize_data",
    "synthesize_model",
]
