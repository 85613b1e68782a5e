"""Coupled coarse/fine interfacial-mixing demonstration."""
from .coarse import CflViolation, MixingState, coarse_step, erf_profile, max_stable_dt
from .orchestrator import (
    CallMap,
    ClosureError,
    MixingResult,
    Orchestrator,
    OrchestratorConfig,
    closure_inputs,
    forecast_requests,
    run_mixing_experiment,
    spearman,
)
