"""Simulator and policy library for speculative-decoding window control."""

from .acceptance import (
    RegimeSpec,
    TraceExhausted,
    TraceFormatError,
    TraceRecord,
    build_process,
    default_regime_spec,
    leading_run,
    load_trace,
    save_trace,
)
from .cost import (
    CostBreakdown,
    cost_per_token,
    exact_expected_accepted,
    expected_cost,
    linear_expected_accepted,
    optimal_fixed_gamma,
    speedup_factor,
)
from .model import (
    AcceptanceSpec,
    ConfigError,
    LatencyProfile,
    PolicySpec,
    SimulationConfig,
    StepOutcome,
    builtin_profiles,
    config_from_dict,
    load_config,
    resolve_profile,
)
from .policy import (
    POLICY_NAMES,
    ControllerState,
    DraftDecision,
    controller_init,
    observe_step,
    should_continue_draft,
)
from .sim import EpisodeReport, run_episode, summarize, trace_records

__version__ = "0.1.0"

__all__ = [
    "AcceptanceSpec",
    "ConfigError",
    "ControllerState",
    "CostBreakdown",
    "DraftDecision",
    "EpisodeReport",
    "LatencyProfile",
    "POLICY_NAMES",
    "PolicySpec",
    "RegimeSpec",
    "SimulationConfig",
    "StepOutcome",
    "TraceExhausted",
    "TraceFormatError",
    "TraceRecord",
    "build_process",
    "builtin_profiles",
    "config_from_dict",
    "controller_init",
    "cost_per_token",
    "default_regime_spec",
    "exact_expected_accepted",
    "expected_cost",
    "leading_run",
    "linear_expected_accepted",
    "load_config",
    "load_trace",
    "observe_step",
    "optimal_fixed_gamma",
    "resolve_profile",
    "run_episode",
    "save_trace",
    "should_continue_draft",
    "speedup_factor",
    "summarize",
    "trace_records",
    "__version__",
]
