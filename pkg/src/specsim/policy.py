"""Speculation-length controllers behind one state-machine interface.

A controller decides two things: how many tokens the draft model may produce
before the next verification (`should_continue_draft`), and how the window
adapts once a step's outcome is known (`observe_step`). States are immutable
values; `observe_step` returns a new state, so replaying the same outcome
sequence always reproduces the same trajectory.

Policies:

* ``fixed`` — constant window; the plain speculative-decoding baseline.
* ``hf_heuristic`` — additive-increase/subtractive-decrease: window + 2 on a
  fully accepted step, otherwise max(1, window - 1).
* ``assistant_threshold`` — static window, but drafting stops early whenever
  the candidate token's confidence falls below ``tau``.
* ``gammatune`` — tracks an exponentially weighted moving average
  ``gamma_bar`` of per-step accepted counts and sets the window to its
  ceiling, clamped to [gamma_min, gamma_max]. When a full window is accepted
  the observation is augmented by ``delta`` before entering the average, which
  lets the window grow past its current size on persistent full acceptance.
* ``gammatune_plus`` — ``gammatune`` plus the confidence gate of
  ``assistant_threshold``.

The ``expansion_mode`` parameter keeps an alternative ("literal") variant of
the full-acceptance rule in which the augmented value only feeds a transient
window assignment that the moving-average update immediately overwrites; it
exists for side-by-side comparison and makes expansion a no-op.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Mapping

from .model import ConfigError, StepOutcome

POLICY_NAMES = ("fixed", "hf_heuristic", "assistant_threshold", "gammatune", "gammatune_plus")

_GAMMATUNE_FAMILY = ("gammatune", "gammatune_plus")
_GATED_POLICIES = ("assistant_threshold", "gammatune_plus")

_DEFAULTS = {
    "eta": 0.25,
    "delta": 2,
    "gamma_min": 1,
    "gamma_max": 24,
    "tau": 0.4,
    "increment": 2,
    "decrement": 1,
    "expansion_mode": "augmented",
}

_ALLOWED_PARAMS = {
    "fixed": {"gamma_min", "gamma_max"},
    "hf_heuristic": {"gamma_min", "gamma_max", "increment", "decrement"},
    "assistant_threshold": {"gamma_min", "gamma_max", "tau"},
    "gammatune": {"eta", "delta", "gamma_min", "gamma_max", "expansion_mode"},
    "gammatune_plus": {"eta", "delta", "gamma_min", "gamma_max", "tau", "expansion_mode"},
}


@dataclass(frozen=True)
class DraftDecision:
    continue_drafting: bool


_CONTINUE = DraftDecision(True)
_STOP = DraftDecision(False)


@dataclass(frozen=True)
class ControllerState:
    """Immutable controller state; `gamma` is the window in force right now."""

    policy: str
    gamma: int
    gamma_bar: float
    eta: float
    delta: int
    gamma_min: int
    gamma_max: int
    tau: float
    increment: int
    decrement: int
    expansion_mode: str


def controller_init(name: str, params: Mapping[str, Any], initial_gamma: int) -> ControllerState:
    """Build a validated controller state for policy `name`.

    The initial window is `initial_gamma` clamped into [gamma_min, gamma_max];
    the moving average starts at that same value.
    """
    if name not in POLICY_NAMES:
        known = ", ".join(POLICY_NAMES)
        raise ConfigError("policy.name", f"unknown policy {name!r}; known: {known}")
    allowed = _ALLOWED_PARAMS[name]
    for key in params:
        if key not in allowed:
            raise ConfigError(f"policy.params.{key}", f"not a parameter of policy {name!r}")
    if initial_gamma < 1:
        raise ConfigError("initial_gamma", "must be >= 1")

    merged = dict(_DEFAULTS)
    merged.update(params)

    eta = float(merged["eta"])
    if not (0.0 < eta <= 1.0):
        raise ConfigError("policy.params.eta", f"must be in (0, 1], got {eta}")
    delta = int(merged["delta"])
    if delta < 0:
        raise ConfigError("policy.params.delta", "must be >= 0")
    gamma_min = int(merged["gamma_min"])
    gamma_max = int(merged["gamma_max"])
    if gamma_min < 1:
        raise ConfigError("policy.params.gamma_min", "must be >= 1")
    if gamma_min > gamma_max:
        raise ConfigError("policy.params.gamma_min", f"gamma_min {gamma_min} > gamma_max {gamma_max}")
    tau = float(merged["tau"])
    if not (0.0 <= tau <= 1.0):
        raise ConfigError("policy.params.tau", f"must be in [0, 1], got {tau}")
    increment = int(merged["increment"])
    decrement = int(merged["decrement"])
    if increment < 0 or decrement < 0:
        raise ConfigError("policy.params.increment", "increment/decrement must be >= 0")
    expansion_mode = str(merged["expansion_mode"])
    if expansion_mode not in ("augmented", "literal"):
        raise ConfigError("policy.params.expansion_mode", "must be 'augmented' or 'literal'")

    gamma = min(gamma_max, max(gamma_min, initial_gamma))
    return ControllerState(
        policy=name,
        gamma=gamma,
        gamma_bar=float(gamma),
        eta=eta,
        delta=delta,
        gamma_min=gamma_min,
        gamma_max=gamma_max,
        tau=tau,
        increment=increment,
        decrement=decrement,
        expansion_mode=expansion_mode,
    )


def resolved_params(state: ControllerState) -> dict[str, Any]:
    """Every parameter in force for this controller, defaults included."""
    out: dict[str, Any] = {"gamma_min": state.gamma_min, "gamma_max": state.gamma_max}
    if state.policy in _GAMMATUNE_FAMILY:
        out.update(eta=state.eta, delta=state.delta, expansion_mode=state.expansion_mode)
    if state.policy in _GATED_POLICIES:
        out["tau"] = state.tau
    if state.policy == "hf_heuristic":
        out.update(increment=state.increment, decrement=state.decrement)
    return out


def has_confidence_gate(state: ControllerState) -> bool:
    """True when drafting can stop early on a low-confidence candidate."""
    return state.policy in _GATED_POLICIES and state.tau > 0.0


def should_continue_draft(
    state: ControllerState, drafted_so_far: int, last_confidence: float | None = None
) -> DraftDecision:
    """Whether to draft another token given the window and (optionally) the
    candidate token's confidence.

    With `last_confidence` absent only the window bound applies; gated
    policies additionally require the confidence to clear `tau`.
    """
    if drafted_so_far >= state.gamma:
        return _STOP
    if last_confidence is not None and state.policy in _GATED_POLICIES:
        if last_confidence < state.tau:
            return _STOP
    return _CONTINUE


def observe_step(state: ControllerState, outcome: StepOutcome) -> ControllerState:
    """Fold one step outcome into the controller state.

    Pure: the same (state, outcome) always yields the same successor.
    """
    if state.policy in ("fixed", "assistant_threshold"):
        return state

    if state.policy == "hf_heuristic":
        if outcome.accepted == outcome.drafted:
            new_gamma = state.gamma + state.increment
        else:
            new_gamma = max(1, state.gamma - state.decrement)
        return replace(state, gamma=new_gamma)

    # gammatune family: moving-average window tracking with full-acceptance
    # augmentation. Augmentation only fires when the full current window was
    # drafted and accepted; an early-stopped step says nothing about whether
    # the rest of the window would have survived.
    accepted_eff = outcome.accepted
    full_window = outcome.drafted == state.gamma and outcome.accepted == state.gamma
    if full_window and state.expansion_mode == "augmented":
        accepted_eff = outcome.accepted + state.delta
    gamma_bar = (1.0 - state.eta) * state.gamma_bar + state.eta * accepted_eff
    gamma_bar = min(float(state.gamma_max), max(float(state.gamma_min), gamma_bar))
    return replace(state, gamma_bar=gamma_bar, gamma=math.ceil(gamma_bar))
