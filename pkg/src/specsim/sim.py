"""The speculative-decoding episode loop.

One episode generates tokens until the target count is reached (or a replayed
trace runs out). Each step drafts tokens one at a time under the controller's
window and early-stop predicate, verifies them in a single target call with
leading-run acceptance plus the target's bonus token, accrues modeled wall
time, and feeds the outcome back into the controller.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from . import acceptance as acceptance_mod
from . import policy as policy_mod
from .acceptance import TraceRecord, leading_run
from .model import SimulationConfig, StepOutcome


@dataclass(frozen=True)
class EpisodeReport:
    """Aggregate metrics for one simulated episode."""

    config: SimulationConfig
    total_tokens: int
    total_ms: float
    throughput_tokens_per_s: float
    steps: tuple[StepOutcome, ...]
    mean_gamma: float
    mean_accepted: float
    calls_target: int
    calls_draft: int
    truncated: bool


def run_episode(config: SimulationConfig, *, collect_steps: bool = True) -> EpisodeReport:
    """Simulate one episode under `config`.

    The final step is never cut short, so the episode may overshoot
    `target_tokens` by up to one full window plus the bonus token. With
    `collect_steps=False` the per-step outcomes are dropped from the report,
    which keeps very long episodes cheap; the aggregates are unaffected.
    """
    state = policy_mod.controller_init(config.policy.name, config.policy.params, config.initial_gamma)
    process = acceptance_mod.build_process(config.acceptance.name, config.acceptance.params, config.seed)

    t_draft = config.profile.t_draft_ms
    t_target = config.profile.t_target_ms
    verify_per_token = config.profile.verify_per_token_ms
    gated = policy_mod.has_confidence_gate(state)

    steps: list[StepOutcome] = []
    total_tokens = 0
    total_ms = 0.0
    calls_draft = 0
    n_steps = 0
    gamma_sum = 0
    accepted_sum = 0
    truncated = False

    while total_tokens < config.target_tokens:
        if not process.begin_step():
            truncated = True
            break
        gamma_sum += state.gamma

        verdicts: list[bool] = []
        confidences: list[float] = []
        probe_ms = 0.0
        while policy_mod.should_continue_draft(state, len(verdicts), None).continue_drafting:
            sample = process.next_token_verdict()
            if sample is None:
                break
            verdict, confidence = sample
            if gated and not policy_mod.should_continue_draft(
                state, len(verdicts), confidence
            ).continue_drafting:
                # The candidate was inspected but never drafted; by default its
                # draft time is not charged.
                if config.charge_probe:
                    probe_ms = t_draft
                break
            verdicts.append(verdict)
            confidences.append(confidence)

        drafted = len(verdicts)
        accepted = leading_run(verdicts)
        elapsed = drafted * t_draft + t_target + drafted * verify_per_token + probe_ms
        outcome = StepOutcome(
            drafted=drafted,
            accepted=accepted,
            bonus=True,
            confidences=tuple(confidences),
            elapsed_ms=elapsed,
            verdicts=tuple(verdicts),
        )
        if collect_steps:
            steps.append(outcome)
        state = policy_mod.observe_step(state, outcome)

        n_steps += 1
        calls_draft += drafted
        accepted_sum += accepted
        total_tokens += outcome.tokens_emitted
        total_ms += elapsed

    throughput = 1000.0 * total_tokens / total_ms if total_ms > 0 else 0.0
    return EpisodeReport(
        config=config,
        total_tokens=total_tokens,
        total_ms=total_ms,
        throughput_tokens_per_s=throughput,
        steps=tuple(steps),
        mean_gamma=gamma_sum / n_steps if n_steps else 0.0,
        mean_accepted=accepted_sum / n_steps if n_steps else 0.0,
        calls_target=n_steps,
        calls_draft=calls_draft,
        truncated=truncated,
    )


SUMMARY_COLUMNS = (
    "schema",
    "policy",
    "profile",
    "initial_gamma",
    "seed",
    "target_tokens",
    "total_tokens",
    "total_ms",
    "throughput_tokens_per_s",
    "mean_gamma",
    "mean_accepted",
    "calls_target",
    "calls_draft",
    "truncated",
)

SUMMARY_SCHEMA_VERSION = 1


def summarize(report: EpisodeReport) -> dict[str, Any]:
    """Flatten a report into one CSV-ready row (see SUMMARY_COLUMNS)."""
    cfg = report.config
    return {
        "schema": SUMMARY_SCHEMA_VERSION,
        "policy": cfg.policy.name,
        "profile": cfg.profile.name,
        "initial_gamma": cfg.initial_gamma,
        "seed": cfg.seed,
        "target_tokens": cfg.target_tokens,
        "total_tokens": report.total_tokens,
        "total_ms": f"{report.total_ms:.6f}",
        "throughput_tokens_per_s": f"{report.throughput_tokens_per_s:.6f}",
        "mean_gamma": f"{report.mean_gamma:.6f}",
        "mean_accepted": f"{report.mean_accepted:.6f}",
        "calls_target": report.calls_target,
        "calls_draft": report.calls_draft,
        "truncated": int(report.truncated),
    }


def trace_records(report: EpisodeReport) -> list[TraceRecord]:
    """Per-step raw verdicts in the trace-file schema (round-trips via load_trace)."""
    return [
        TraceRecord(step_index=i, accepts=step.verdicts, confidences=step.confidences)
        for i, step in enumerate(report.steps)
    ]


def report_to_dict(report: EpisodeReport) -> dict[str, Any]:
    """JSON-ready dump of a report, config included for reproducibility."""
    return {
        "config": report.config.to_dict(),
        "total_tokens": report.total_tokens,
        "total_ms": report.total_ms,
        "throughput_tokens_per_s": report.throughput_tokens_per_s,
        "mean_gamma": report.mean_gamma,
        "mean_accepted": report.mean_accepted,
        "calls_target": report.calls_target,
        "calls_draft": report.calls_draft,
        "truncated": report.truncated,
        "steps": [
            {
                "drafted": s.drafted,
                "accepted": s.accepted,
                "bonus": s.bonus,
                "confidences": list(s.confidences),
                "verdicts": list(s.verdicts),
                "elapsed_ms": s.elapsed_ms,
            }
            for s in report.steps
        ],
    }
