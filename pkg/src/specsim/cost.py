"""Analytic cost model for fixed-window speculative decoding.

All costs are expressed in draft-token time units: dividing the wall-clock
cost of an episode by T_draft makes the analysis depend only on the latency
ratio c = T_target / T_draft, not on the absolute numbers.

The model assumes each decoding step accepts `alpha * gamma + 1` tokens on
average, where `alpha` is the fraction of drafted tokens that get accepted.
`exact_expected_accepted` supplies the exact truncated-geometric expectation
for the stricter model where each token is accepted independently with
probability `alpha`; the two disagree for large windows, and the simulator is
cross-checked against the exact form.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import LatencyProfile


@dataclass(frozen=True)
class CostBreakdown:
    """Expected per-episode call counts and total cost (in units of T_draft)."""

    n_steps: float
    calls_target: float
    calls_draft: float
    total_cost: float


def speedup_factor(profile: LatencyProfile) -> float:
    """Latency ratio c = t_target_ms / t_draft_ms."""
    return profile.t_target_ms / profile.t_draft_ms


def _check_domain(alpha: float, gamma: int, c: float | None = None, n: int | None = None) -> None:
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    if gamma < 1:
        raise ValueError(f"gamma must be >= 1, got {gamma}")
    if c is not None and not (c > 0):
        raise ValueError(f"c must be > 0, got {c}")
    if n is not None and n < 1:
        raise ValueError(f"n must be >= 1, got {n}")


def expected_cost(alpha: float, gamma: int, c: float, n: int) -> CostBreakdown:
    """Expected cost of generating `n` tokens at fixed window `gamma`.

    Each step needs one target call and `gamma` draft calls, and yields
    `alpha * gamma + 1` tokens, so `n` tokens take n / (alpha * gamma + 1)
    steps at a per-step cost of (c + gamma) draft-token units.
    """
    _check_domain(alpha, gamma, c, n)
    n_steps = n / (alpha * gamma + 1.0)
    return CostBreakdown(
        n_steps=n_steps,
        calls_target=n_steps,
        calls_draft=gamma * n_steps,
        total_cost=n_steps * (c + gamma),
    )


def cost_per_token(alpha: float, gamma: int, c: float) -> float:
    """Expected cost per generated token, (c + gamma) / (alpha * gamma + 1)."""
    _check_domain(alpha, gamma, c)
    return (c + gamma) / (alpha * gamma + 1.0)


def optimal_fixed_gamma(alpha: float, c: float, gamma_max: int) -> int:
    """Cheapest fixed window in {1..gamma_max}; ties go to the smaller window.

    The target token count cancels out of the argmin, so the search runs on
    per-token cost.
    """
    _check_domain(alpha, 1, c)
    if gamma_max < 1:
        raise ValueError(f"gamma_max must be >= 1, got {gamma_max}")
    best_gamma = 1
    best = cost_per_token(alpha, 1, c)
    for gamma in range(2, gamma_max + 1):
        candidate = cost_per_token(alpha, gamma, c)
        if candidate < best:
            best = candidate
            best_gamma = gamma
    return best_gamma


def exact_expected_accepted(alpha: float, gamma: int) -> float:
    """Exact expected tokens per step (bonus included) under i.i.d. acceptance.

    With per-token acceptance probability `alpha` and window `gamma`, the
    accepted leading run L satisfies E[L + 1] = (1 - alpha^(gamma+1)) / (1 - alpha).
    Defined for alpha in [0, 1); at alpha = 1 use gamma + 1 directly.
    """
    if not (0.0 <= alpha < 1.0):
        raise ValueError(f"alpha must be in [0, 1), got {alpha}; at alpha=1 the value is gamma + 1")
    if gamma < 1:
        raise ValueError(f"gamma must be >= 1, got {gamma}")
    return (1.0 - alpha ** (gamma + 1)) / (1.0 - alpha)


def linear_expected_accepted(alpha: float, gamma: int) -> float:
    """First-order approximation alpha * gamma + 1 of tokens per step."""
    _check_domain(alpha, gamma)
    return alpha * gamma + 1.0
