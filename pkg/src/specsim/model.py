"""Domain types, the built-in latency catalog, and config ingestion.

Everything in here is immutable after construction; instances can be shared
freely between threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

CONFIG_SCHEMA_VERSION = 1

_MAX_SEED = 2**64 - 1


class ConfigError(ValueError):
    """Raised for any invalid configuration; `path` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class LatencyProfile:
    """Per-token latency constants for one draft/target model pair.

    `t_target_ms` is the cost of one target forward pass, which serves both
    for generating a single token and for verifying a whole drafted window in
    parallel. `verify_per_token_ms` is an optional linear penalty per verified
    token for sensitivity studies; the standard timing model keeps it at 0.
    """

    name: str
    t_draft_ms: float
    t_target_ms: float
    verify_per_token_ms: float = 0.0

    def __post_init__(self) -> None:
        if not self.name:
            raise ConfigError("profile.name", "must be a non-empty string")
        if not (self.t_draft_ms > 0):
            raise ConfigError("profile.t_draft_ms", "non-positive latency")
        if not (self.t_target_ms > 0):
            raise ConfigError("profile.t_target_ms", "non-positive latency")
        if self.verify_per_token_ms < 0:
            raise ConfigError("profile.verify_per_token_ms", "must be >= 0")

    @property
    def speedup(self) -> float:
        """Target-to-draft latency ratio (how much cheaper a draft token is)."""
        return self.t_target_ms / self.t_draft_ms


# Measured per-token times (milliseconds) for the four bundled model pairs,
# keyed as "target/draft". The 70B entry was measured under int4 quantization;
# int8 deployments of the same model will see a different constant.
_BUILTIN_PROFILES = (
    LatencyProfile("vicuna-13b-v1.5/vicuna-160m", t_draft_ms=5.61, t_target_ms=20.15),
    LatencyProfile("vicuna-7b-v1.5/vicuna-68m", t_draft_ms=1.76, t_target_ms=14.29),
    LatencyProfile("Llama-3.1-8B/Llama-3.2-1B", t_draft_ms=8.87, t_target_ms=16.65),
    LatencyProfile("Llama-3.1-70B/Llama-3.1-8B", t_draft_ms=16.65, t_target_ms=925.05),
)


def builtin_profiles() -> dict[str, LatencyProfile]:
    """Catalog of the bundled model-pair latency profiles, keyed by name."""
    return {p.name: p for p in _BUILTIN_PROFILES}


def resolve_profile(name: str) -> LatencyProfile:
    try:
        return builtin_profiles()[name]
    except KeyError:
        known = ", ".join(sorted(builtin_profiles()))
        raise ConfigError("profile", f"unknown profile {name!r}; known: {known}") from None


@dataclass(frozen=True)
class StepOutcome:
    """Result of one speculative step.

    `accepted` is the length of the leading run of accepted draft tokens;
    `verdicts` keeps the raw per-position accept/reject flags so traces can be
    exported without re-deriving them. The step emits `accepted + 1` tokens
    whenever `bonus` is set (the target contributes one token per
    verification).
    """

    drafted: int
    accepted: int
    bonus: bool
    confidences: tuple[float, ...]
    elapsed_ms: float
    verdicts: tuple[bool, ...] = ()

    def __post_init__(self) -> None:
        if self.drafted < 0:
            raise ValueError("drafted must be >= 0")
        if not (0 <= self.accepted <= self.drafted):
            raise ValueError("accepted must be in [0, drafted]")
        if len(self.confidences) != self.drafted:
            raise ValueError("confidences must have one entry per drafted token")
        if self.verdicts and len(self.verdicts) != self.drafted:
            raise ValueError("verdicts must have one entry per drafted token")
        if self.elapsed_ms < 0:
            raise ValueError("elapsed_ms must be >= 0")

    @property
    def tokens_emitted(self) -> int:
        return self.accepted + (1 if self.bonus else 0)


@dataclass(frozen=True)
class PolicySpec:
    name: str
    params: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class AcceptanceSpec:
    name: str
    params: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class SimulationConfig:
    """Validated description of one simulated episode."""

    profile: LatencyProfile
    policy: PolicySpec
    acceptance: AcceptanceSpec
    target_tokens: int
    initial_gamma: int
    seed: int
    charge_probe: bool = False

    def __post_init__(self) -> None:
        if self.target_tokens < 1:
            raise ConfigError("target_tokens", "must be >= 1")
        if self.initial_gamma < 1:
            raise ConfigError("initial_gamma", "must be >= 1")
        if not (0 <= self.seed <= _MAX_SEED):
            raise ConfigError("seed", "must be an unsigned 64-bit integer")

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready dict; re-loading it reproduces this config exactly."""
        return {
            "schema": CONFIG_SCHEMA_VERSION,
            "profile": {
                "name": self.profile.name,
                "t_draft_ms": self.profile.t_draft_ms,
                "t_target_ms": self.profile.t_target_ms,
                "verify_per_token_ms": self.profile.verify_per_token_ms,
            },
            "policy": {"name": self.policy.name, "params": dict(self.policy.params)},
            "acceptance": {"name": self.acceptance.name, "params": dict(self.acceptance.params)},
            "target_tokens": self.target_tokens,
            "initial_gamma": self.initial_gamma,
            "seed": self.seed,
            "charge_probe": self.charge_probe,
        }


_TOP_LEVEL_FIELDS = {
    "schema",
    "profile",
    "policy",
    "acceptance",
    "target_tokens",
    "initial_gamma",
    "seed",
    "charge_probe",
}
_PROFILE_FIELDS = {"name", "t_draft_ms", "t_target_ms", "verify_per_token_ms"}
_SPEC_FIELDS = {"name", "params"}


def _require(raw: Mapping[str, Any], key: str, path: str) -> Any:
    if key not in raw:
        raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
    return raw[key]


def _check_unknown(raw: Mapping[str, Any], allowed: set[str], path: str, strict: bool) -> None:
    if not strict:
        return
    unknown = set(raw) - allowed
    if unknown:
        name = sorted(unknown)[0]
        where = f"{path}.{name}" if path else name
        raise ConfigError(where, "unknown field (use --lenient to ignore)")


def _as_int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    return value


def _as_number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def _parse_profile(raw: Any, strict: bool) -> LatencyProfile:
    if isinstance(raw, str):
        return resolve_profile(raw)
    if not isinstance(raw, Mapping):
        raise ConfigError("profile", "expected a builtin profile name or an inline object")
    _check_unknown(raw, _PROFILE_FIELDS, "profile", strict)
    name = _require(raw, "name", "profile")
    if not isinstance(name, str):
        raise ConfigError("profile.name", "expected a string")
    return LatencyProfile(
        name=name,
        t_draft_ms=_as_number(_require(raw, "t_draft_ms", "profile"), "profile.t_draft_ms"),
        t_target_ms=_as_number(_require(raw, "t_target_ms", "profile"), "profile.t_target_ms"),
        verify_per_token_ms=_as_number(raw.get("verify_per_token_ms", 0.0), "profile.verify_per_token_ms"),
    )


def _parse_spec(raw: Any, path: str, strict: bool) -> tuple[str, dict[str, Any]]:
    if not isinstance(raw, Mapping):
        raise ConfigError(path, "expected an object with `name` and optional `params`")
    _check_unknown(raw, _SPEC_FIELDS, path, strict)
    name = _require(raw, "name", path)
    if not isinstance(name, str):
        raise ConfigError(f"{path}.name", "expected a string")
    params = raw.get("params", {})
    if not isinstance(params, Mapping):
        raise ConfigError(f"{path}.params", "expected an object")
    return name, dict(params)


def config_from_dict(
    raw: Mapping[str, Any],
    *,
    strict: bool = True,
    base_dir: Path | None = None,
) -> SimulationConfig:
    """Validate a raw config mapping into a SimulationConfig.

    `base_dir` resolves relative trace paths (replay acceptance) against the
    config file's directory. Raises ConfigError with the offending field path.
    """
    # Imported here so model stays the bottom of the dependency graph.
    from . import acceptance as acceptance_mod
    from . import policy as policy_mod

    if not isinstance(raw, Mapping):
        raise ConfigError("config", "expected a JSON object at the top level")
    _check_unknown(raw, _TOP_LEVEL_FIELDS, "", strict)

    schema = _as_int(_require(raw, "schema", ""), "schema")
    if schema != CONFIG_SCHEMA_VERSION:
        raise ConfigError("schema", f"unsupported schema version {schema} (expected {CONFIG_SCHEMA_VERSION})")

    profile = _parse_profile(_require(raw, "profile", ""), strict)
    policy_name, policy_params = _parse_spec(_require(raw, "policy", ""), "policy", strict)
    accept_name, accept_params = _parse_spec(_require(raw, "acceptance", ""), "acceptance", strict)

    target_tokens = _as_int(_require(raw, "target_tokens", ""), "target_tokens")
    initial_gamma = _as_int(_require(raw, "initial_gamma", ""), "initial_gamma")
    seed = _as_int(_require(raw, "seed", ""), "seed")
    charge_probe = raw.get("charge_probe", False)
    if not isinstance(charge_probe, bool):
        raise ConfigError("charge_probe", "expected a boolean")

    if target_tokens < 1:
        raise ConfigError("target_tokens", "must be >= 1")
    if initial_gamma < 1:
        raise ConfigError("initial_gamma", "must be >= 1")
    if not (0 <= seed <= _MAX_SEED):
        raise ConfigError("seed", "must be an unsigned 64-bit integer")

    accept_params = acceptance_mod.validate_params(accept_name, accept_params, base_dir=base_dir)
    # Dry initialization surfaces unknown names and out-of-domain parameters now.
    policy_mod.controller_init(policy_name, policy_params, initial_gamma)

    return SimulationConfig(
        profile=profile,
        policy=PolicySpec(policy_name, policy_params),
        acceptance=AcceptanceSpec(accept_name, accept_params),
        target_tokens=target_tokens,
        initial_gamma=initial_gamma,
        seed=seed,
        charge_probe=charge_probe,
    )


def load_config(path: str | Path, *, strict: bool = True) -> SimulationConfig:
    """Load and validate a JSON config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"no such file: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"malformed JSON in {path}: {exc}") from exc
    return config_from_dict(raw, strict=strict, base_dir=path.parent)
