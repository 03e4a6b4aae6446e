"""Command-line harness: single runs, sweeps, the analytic oracle, and the
builtin profile catalog.

Exit codes: 0 success, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import cost as cost_mod
from . import policy as policy_mod
from .acceptance import save_trace, validate_params
from .model import (
    AcceptanceSpec,
    ConfigError,
    PolicySpec,
    SimulationConfig,
    builtin_profiles,
    config_from_dict,
    resolve_profile,
)
from .sim import (
    SUMMARY_COLUMNS,
    SUMMARY_SCHEMA_VERSION,
    report_to_dict,
    run_episode,
    summarize,
    trace_records,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

DEFAULT_SWEEP_GAMMAS = (1, 2, 3, 4, 5, 6, 7, 8, 12, 16, 20, 24)
BASELINE_POLICY = "fixed"

CELL_COLUMNS = (
    "schema",
    "policy",
    "profile",
    "initial_gamma",
    "replicate",
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

AGGREGATE_COLUMNS = (
    "schema",
    "policy",
    "profile",
    "n_gammas",
    "replicates",
    "mean_throughput_tokens_per_s",
    "std_across_gamma",
    "speedup_mean",
    "speedup_std",
)


def cell_seed(master_seed: int, policy: str, profile: str, gamma: int, replicate: int) -> int:
    """Stable per-cell seed; re-running one cell in isolation reproduces it."""
    key = f"{master_seed}|{policy}|{profile}|{gamma}|{replicate}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")


@dataclass(frozen=True)
class SweepSpec:
    """A grid of runs over initial window x policy x profile."""

    initial_gammas: tuple[int, ...]
    policies: tuple[str, ...]
    profiles: tuple[str, ...]
    replicates: int
    acceptance: AcceptanceSpec
    target_tokens: int = 20000
    master_seed: int = 0
    policy_params: dict[str, dict[str, Any]] = field(default_factory=dict)


_SWEEP_FIELDS = {
    "schema",
    "initial_gammas",
    "policies",
    "profiles",
    "replicates",
    "acceptance",
    "target_tokens",
    "master_seed",
    "policy_params",
}


def sweep_spec_from_dict(raw: Mapping[str, Any], *, strict: bool = True, base_dir: Path | None = None) -> SweepSpec:
    if not isinstance(raw, Mapping):
        raise ConfigError("sweep", "expected a JSON object at the top level")
    if strict:
        unknown = set(raw) - _SWEEP_FIELDS
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown field (use --lenient to ignore)")
    gammas = tuple(int(g) for g in raw.get("initial_gammas", DEFAULT_SWEEP_GAMMAS))
    if not gammas or any(g < 1 for g in gammas):
        raise ConfigError("initial_gammas", "must be a non-empty list of integers >= 1")
    policies = tuple(raw.get("policies", ()))
    if not policies:
        raise ConfigError("policies", "must be a non-empty list")
    for name in policies:
        if name not in policy_mod.POLICY_NAMES:
            raise ConfigError("policies", f"unknown policy {name!r}")
    profiles = tuple(raw.get("profiles", ()))
    if not profiles:
        raise ConfigError("profiles", "must be a non-empty list")
    for name in profiles:
        resolve_profile(name)
    replicates = int(raw.get("replicates", 1))
    if replicates < 1:
        raise ConfigError("replicates", "must be >= 1")
    accept_raw = raw.get("acceptance")
    if not isinstance(accept_raw, Mapping) or "name" not in accept_raw:
        raise ConfigError("acceptance", "expected an object with `name` and optional `params`")
    accept_name = accept_raw["name"]
    accept_params = validate_params(accept_name, accept_raw.get("params", {}), base_dir=base_dir)
    target_tokens = int(raw.get("target_tokens", 20000))
    if target_tokens < 1:
        raise ConfigError("target_tokens", "must be >= 1")
    master_seed = int(raw.get("master_seed", 0))
    policy_params = {k: dict(v) for k, v in raw.get("policy_params", {}).items()}
    for name, params in policy_params.items():
        if name not in policy_mod.POLICY_NAMES:
            raise ConfigError(f"policy_params.{name}", "unknown policy")
        policy_mod.controller_init(name, params, gammas[0])
    return SweepSpec(
        initial_gammas=gammas,
        policies=policies,
        profiles=profiles,
        replicates=replicates,
        acceptance=AcceptanceSpec(accept_name, accept_params),
        target_tokens=target_tokens,
        master_seed=master_seed,
        policy_params=policy_params,
    )


def _cell_config(spec: SweepSpec, policy: str, profile_name: str, gamma: int, replicate: int) -> SimulationConfig:
    return SimulationConfig(
        profile=resolve_profile(profile_name),
        policy=PolicySpec(policy, spec.policy_params.get(policy, {})),
        acceptance=spec.acceptance,
        target_tokens=spec.target_tokens,
        initial_gamma=gamma,
        seed=cell_seed(spec.master_seed, policy, profile_name, gamma, replicate),
    )


def _run_cell(args: tuple[SweepSpec, str, str, int, int]) -> dict[str, Any]:
    spec, policy, profile_name, gamma, replicate = args
    report = run_episode(_cell_config(spec, policy, profile_name, gamma, replicate), collect_steps=False)
    row = summarize(report)
    row["replicate"] = replicate
    return row


def run_sweep(spec: SweepSpec, *, jobs: int = 1) -> tuple[list[dict[str, Any]], list[dict[str, Any]]]:
    """Run every sweep cell and aggregate per (policy, profile).

    The fixed-window baseline is always included (it is the speedup
    denominator), whether or not it was requested. Per policy and profile, the
    throughput of each initial window is averaged over replicates first; the
    reported mean and standard deviation are then taken across initial
    windows, and both are normalized by the baseline mean on the same profile.
    """
    policies = list(spec.policies)
    if BASELINE_POLICY not in policies:
        policies.insert(0, BASELINE_POLICY)

    cells = [
        (spec, policy, profile, gamma, replicate)
        for policy in policies
        for profile in spec.profiles
        for gamma in spec.initial_gammas
        for replicate in range(spec.replicates)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell, cells, chunksize=1))
    else:
        rows = [_run_cell(cell) for cell in cells]

    by_cell: dict[tuple[str, str, int], list[float]] = {}
    for row in rows:
        key = (row["policy"], row["profile"], row["initial_gamma"])
        by_cell.setdefault(key, []).append(float(row["throughput_tokens_per_s"]))

    def gamma_means(policy: str, profile: str) -> list[float]:
        means = []
        for gamma in spec.initial_gammas:
            values = by_cell[(policy, profile, gamma)]
            means.append(sum(values) / len(values))
        return means

    def mean_std(values: Sequence[float]) -> tuple[float, float]:
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / len(values)
        return mean, var**0.5

    aggregates: list[dict[str, Any]] = []
    for profile in spec.profiles:
        base_mean, _ = mean_std(gamma_means(BASELINE_POLICY, profile))
        for policy in policies:
            mean, std = mean_std(gamma_means(policy, profile))
            aggregates.append(
                {
                    "schema": SUMMARY_SCHEMA_VERSION,
                    "policy": policy,
                    "profile": profile,
                    "n_gammas": len(spec.initial_gammas),
                    "replicates": spec.replicates,
                    "mean_throughput_tokens_per_s": f"{mean:.6f}",
                    "std_across_gamma": f"{std:.6f}",
                    "speedup_mean": f"{mean / base_mean:.6f}",
                    "speedup_std": f"{std / base_mean:.6f}",
                }
            )
    return rows, aggregates


def format_speedup_table(aggregates: Sequence[Mapping[str, Any]]) -> str:
    """Policies x profiles grid of "mean +/- std x" speedup entries."""
    policies = list(dict.fromkeys(row["policy"] for row in aggregates))
    profiles = list(dict.fromkeys(row["profile"] for row in aggregates))
    lookup = {(row["policy"], row["profile"]): row for row in aggregates}
    width = max(20, max(len(p) for p in policies) + 2)
    col_widths = [max(16, len(p) + 2) for p in profiles]
    lines = ["".ljust(width) + "".join(p.ljust(w) for p, w in zip(profiles, col_widths))]
    for policy in policies:
        cells = []
        for profile, w in zip(profiles, col_widths):
            row = lookup[(policy, profile)]
            cells.append(f"{float(row['speedup_mean']):.2f} ± {float(row['speedup_std']):.2f}x".ljust(w))
        lines.append(policy.ljust(width) + "".join(cells))
    return "\n".join(lines)


def _write_csv(path: Path, columns: Sequence[str], rows: Sequence[Mapping[str, Any]]) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in columns})


def _apply_override(raw: dict[str, Any], dotted: str, value: str) -> None:
    keys = dotted.split(".")
    node = raw
    for key in keys[:-1]:
        child = node.get(key)
        if not isinstance(child, dict):
            child = {}
            node[key] = child
        node = child
    try:
        node[keys[-1]] = json.loads(value)
    except json.JSONDecodeError:
        node[keys[-1]] = value


def _out_dir(args: argparse.Namespace) -> Path:
    if args.out:
        return Path(args.out)
    env = os.environ.get("SPECSIM_OUT")
    if env:
        return Path(env)
    return Path("specsim_out")


def _print_run_header(config: SimulationConfig) -> None:
    state = policy_mod.controller_init(config.policy.name, config.policy.params, config.initial_gamma)
    print(f"profile {config.profile.name} t_draft_ms={config.profile.t_draft_ms} t_target_ms={config.profile.t_target_ms}")
    print(f"policy {config.policy.name} {json.dumps(policy_mod.resolved_params(state), sort_keys=True)}")
    print(f"acceptance {config.acceptance.name} {json.dumps(config.acceptance.params, sort_keys=True)}")
    print(
        f"target_tokens {config.target_tokens} initial_gamma {config.initial_gamma} "
        f"seed {config.seed} charge_probe {config.charge_probe}"
    )


def cmd_run(args: argparse.Namespace) -> int:
    path = Path(args.config)
    if not path.is_file():
        raise ConfigError("config", f"no such file: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"malformed JSON in {path}: {exc}") from exc
    for override in args.set or ():
        if "=" not in override:
            raise ConfigError("--set", f"expected key=value, got {override!r}")
        key, value = override.split("=", 1)
        _apply_override(raw, key, value)
    if args.seed is not None:
        raw["seed"] = args.seed
    config = config_from_dict(raw, strict=not args.lenient, base_dir=path.parent)

    if args.verbose:
        _print_run_header(config)

    report = run_episode(config)

    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report_to_dict(report), indent=2) + "\n", encoding="utf-8")
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, [summarize(report)])
    if args.emit_trace:
        save_trace(out / "trace.jsonl", trace_records(report))

    print(f"throughput_tokens_per_s {report.throughput_tokens_per_s:.6f}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    path = Path(args.spec)
    if not path.is_file():
        raise ConfigError("sweep", f"no such file: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("sweep", f"malformed JSON in {path}: {exc}") from exc
    spec = sweep_spec_from_dict(raw, strict=not args.lenient, base_dir=path.parent)

    if args.verbose:
        print(
            f"sweep gammas={list(spec.initial_gammas)} policies={list(spec.policies)} "
            f"profiles={list(spec.profiles)} replicates={spec.replicates} "
            f"target_tokens={spec.target_tokens} master_seed={spec.master_seed}"
        )

    cells, aggregates = run_sweep(spec, jobs=args.jobs)

    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "cells.csv", CELL_COLUMNS, cells)
    _write_csv(out / "aggregate.csv", AGGREGATE_COLUMNS, aggregates)
    table = format_speedup_table(aggregates)
    (out / "table.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    rows = []
    for gamma in range(1, args.gamma_max + 1):
        rows.append((gamma, cost_mod.cost_per_token(args.alpha, gamma, args.c)))
    best = cost_mod.optimal_fixed_gamma(args.alpha, args.c, args.gamma_max)
    print(f"alpha {args.alpha} c {args.c} (cost per token, draft-token units)")
    print("gamma  cost_per_token")
    for gamma, value in rows:
        marker = "  <- argmin" if gamma == best else ""
        print(f"{gamma:>5}  {value:.6f}{marker}")
    print(f"argmin gamma {best}")
    return EXIT_OK


def cmd_profiles(args: argparse.Namespace) -> int:
    print("name                            t_draft_ms  t_target_ms  c")
    for name, profile in builtin_profiles().items():
        print(f"{name:<32}{profile.t_draft_ms:>10.2f}{profile.t_target_ms:>13.2f}  {profile.speedup:.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="specsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate one episode from a config file")
    run_p.add_argument("--config", required=True, help="JSON config path")
    run_p.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted-path config override")
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")
    run_p.add_argument("--out", default=None, help="output directory (default $SPECSIM_OUT or ./specsim_out)")
    run_p.add_argument("--emit-trace", action="store_true", help="write per-step trace.jsonl")
    run_p.add_argument("--lenient", action="store_true", help="ignore unknown config fields")
    run_p.add_argument("--verbose", action="store_true", help="print the resolved run header")
    run_p.set_defaults(func=cmd_run)

    sweep_p = sub.add_parser("sweep", help="run a policy x profile x initial-window grid")
    sweep_p.add_argument("--spec", required=True, help="JSON sweep spec path")
    sweep_p.add_argument("--out", default=None, help="output directory (default $SPECSIM_OUT or ./specsim_out)")
    sweep_p.add_argument("--jobs", type=int, default=1, help="worker processes for sweep cells")
    sweep_p.add_argument("--lenient", action="store_true", help="ignore unknown spec fields")
    sweep_p.add_argument("--verbose", action="store_true", help="print the sweep header")
    sweep_p.set_defaults(func=cmd_sweep)

    oracle_p = sub.add_parser("oracle", help="analytic cost per window size and the argmin")
    oracle_p.add_argument("--alpha", type=float, required=True, help="acceptance rate in (0, 1]")
    oracle_p.add_argument("--c", type=float, required=True, help="target/draft latency ratio")
    oracle_p.add_argument("--gamma-max", type=int, default=24, dest="gamma_max")
    oracle_p.set_defaults(func=cmd_oracle)

    profiles_p = sub.add_parser("profiles", help="list builtin latency profiles")
    profiles_p.set_defaults(func=cmd_profiles)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
