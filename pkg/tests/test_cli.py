import json
import time
from pathlib import Path

from specsim.acceptance import load_trace, save_trace
from specsim.policy import POLICY_NAMES
from specsim.cli import (
    AGGREGATE_COLUMNS,
    CELL_COLUMNS,
    cell_seed,
    main,
    run_sweep,
    sweep_spec_from_dict,
)
from specsim.cost import optimal_fixed_gamma
from specsim.model import AcceptanceSpec, PolicySpec, SimulationConfig, resolve_profile
from specsim.sim import SUMMARY_COLUMNS, run_episode, summarize

DATA = Path(__file__).resolve().parent / "data"

RUN_CONFIG = DATA / "run_config.json"
SWEEP_SPEC = DATA / "small_sweep.json"


def invoke(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestRun:
    def test_run_writes_outputs_and_prints_throughput(self, tmp_path, capsys):
        code, out, _ = invoke(capsys, "run", "--config", str(RUN_CONFIG), "--out", str(tmp_path))
        assert code == 0
        assert out.startswith("throughput_tokens_per_s ")
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["config"]["seed"] == 20240817
        assert (tmp_path / "summary.csv").is_file()

    def test_run_matches_committed_golden_row(self, tmp_path, capsys):
        code, _, _ = invoke(capsys, "run", "--config", str(RUN_CONFIG), "--out", str(tmp_path))
        assert code == 0
        produced = (tmp_path / "summary.csv").read_bytes()
        assert produced == (DATA / "golden_summary.csv").read_bytes()

    def test_run_repeats_byte_identically(self, tmp_path, capsys):
        invoke(capsys, "run", "--config", str(RUN_CONFIG), "--out", str(tmp_path / "a"))
        invoke(capsys, "run", "--config", str(RUN_CONFIG), "--out", str(tmp_path / "b"))
        assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()
        assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()

    def test_set_override_changes_policy(self, tmp_path, capsys):
        code, _, _ = invoke(
            capsys,
            "run",
            "--config",
            str(RUN_CONFIG),
            "--set",
            "policy.name=fixed",
            "--seed",
            "7",
            "--out",
            str(tmp_path),
        )
        assert code == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["config"]["policy"]["name"] == "fixed"
        assert report["config"]["seed"] == 7

    def test_unknown_policy_exits_2_and_names_field(self, tmp_path, capsys):
        code, _, err = invoke(
            capsys, "run", "--config", str(RUN_CONFIG), "--set", "policy.name=bogus", "--out", str(tmp_path)
        )
        assert code == 2
        assert "policy.name" in err

    def test_missing_config_exits_2(self, tmp_path, capsys):
        code, _, err = invoke(capsys, "run", "--config", str(tmp_path / "nope.json"))
        assert code == 2
        assert "no such file" in err

    def test_unwritable_out_dir_exits_3(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("x", encoding="utf-8")
        code, _, err = invoke(capsys, "run", "--config", str(RUN_CONFIG), "--out", str(blocker))
        assert code == 3

    def test_unknown_field_needs_lenient(self, tmp_path, capsys):
        raw = json.loads(RUN_CONFIG.read_text())
        raw["mystery"] = 1
        path = tmp_path / "config.json"
        path.write_text(json.dumps(raw), encoding="utf-8")
        code, _, err = invoke(capsys, "run", "--config", str(path), "--out", str(tmp_path / "o"))
        assert code == 2 and "mystery" in err
        code, _, _ = invoke(capsys, "run", "--config", str(path), "--lenient", "--out", str(tmp_path / "o"))
        assert code == 0

    def test_emit_trace_round_trips(self, tmp_path, capsys):
        code, _, _ = invoke(
            capsys, "run", "--config", str(RUN_CONFIG), "--emit-trace", "--out", str(tmp_path)
        )
        assert code == 0
        trace_path = tmp_path / "trace.jsonl"
        records = load_trace(trace_path)
        assert records
        round_trip = tmp_path / "again.jsonl"
        save_trace(round_trip, records)
        assert round_trip.read_bytes() == trace_path.read_bytes()

    def test_verbose_header_prints_policy_defaults(self, tmp_path, capsys):
        code, out, _ = invoke(
            capsys, "run", "--config", str(RUN_CONFIG), "--verbose", "--out", str(tmp_path)
        )
        assert code == 0
        header = out.splitlines()
        assert any(line.startswith("policy gammatune") and '"eta": 0.25' in line for line in header)
        assert any('"gamma_max": 24' in line for line in header)

    def test_env_var_sets_default_out_dir(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("SPECSIM_OUT", str(tmp_path / "env_out"))
        monkeypatch.chdir(tmp_path)
        code, _, _ = invoke(capsys, "run", "--config", str(RUN_CONFIG))
        assert code == 0
        assert (tmp_path / "env_out" / "summary.csv").is_file()


class TestSweep:
    def test_small_sweep_matches_goldens(self, tmp_path, capsys):
        code, out, _ = invoke(capsys, "sweep", "--spec", str(SWEEP_SPEC), "--out", str(tmp_path))
        assert code == 0
        assert (tmp_path / "cells.csv").read_bytes() == (DATA / "golden_cells.csv").read_bytes()
        assert (tmp_path / "aggregate.csv").read_bytes() == (DATA / "golden_aggregate.csv").read_bytes()
        assert "±" in out

    def test_csv_schemas_are_pinned(self):
        assert SUMMARY_COLUMNS == (
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
        assert CELL_COLUMNS[:6] == ("schema", "policy", "profile", "initial_gamma", "replicate", "seed")
        assert AGGREGATE_COLUMNS == (
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

    def test_baseline_normalizes_to_one(self, tmp_path, capsys):
        code, _, _ = invoke(capsys, "sweep", "--spec", str(SWEEP_SPEC), "--out", str(tmp_path))
        assert code == 0
        rows = (tmp_path / "aggregate.csv").read_text().splitlines()
        header = rows[0].split(",")
        fixed_row = next(r.split(",") for r in rows[1:] if r.split(",")[1] == "fixed")
        assert fixed_row[header.index("speedup_mean")] == "1.000000"

    def test_single_cell_rerun_reproduces_sweep_value(self, tmp_path, capsys):
        invoke(capsys, "sweep", "--spec", str(SWEEP_SPEC), "--out", str(tmp_path))
        rows = (tmp_path / "cells.csv").read_text().splitlines()
        header = rows[0].split(",")
        cell = rows[1].split(",")
        spec_raw = json.loads(SWEEP_SPEC.read_text())
        policy = cell[header.index("policy")]
        gamma = int(cell[header.index("initial_gamma")])
        replicate = int(cell[header.index("replicate")])
        profile = cell[header.index("profile")]
        config = SimulationConfig(
            profile=resolve_profile(profile),
            policy=PolicySpec(policy, {}),
            acceptance=AcceptanceSpec(spec_raw["acceptance"]["name"], spec_raw["acceptance"].get("params", {})),
            target_tokens=spec_raw["target_tokens"],
            initial_gamma=gamma,
            seed=cell_seed(spec_raw["master_seed"], policy, profile, gamma, replicate),
        )
        report = run_episode(config, collect_steps=False)
        assert summarize(report)["throughput_tokens_per_s"] == cell[header.index("throughput_tokens_per_s")]

    def test_parallel_jobs_identical_to_serial(self, tmp_path, capsys):
        invoke(capsys, "sweep", "--spec", str(SWEEP_SPEC), "--out", str(tmp_path / "serial"))
        invoke(capsys, "sweep", "--spec", str(SWEEP_SPEC), "--jobs", "2", "--out", str(tmp_path / "par"))
        assert (tmp_path / "serial" / "cells.csv").read_bytes() == (tmp_path / "par" / "cells.csv").read_bytes()

    def test_fixed_only_sweep_is_its_own_baseline(self):
        spec = sweep_spec_from_dict(
            {
                "schema": 1,
                "initial_gammas": [2, 4, 8],
                "policies": ["fixed"],
                "profiles": ["vicuna-7b-v1.5/vicuna-68m"],
                "replicates": 1,
                "acceptance": {"name": "iid", "params": {"alpha": 0.7}},
                "target_tokens": 500,
                "master_seed": 3,
            }
        )
        _, aggregates = run_sweep(spec)
        assert len(aggregates) == 1
        assert aggregates[0]["speedup_mean"] == "1.000000"

    def test_full_policy_sweep_fits_single_core_budget(self):
        # 12 windows x 5 policies x 1 profile at 20k tokens: under a minute
        spec = sweep_spec_from_dict(
            {
                "schema": 1,
                "policies": list(POLICY_NAMES),
                "profiles": ["vicuna-7b-v1.5/vicuna-68m"],
                "replicates": 1,
                "acceptance": {"name": "regime", "params": {}},
                "target_tokens": 20000,
                "master_seed": 8,
            }
        )
        start = time.perf_counter()
        cells, aggregates = run_sweep(spec)
        elapsed = time.perf_counter() - start
        assert elapsed < 60
        assert len(cells) == 12 * 5
        assert {row["policy"] for row in aggregates} == set(POLICY_NAMES)

    def test_baseline_added_when_missing(self):
        spec = sweep_spec_from_dict(
            {
                "schema": 1,
                "initial_gammas": [2, 4],
                "policies": ["gammatune"],
                "profiles": ["vicuna-7b-v1.5/vicuna-68m"],
                "replicates": 1,
                "acceptance": {"name": "iid", "params": {"alpha": 0.7}},
                "target_tokens": 400,
                "master_seed": 5,
            }
        )
        cells, aggregates = run_sweep(spec)
        assert {row["policy"] for row in aggregates} == {"fixed", "gammatune"}

    def test_bad_spec_exits_2(self, tmp_path, capsys):
        path = tmp_path / "sweep.json"
        path.write_text(json.dumps({"schema": 1, "policies": [], "profiles": ["x"]}), encoding="utf-8")
        code, _, err = invoke(capsys, "sweep", "--spec", str(path))
        assert code == 2


class TestOracle:
    def test_table_and_argmin(self, capsys):
        code, out, _ = invoke(capsys, "oracle", "--alpha", "0.8", "--c", "8", "--gamma-max", "24")
        assert code == 0
        lines = out.splitlines()
        data_lines = [l for l in lines if l.strip() and l.lstrip()[0].isdigit()]
        assert len(data_lines) == 24
        best = optimal_fixed_gamma(0.8, 8.0, 24)
        assert lines[-1] == f"argmin gamma {best}"

    def test_full_acceptance_costs_decrease_monotonically(self, capsys):
        code, out, _ = invoke(capsys, "oracle", "--alpha", "1.0", "--c", "8", "--gamma-max", "24")
        assert code == 0
        costs = [float(l.split()[1]) for l in out.splitlines() if l.strip() and l.lstrip()[0].isdigit()]
        assert costs == sorted(costs, reverse=True)
        assert out.splitlines()[-1] == "argmin gamma 24"

    def test_alpha_zero_is_a_domain_error(self, capsys):
        code, _, err = invoke(capsys, "oracle", "--alpha", "0", "--c", "8")
        assert code == 2
        assert "alpha" in err


class TestProfiles:
    def test_lists_builtins(self, capsys):
        code, out, _ = invoke(capsys, "profiles")
        assert code == 0
        for name in (
            "vicuna-13b-v1.5/vicuna-160m",
            "vicuna-7b-v1.5/vicuna-68m",
            "Llama-3.1-8B/Llama-3.2-1B",
            "Llama-3.1-70B/Llama-3.1-8B",
        ):
            assert name in out
