"""Sources of per-token accept/reject verdicts and draft confidences.

Three process kinds feed the simulator:

* ``iid`` — every token is accepted with a fixed probability.
* ``regime`` — a per-step Markov chain switches between phases (easy,
  moderate, difficult by default) that differ in acceptance rate and typical
  draft confidence.
* ``replay`` — verdicts and confidences come verbatim from a recorded trace
  file, one record per speculative step.

Confidences are drawn from a Beta distribution with the configured mean and a
fixed concentration. By default they are independent of the verdicts (a null
control); with ``correlated: true`` the sampled confidence *is* the token's
acceptance probability, so low-confidence tokens really are likelier to be
rejected, which is the signal confidence-gated policies exploit.

Each process owns its RNG; instances are not shareable across concurrent
simulations. Identical (spec, seed) pairs produce bit-identical sequences.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .model import ConfigError

_CHUNK = 4096
DEFAULT_CONFIDENCE_KAPPA = 10.0


class TraceFormatError(ValueError):
    """A trace file violated the line schema; message carries the line number."""


class TraceExhausted(RuntimeError):
    """Raised when a replay process is asked for tokens past the end of its trace."""


@dataclass(frozen=True)
class TraceRecord:
    """One recorded speculative step: raw per-position verdicts and confidences.

    `accepts` keeps the measured accept/reject flag of every drafted position,
    without assuming anything about runs; consumers apply their own semantics.
    """

    step_index: int
    accepts: tuple[bool, ...]
    confidences: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.step_index < 0:
            raise ValueError("step_index must be >= 0")
        if len(self.accepts) != len(self.confidences):
            raise ValueError("accepts and confidences must have equal length")
        for conf in self.confidences:
            if not (0.0 <= conf <= 1.0):
                raise ValueError(f"confidence {conf} outside [0, 1]")


@dataclass(frozen=True)
class Regime:
    name: str
    alpha: float
    mean_confidence: float


@dataclass(frozen=True)
class RegimeSpec:
    """Named acceptance phases plus the per-step switching matrix."""

    regimes: tuple[Regime, ...]
    transition: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        if not self.regimes:
            raise ValueError("need at least one regime")
        k = len(self.regimes)
        for regime in self.regimes:
            if not (0.0 <= regime.alpha <= 1.0):
                raise ValueError(f"regime {regime.name!r}: alpha outside [0, 1]")
            if not (0.0 <= regime.mean_confidence <= 1.0):
                raise ValueError(f"regime {regime.name!r}: mean_confidence outside [0, 1]")
        if len(self.transition) != k:
            raise ValueError("transition matrix must have one row per regime")
        for i, row in enumerate(self.transition):
            if len(row) != k:
                raise ValueError(f"transition row {i} must have {k} entries")
            if any(p < 0 for p in row):
                raise ValueError(f"transition row {i} has a negative probability")
            if abs(sum(row) - 1.0) > 1e-9:
                raise ValueError(f"transition row {i} must sum to 1")


def default_regime_spec() -> RegimeSpec:
    """Easy/moderate/difficult phases with sticky (0.9 self-transition) switching."""
    return RegimeSpec(
        regimes=(
            Regime("easy", alpha=0.9, mean_confidence=0.85),
            Regime("moderate", alpha=0.6, mean_confidence=0.6),
            Regime("difficult", alpha=0.2, mean_confidence=0.3),
        ),
        transition=(
            (0.9, 0.05, 0.05),
            (0.05, 0.9, 0.05),
            (0.05, 0.05, 0.9),
        ),
    )


def leading_run(verdicts: Sequence[bool]) -> int:
    """Length of the accepted prefix; everything after the first reject is dropped."""
    n = 0
    for v in verdicts:
        if not v:
            break
        n += 1
    return n


class _ConfidenceSampler:
    """Chunked Beta sampler with fixed mean and concentration.

    Degenerate means (0 or 1) fall back to constants; Beta parameters would
    vanish there.
    """

    def __init__(self, rng: np.random.Generator, mean: float, kappa: float):
        self._rng = rng
        self._mean = mean
        self._kappa = kappa
        self._buf: list[float] = []
        self._idx = 0

    def next(self) -> float:
        if self._mean <= 0.0:
            return 0.0
        if self._mean >= 1.0:
            return 1.0
        if self._idx >= len(self._buf):
            a = self._kappa * self._mean
            b = self._kappa * (1.0 - self._mean)
            self._buf = self._rng.beta(a, b, _CHUNK).tolist()
            self._idx = 0
        value = self._buf[self._idx]
        self._idx += 1
        return value


class _UniformSampler:
    def __init__(self, rng: np.random.Generator):
        self._rng = rng
        self._buf: list[float] = []
        self._idx = 0

    def next(self) -> float:
        if self._idx >= len(self._buf):
            self._buf = self._rng.random(_CHUNK).tolist()
            self._idx = 0
        value = self._buf[self._idx]
        self._idx += 1
        return value


class IidProcess:
    """Every token accepted with probability `alpha`, i.i.d. across tokens."""

    def __init__(
        self,
        alpha: float,
        mean_confidence: float,
        kappa: float,
        correlated: bool,
        seed: int,
    ):
        self.alpha = alpha
        self.correlated = correlated
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        self._uniforms = _UniformSampler(rng)
        self._confidences = _ConfidenceSampler(rng, mean_confidence, kappa)

    def begin_step(self) -> bool:
        return True

    def next_token_verdict(self) -> tuple[bool, float] | None:
        confidence = self._confidences.next()
        u = self._uniforms.next()
        threshold = confidence if self.correlated else self.alpha
        return u < threshold, confidence


class RegimeProcess:
    """Markov regime switching, sampled once per speculative step.

    Regime transitions and token draws use independent RNG streams derived
    from the seed, so two runs with the same seed see the same regime
    trajectory even when their token consumption differs.
    """

    def __init__(self, spec: RegimeSpec, kappa: float, correlated: bool, seed: int):
        self.spec = spec
        self.correlated = correlated
        seq = np.random.SeedSequence(seed)
        regime_seq, token_seq = seq.spawn(2)
        self._regime_uniforms = _UniformSampler(np.random.default_rng(regime_seq))
        token_rng = np.random.default_rng(token_seq)
        self._uniforms = _UniformSampler(token_rng)
        self._conf_samplers = [
            _ConfidenceSampler(token_rng, r.mean_confidence, kappa) for r in spec.regimes
        ]
        self._cumrows = [_cumulative(row) for row in spec.transition]
        self.regime_index = 0
        self._started = False

    def begin_step(self) -> bool:
        if not self._started:
            self._started = True
            return True
        u = self._regime_uniforms.next()
        row = self._cumrows[self.regime_index]
        for j, edge in enumerate(row):
            if u < edge:
                self.regime_index = j
                break
        else:
            self.regime_index = len(row) - 1
        return True

    def next_token_verdict(self) -> tuple[bool, float] | None:
        regime = self.spec.regimes[self.regime_index]
        confidence = self._conf_samplers[self.regime_index].next()
        u = self._uniforms.next()
        threshold = confidence if self.correlated else regime.alpha
        return u < threshold, confidence


def _cumulative(row: Iterable[float]) -> tuple[float, ...]:
    total = 0.0
    out = []
    for p in row:
        total += p
        out.append(total)
    return tuple(out)


class ReplayProcess:
    """Serve verdicts verbatim from recorded steps, in file order.

    `begin_step` returns False once all records are consumed; within a step,
    requests past the record's length return None (the step simply has no
    further drafted positions to replay).
    """

    def __init__(self, records: Sequence[TraceRecord]):
        self._records = list(records)
        self._step = -1
        self._pos = 0

    def begin_step(self) -> bool:
        if self._step + 1 >= len(self._records):
            self._step = len(self._records)
            return False
        self._step += 1
        self._pos = 0
        return True

    def next_token_verdict(self) -> tuple[bool, float] | None:
        if self._step < 0 or self._step >= len(self._records):
            raise TraceExhausted("no active trace record; call begin_step first")
        record = self._records[self._step]
        if self._pos >= len(record.accepts):
            return None
        pair = record.accepts[self._pos], record.confidences[self._pos]
        self._pos += 1
        return pair


ACCEPTANCE_NAMES = ("iid", "regime", "replay")


def validate_params(name: str, params: Mapping[str, Any], *, base_dir: Path | None = None) -> dict[str, Any]:
    """Check an acceptance spec's params; returns them normalized.

    For replay, a relative `path` is resolved against `base_dir` so configs can
    sit next to their traces.
    """
    if name not in ACCEPTANCE_NAMES:
        known = ", ".join(ACCEPTANCE_NAMES)
        raise ConfigError("acceptance.name", f"unknown acceptance process {name!r}; known: {known}")
    params = dict(params)
    try:
        if name == "replay":
            path = params.get("path")
            if not isinstance(path, str) or not path:
                raise ValueError("replay requires a `path` string parameter")
            resolved = Path(path)
            if base_dir is not None and not resolved.is_absolute():
                resolved = base_dir / resolved
            params["path"] = str(resolved)
        else:
            _build_stochastic(name, params, seed=0)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError("acceptance.params", str(exc)) from exc
    return params


def build_process(name: str, params: Mapping[str, Any], seed: int):
    """Instantiate an acceptance process from its config spec."""
    if name == "replay":
        return ReplayProcess(load_trace(params["path"]))
    return _build_stochastic(name, params, seed)


def _build_stochastic(name: str, params: Mapping[str, Any], seed: int):
    params = dict(params)
    kappa = float(params.pop("kappa", DEFAULT_CONFIDENCE_KAPPA))
    if kappa <= 0:
        raise ValueError(f"kappa must be > 0, got {kappa}")
    correlated = params.pop("correlated", False)
    if not isinstance(correlated, bool):
        raise ValueError("correlated must be a boolean")

    if name == "iid":
        if "alpha" not in params:
            raise ValueError("iid requires an `alpha` parameter")
        alpha = float(params.pop("alpha"))
        if not (0.0 <= alpha <= 1.0):
            raise ValueError(f"alpha must be in [0, 1], got {alpha}")
        mean_confidence = float(params.pop("mean_confidence", alpha))
        if not (0.0 <= mean_confidence <= 1.0):
            raise ValueError(f"mean_confidence must be in [0, 1], got {mean_confidence}")
        if params:
            raise ValueError(f"unknown iid parameter {sorted(params)[0]!r}")
        return IidProcess(alpha, mean_confidence, kappa, correlated, seed)

    if name == "regime":
        raw_regimes = params.pop("regimes", None)
        raw_transition = params.pop("transition", None)
        if params:
            raise ValueError(f"unknown regime parameter {sorted(params)[0]!r}")
        if raw_regimes is None and raw_transition is None:
            spec = default_regime_spec()
        elif raw_regimes is None or raw_transition is None:
            raise ValueError("regime requires both `regimes` and `transition` (or neither)")
        else:
            regimes = tuple(
                Regime(str(r["name"]), float(r["alpha"]), float(r["mean_confidence"]))
                for r in raw_regimes
            )
            transition = tuple(tuple(float(p) for p in row) for row in raw_transition)
            spec = RegimeSpec(regimes, transition)
        return RegimeProcess(spec, kappa, correlated, seed)

    raise ConfigError("acceptance.name", f"unknown acceptance process {name!r}")


def stationary_distribution(spec: RegimeSpec) -> np.ndarray:
    """Long-run regime frequencies of the switching chain (left eigenvector)."""
    matrix = np.asarray(spec.transition, dtype=float)
    k = matrix.shape[0]
    # Solve pi (P - I) = 0 with the normalization sum(pi) = 1.
    a = np.vstack([(matrix.T - np.eye(k)), np.ones(k)])
    b = np.concatenate([np.zeros(k), [1.0]])
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    return pi


def load_trace(path: str | Path) -> list[TraceRecord]:
    """Parse a JSON-lines trace file into validated records, in file order."""
    path = Path(path)
    if not path.is_file():
        raise TraceFormatError(f"no such trace file: {path}")
    records: list[TraceRecord] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"line {lineno}: invalid JSON ({exc})") from exc
            records.append(_record_from_raw(raw, lineno))
    return records


def _record_from_raw(raw: Any, lineno: int) -> TraceRecord:
    if not isinstance(raw, Mapping):
        raise TraceFormatError(f"line {lineno}: expected an object")
    for key in ("step", "accepts", "confidences"):
        if key not in raw:
            raise TraceFormatError(f"line {lineno}: missing field {key!r}")
    step = raw["step"]
    if isinstance(step, bool) or not isinstance(step, int) or step < 0:
        raise TraceFormatError(f"line {lineno}: `step` must be a nonnegative integer")
    accepts = raw["accepts"]
    confidences = raw["confidences"]
    if not isinstance(accepts, list) or not all(isinstance(v, bool) for v in accepts):
        raise TraceFormatError(f"line {lineno}: `accepts` must be a list of booleans")
    if not isinstance(confidences, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in confidences
    ):
        raise TraceFormatError(f"line {lineno}: `confidences` must be a list of numbers")
    if len(accepts) != len(confidences):
        raise TraceFormatError(
            f"line {lineno}: accepts length {len(accepts)} != confidences length {len(confidences)}"
        )
    if any(not (0.0 <= float(v) <= 1.0) or math.isnan(float(v)) for v in confidences):
        raise TraceFormatError(f"line {lineno}: confidences must lie in [0, 1]")
    return TraceRecord(step_index=step, accepts=tuple(accepts), confidences=tuple(float(v) for v in confidences))


def save_trace(path: str | Path, records: Iterable[TraceRecord]) -> None:
    """Write records as JSON lines in the schema `load_trace` reads back."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(
                json.dumps(
                    {
                        "step": record.step_index,
                        "accepts": list(record.accepts),
                        "confidences": list(record.confidences),
                    }
                )
            )
            fh.write("\n")
