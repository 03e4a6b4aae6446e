"""Record per-step acceptance traces from a real draft/target model pair.

The collector runs greedy speculative decoding at a fixed window: the draft
model proposes `fixed_gamma` tokens autoregressively, the target model scores
the whole window in one forward pass, and a position counts as accepted when
the target's greedy choice matches the draft token. Every drafted position's
verdict and the draft's top-token probability are written out as JSON lines,
one record per step, one file per prompt - the trace format the simulator's
replay acceptance process consumes.

Collection always drafts the full window so the recorded per-position
verdicts are unconfounded by any adaptive controller; replaying them under a
different window is an approximation, since acceptance beyond the recorded
window was never measured.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from pathlib import Path

import torch
from transformers import AutoModelForCausalLM, AutoTokenizer


class CollectorError(RuntimeError):
    """Unrecoverable collection failure (bad config, models not loadable)."""


@dataclass(frozen=True)
class CollectorConfig:
    target_model_id: str
    draft_model_id: str
    prompts_file: str
    max_new_tokens: int
    fixed_gamma: int
    output_path: str

    def __post_init__(self) -> None:
        if self.fixed_gamma < 1:
            raise CollectorError("fixed_gamma must be >= 1")
        if self.max_new_tokens < 1:
            raise CollectorError("max_new_tokens must be >= 1")


def _load_model(model_id: str):
    try:
        model = AutoModelForCausalLM.from_pretrained(model_id)
    except Exception as exc:
        raise CollectorError(f"could not load model {model_id!r}: {exc}") from exc
    model.eval()
    return model


def _greedy_next(model, context: torch.Tensor) -> tuple[int, float]:
    """Greedy next token and its probability under `model` given `context`."""
    logits = model(context).logits[0, -1]
    probs = torch.softmax(logits.float(), dim=-1)
    token = int(torch.argmax(probs))
    return token, float(probs[token])


def _collect_prompt(
    target,
    draft,
    prompt_ids: list[int],
    gamma: int,
    max_new_tokens: int,
    max_positions: int,
) -> list[dict]:
    records: list[dict] = []
    context = list(prompt_ids)
    generated = 0
    step = 0
    with torch.inference_mode():
        while generated < max_new_tokens and len(context) + gamma + 1 <= max_positions:
            draft_ids: list[int] = []
            confidences: list[float] = []
            work = torch.tensor([context], dtype=torch.long)
            for _ in range(gamma):
                token, prob = _greedy_next(draft, work)
                draft_ids.append(token)
                confidences.append(prob)
                work = torch.cat([work, torch.tensor([[token]], dtype=torch.long)], dim=1)

            # one target pass verifies the window and supplies the bonus token:
            # position len(context)-1+i predicts the token at len(context)+i
            logits = target(work).logits[0, len(context) - 1 : len(context) + gamma]
            predictions = torch.argmax(logits.float(), dim=-1).tolist()
            accepts = [predictions[i] == draft_ids[i] for i in range(gamma)]

            run = 0
            for flag in accepts:
                if not flag:
                    break
                run += 1
            bonus = predictions[run]

            records.append({"step": step, "accepts": accepts, "confidences": confidences})
            context.extend(draft_ids[:run])
            context.append(bonus)
            generated += run + 1
            step += 1
    return records


def _output_path_for(base: Path, index: int, total: int) -> Path:
    if total == 1:
        return base
    return base.with_name(f"{base.stem}.{index:03d}{base.suffix}")


def collect(config: CollectorConfig) -> list[Path]:
    """Run collection for every prompt; returns the written trace paths.

    A prompt whose generation fails is skipped with a warning on stderr;
    model-loading problems abort the whole run.
    """
    prompts_path = Path(config.prompts_file)
    if not prompts_path.is_file():
        raise CollectorError(f"no such prompts file: {prompts_path}")
    prompts = [line.strip() for line in prompts_path.read_text(encoding="utf-8").splitlines()]
    prompts = [p for p in prompts if p]
    if not prompts:
        return []

    try:
        tokenizer = AutoTokenizer.from_pretrained(config.target_model_id)
    except Exception as exc:
        raise CollectorError(f"could not load tokenizer from {config.target_model_id!r}: {exc}") from exc
    target = _load_model(config.target_model_id)
    draft = _load_model(config.draft_model_id)
    max_positions = int(getattr(target.config, "max_position_embeddings", 10**9))

    written: list[Path] = []
    base = Path(config.output_path)
    for index, prompt in enumerate(prompts):
        try:
            prompt_ids = tokenizer(prompt).input_ids
            records = _collect_prompt(
                target, draft, prompt_ids, config.fixed_gamma, config.max_new_tokens, max_positions
            )
        except Exception as exc:
            print(f"warning: skipping prompt {index} ({exc})", file=sys.stderr)
            continue
        path = _output_path_for(base, index, len(prompts))
        with path.open("w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record))
                fh.write("\n")
        written.append(path)
    return written
