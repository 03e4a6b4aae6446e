"""Builds a tiny local draft/target pair for collector tests.

No hub access: both models are small randomly initialized causal LMs sharing
a byte-level tokenizer, with the draft being a noise-perturbed copy of the
target so greedy verification accepts some positions and rejects others.
"""

import copy
import os

import pytest
import torch

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_VERBOSITY", "error")

DRAFT_NOISE_SCALE = 0.8


@pytest.fixture(scope="session")
def tiny_pair(tmp_path_factory):
    from tokenizers import Tokenizer, decoders, models, pre_tokenizers
    from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

    root = tmp_path_factory.mktemp("tiny_pair")
    target_dir = root / "target"
    draft_dir = root / "draft"

    alphabet = sorted(pre_tokenizers.ByteLevel.alphabet())
    vocab = {ch: i for i, ch in enumerate(alphabet)}
    tokenizer = Tokenizer(models.BPE(vocab=vocab, merges=[]))
    tokenizer.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    tokenizer.decoder = decoders.ByteLevel()
    fast = PreTrainedTokenizerFast(tokenizer_object=tokenizer)

    config = GPT2Config(
        vocab_size=len(vocab),
        n_positions=512,
        n_embd=64,
        n_layer=2,
        n_head=2,
        bos_token_id=None,
        eos_token_id=None,
    )
    torch.manual_seed(0)
    target = GPT2LMHeadModel(config).eval()
    draft = copy.deepcopy(target)
    torch.manual_seed(42)
    with torch.no_grad():
        for param in draft.parameters():
            param.add_(torch.randn_like(param) * param.detach().std() * DRAFT_NOISE_SCALE)

    for model, path in ((target, target_dir), (draft, draft_dir)):
        model.save_pretrained(path)
        fast.save_pretrained(path)
    return {"target": str(target_dir), "draft": str(draft_dir)}


@pytest.fixture
def prompts_file(tmp_path):
    path = tmp_path / "prompts.txt"
    path.write_text("Draft models propose, target models dispose.\n", encoding="utf-8")
    return path
