from __future__ import annotations

import pytest
import torch
from tokenizers import Regex, Tokenizer, models, pre_tokenizers
from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast


def char_tokenizer() -> PreTrainedTokenizerFast:
    chars = list("0123456789 \n\r\\|\t") + ["<unk>"]
    vocab = {c: i for i, c in enumerate(chars)}
    tok = Tokenizer(models.WordLevel(vocab, unk_token="<unk>"))
    tok.pre_tokenizer = pre_tokenizers.Split(Regex(r"[\s\S]"), behavior="isolated")
    return PreTrainedTokenizerFast(tokenizer_object=tok, unk_token="<unk>", pad_token="<unk>")


def tiny_gpt2(vocab_size: int, n_layer: int = 2, n_head: int = 2, seed: int = 0):
    config = GPT2Config(
        vocab_size=vocab_size,
        n_positions=256,
        n_embd=16,
        n_layer=n_layer,
        n_head=n_head,
        bos_token_id=None,
        eos_token_id=None,
        attn_implementation="eager",
    )
    torch.manual_seed(seed)
    model = GPT2LMHeadModel(config)
    model.eval()
    return model


@pytest.fixture(scope="session")
def tiny_model():
    tokenizer = char_tokenizer()
    model = tiny_gpt2(tokenizer.vocab_size)
    return model, tokenizer
