from __future__ import annotations

import pytest
import torch
from transformers import BertConfig, BertForMaskedLM, BertTokenizerFast

from _words import SPECIALS, WORDS


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory) -> str:
    """A tiny randomly initialized masked LM saved as a local checkpoint."""
    directory = tmp_path_factory.mktemp("tiny-mlm")
    vocab = {token: i for i, token in enumerate(SPECIALS + WORDS + ["##s", "##n"])}
    # keep accents: Galician forms like "río" must stay single vocabulary entries
    tokenizer = BertTokenizerFast(vocab=vocab, do_lower_case=True, strip_accents=False)
    torch.manual_seed(1234)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=64,
    )
    model = BertForMaskedLM(config)
    model.eval()
    tokenizer.save_pretrained(directory)
    model.save_pretrained(directory)
    return str(directory)
