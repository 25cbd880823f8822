"""Vocabulary dump: the surface forms usable as single-token mask candidates."""

from __future__ import annotations

import sys
from typing import IO, Optional

from transformers import AutoTokenizer


def vocab_dump(model: str, out: Optional[IO[str]] = None) -> int:
    """Write one single-token surface form per line; returns the number written.

    Special tokens and continuation pieces are excluded, as is any entry that
    does not round-trip through the tokenizer to exactly its own id (those
    could never be scored as mask candidates). The output feeds dataset
    vocabulary filtering directly.
    """
    out = out if out is not None else sys.stdout
    tokenizer = AutoTokenizer.from_pretrained(model)
    special = set(tokenizer.all_special_tokens)
    written = 0
    for token, idx in sorted(tokenizer.get_vocab().items(), key=lambda kv: kv[1]):
        if not token or token in special:
            continue
        if token.startswith("##") or any(ch.isspace() for ch in token):
            continue
        if tokenizer.encode(token, add_special_tokens=False) != [idx]:
            continue
        out.write(token + "\n")
        written += 1
    return written
