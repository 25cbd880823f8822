"""Masked-LM scorer process: fill-mask log-probabilities over the wire protocol.

Protocol (JSON lines over stdio, UTF-8):

    -> {"op": "hello"}
    <- {"name": "<scorer_id>", "deterministic": true, "mask_token": "[MASK]"}
    -> {"id": "...", "text": "... {MASK} ...", "candidates": ["boa", "bo"]}
    <- {"id": "...", "logprobs": [lp_0, lp_1]}
    <- {"id": "...", "error": {"kind": "oov" | "internal", "detail": "..."}}

Candidates must be single vocabulary entries; anything that tokenizes to
zero or several pieces is refused with an "oov" error rather than
approximated. Log-probabilities come from one log-softmax over the full
vocabulary at the mask position, so exp of the returned values sums to at
most 1 over any candidate set.
"""

from __future__ import annotations

import json
import queue
import sys
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Optional, Sequence

import torch
from transformers import AutoModelForMaskedLM, AutoTokenizer

MASK_PLACEHOLDER = "{MASK}"


class BridgeError(Exception):
    """Scoring failed for one request; reported in-protocol."""

    kind = "internal"


class OOVError(BridgeError):
    kind = "oov"


@dataclass(frozen=True)
class BridgeConfig:
    """One model source (hub id or local checkpoint path) plus runtime knobs."""

    model: str
    device: str = "cpu"
    batch_size: int = 8
    scorer_id: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.model:
            raise ValueError("model source must be non-empty")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def name(self) -> str:
        return self.scorer_id or Path(self.model).name


class MaskScorer:
    """A loaded masked LM answering candidate log-probabilities at the mask slot."""

    def __init__(self, cfg: BridgeConfig):
        self.cfg = cfg
        self.tokenizer = AutoTokenizer.from_pretrained(cfg.model)
        self.model = AutoModelForMaskedLM.from_pretrained(cfg.model)
        self.model.to(cfg.device)
        self.model.eval()
        if self.tokenizer.mask_token is None or self.tokenizer.mask_token_id is None:
            raise ValueError(f"model {cfg.model!r} has no mask token; not a masked LM")
        self.mask_token: str = self.tokenizer.mask_token
        self.mask_token_id: int = self.tokenizer.mask_token_id
        self._special_ids = set(self.tokenizer.all_special_ids)

    @property
    def deterministic(self) -> bool:
        # CPU eval-mode inference is reproducible; accelerators may not be.
        return self.cfg.device == "cpu"

    def candidate_id(self, form: str) -> int:
        """The single vocabulary id for a surface form; OOV otherwise."""
        ids = self.tokenizer.encode(form, add_special_tokens=False)
        if len(ids) != 1 or ids[0] == self.tokenizer.unk_token_id or ids[0] in self._special_ids:
            raise OOVError(f"candidate {form!r} is not a single vocabulary entry")
        return ids[0]

    def _mask_position(self, input_ids: torch.Tensor) -> int:
        positions = (input_ids == self.mask_token_id).nonzero(as_tuple=True)[0]
        if len(positions) != 1:
            raise BridgeError(f"expected exactly one mask position, found {len(positions)}")
        return int(positions[0])

    def fill_mask_logprobs(self, text: str, candidates: Sequence[str]) -> list[float]:
        """Log-probabilities of the candidates at the single ``{MASK}`` slot."""
        mask_count = text.count(MASK_PLACEHOLDER)
        if mask_count != 1:
            raise BridgeError(f"text must contain exactly one {MASK_PLACEHOLDER}, found {mask_count}")
        candidate_ids = [self.candidate_id(form) for form in candidates]
        encoded = self.tokenizer(
            text.replace(MASK_PLACEHOLDER, self.mask_token),
            return_tensors="pt",
            truncation=True,
        ).to(self.cfg.device)
        with torch.no_grad():
            logits = self.model(**encoded).logits
        position = self._mask_position(encoded["input_ids"][0])
        logprobs = torch.log_softmax(logits[0, position], dim=-1)
        return [float(logprobs[i]) for i in candidate_ids]

    def hello(self) -> dict:
        return {
            "name": self.cfg.name,
            "deterministic": self.deterministic,
            "mask_token": self.mask_token,
        }


def _response_for(scorer: MaskScorer, request: dict) -> dict:
    request_id = request.get("id")
    try:
        text = request["text"]
        candidates = request["candidates"]
        if not isinstance(text, str) or not isinstance(candidates, list) or not candidates:
            raise BridgeError("request needs 'text' and a non-empty 'candidates' list")
        logprobs = scorer.fill_mask_logprobs(text, candidates)
        return {"id": request_id, "logprobs": logprobs}
    except BridgeError as exc:
        return {"id": request_id, "error": {"kind": exc.kind, "detail": str(exc)}}
    except (KeyError, TypeError) as exc:
        return {"id": request_id, "error": {"kind": "internal", "detail": f"malformed request: {exc!r}"}}


def serve(cfg: BridgeConfig, stdin: Optional[IO[str]] = None, stdout: Optional[IO[str]] = None) -> int:
    """Answer hello plus score requests until end of input.

    The model loads before anything is read, so a load failure exits nonzero
    without ever answering the handshake. Per-request failures are reported
    in-protocol and never stop the loop. Up to ``batch_size`` queued requests
    are drained per sweep; each is scored with its own forward pass so a
    request's logprob bytes never depend on what else was in flight.
    """
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    scorer = MaskScorer(cfg)

    def emit(obj: dict) -> None:
        stdout.write(json.dumps(obj, ensure_ascii=False) + "\n")
        stdout.flush()

    lines: "queue.Queue[Optional[str]]" = queue.Queue()

    def read_loop() -> None:
        for line in stdin:
            lines.put(line)
        lines.put(None)

    threading.Thread(target=read_loop, daemon=True).start()

    closed = False
    while not closed:
        batch: list[dict] = []
        line = lines.get()
        while True:
            if line is None:
                closed = True
                break
            line = line.strip()
            if line:
                try:
                    request = json.loads(line)
                except json.JSONDecodeError as exc:
                    emit({"id": None, "error": {"kind": "internal", "detail": f"bad JSON: {exc.msg}"}})
                    request = None
                if isinstance(request, dict):
                    if request.get("op") == "hello":
                        emit(scorer.hello())
                    else:
                        batch.append(request)
                elif request is not None:
                    emit({"id": None, "error": {"kind": "internal", "detail": "request is not an object"}})
            if len(batch) >= cfg.batch_size:
                break
            try:
                line = lines.get_nowait()
            except queue.Empty:
                break
        for request in batch:
            emit(_response_for(scorer, request))
    return 0
