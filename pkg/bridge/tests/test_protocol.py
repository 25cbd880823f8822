"""Protocol conformance over a real subprocess, including the [SECONDARY] gate."""

from __future__ import annotations

import json
import math
import random
import subprocess
import sys
import time
from contextlib import contextmanager

import pytest

from _words import WORDS


@contextmanager
def criterion(name: str, budget_s: float):
    start = time.time()
    try:
        yield
    except Exception:
        print(f"\nACCEPTANCE {name}: FAIL ({time.time() - start:.2f}s)")
        raise
    elapsed = time.time() - start
    print(f"\nACCEPTANCE {name}: PASS ({elapsed:.2f}s)")
    assert elapsed < budget_s


class BridgeProcess:
    def __init__(self, model_dir: str, *extra: str):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "mlm_bridge", "serve", "--model", model_dir, *extra],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )

    def send(self, obj: dict) -> None:
        self.proc.stdin.write(json.dumps(obj, ensure_ascii=False) + "\n")
        self.proc.stdin.flush()

    def recv_line(self, timeout_s: float = 60.0) -> str:
        line = self.proc.stdout.readline()
        if not line:
            raise AssertionError("bridge closed its output")
        return line.rstrip("\n")

    def recv(self) -> dict:
        return json.loads(self.recv_line())

    def close(self) -> None:
        if self.proc.stdin:
            self.proc.stdin.close()
        self.proc.wait(timeout=30)

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def random_request(rng: random.Random, request_id: str) -> dict:
    content = [w for w in WORDS if w not in (".", ",")]
    length = rng.randint(3, 8)
    tokens = [rng.choice(content) for _ in range(length)]
    tokens.insert(rng.randint(0, length), "{MASK}")
    correct, wrong = rng.sample(content, 2)
    return {"id": request_id, "text": " ".join(tokens) + " .", "candidates": [correct, wrong]}


@pytest.fixture(scope="module")
def bridge(tiny_model_dir):
    with BridgeProcess(tiny_model_dir, "--scorer-id", "tiny-test-mlm") as proc:
        proc.send({"op": "hello"})
        proc.hello = proc.recv()
        yield proc


class TestHandshake:
    def test_fields(self, bridge):
        assert bridge.hello["name"] == "tiny-test-mlm"
        assert bridge.hello["deterministic"] is True
        assert bridge.hello["mask_token"] == "[MASK]"

    def test_load_failure_exits_nonzero_before_handshake(self, tmp_path):
        proc = subprocess.Popen(
            [sys.executable, "-m", "mlm_bridge", "serve", "--model", str(tmp_path / "missing")],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
        out, err = proc.communicate(json.dumps({"op": "hello"}) + "\n", timeout=120)
        assert proc.returncode != 0
        assert out == ""
        assert "error" in err


def test_protocol_conformance_suite(bridge):
    """[SECONDARY] 100 random requests: one response each, finite logprobs, mass bound."""
    with criterion("bridge-protocol-conformance", budget_s=300.0):
        rng = random.Random(515)
        requests = {f"req-{i:03d}": random_request(rng, f"req-{i:03d}") for i in range(100)}
        for request in requests.values():
            bridge.send(request)
        answered: dict[str, dict] = {}
        for _ in range(len(requests)):
            response = bridge.recv()
            rid = response["id"]
            assert rid in requests, f"unknown id {rid!r}"
            assert rid not in answered, f"id {rid!r} answered twice"
            answered[rid] = response
        assert set(answered) == set(requests)
        for response in answered.values():
            assert "error" not in response, response
            lp_c, lp_w = response["logprobs"]
            assert math.isfinite(lp_c) and math.isfinite(lp_w)
            assert lp_c <= 0.0 and lp_w <= 0.0
            assert math.exp(lp_c) + math.exp(lp_w) <= 1.0 + 1e-6

        # OOV candidates produce in-protocol errors
        bridge.send({"id": "oov-1", "text": "os nenos son {MASK} .", "candidates": ["altos", "alto"]})
        response = bridge.recv()
        assert response["id"] == "oov-1"
        assert response["error"]["kind"] == "oov"

        bridge.send({"id": "oov-2", "text": "o neno é {MASK} .", "candidates": ["qqqzzz", "alto"]})
        assert bridge.recv()["error"]["kind"] == "oov"

        # deterministic repeats: byte-identical response lines
        probe_req = {"id": "det-1", "text": "a nena que cantaba {MASK} na casa .", "candidates": ["canta", "cantan"]}
        bridge.send(probe_req)
        first = bridge.recv_line()
        bridge.send(probe_req)
        second = bridge.recv_line()
        assert first == second


class TestErrorPaths:
    def test_mask_count_errors_in_protocol(self, bridge):
        bridge.send({"id": "m0", "text": "sen oco .", "candidates": ["alto", "alta"]})
        assert bridge.recv()["error"]["kind"] == "internal"
        bridge.send({"id": "m2", "text": "{MASK} {MASK} .", "candidates": ["alto", "alta"]})
        assert bridge.recv()["error"]["kind"] == "internal"

    def test_malformed_request_does_not_kill_loop(self, bridge):
        bridge.send({"id": "half", "text": "o neno é {MASK} ."})  # no candidates
        assert bridge.recv()["error"]["kind"] == "internal"
        bridge.send({"id": "ok", "text": "o neno é {MASK} .", "candidates": ["alto", "alta"]})
        assert "logprobs" in bridge.recv()

    def test_batched_pipelining_answers_everything(self, tiny_model_dir):
        with BridgeProcess(tiny_model_dir, "--batch-size", "4") as proc:
            proc.send({"op": "hello"})
            proc.recv()
            rng = random.Random(99)
            for i in range(10):
                proc.send(random_request(rng, f"b-{i}"))
            seen = {proc.recv()["id"] for _ in range(10)}
            assert seen == {f"b-{i}" for i in range(10)}


class TestHarnessIntegration:
    def test_probe_external_backend_scores_through_bridge(self, tiny_model_dir, tmp_path):
        """The evaluation harness consumes the bridge purely over the wire protocol."""
        probe = pytest.importorskip("probe")
        from probe.dataset import parse_dataset
        from probe.scorer import ScoreCache, ScorerDescriptor, ScorerKind, score_batch

        lines = [
            {"id": "g1", "template": "o neno que cantaba onte é {MASK} .", "correct": "alto",
             "wrong": "alta", "dep": "noun_adj", "length": "short", "attr": "absent",
             "feature": "gender", "value": "masculine"},
            {"id": "n1", "template": "as nenas que cantaban {MASK} na casa .", "correct": "cantan",
             "wrong": "canta", "dep": "subj_verb", "length": "short", "attr": "absent",
             "feature": "number", "value": "plural"},
        ]
        dataset = parse_dataset("\n".join(json.dumps(l) for l in lines), name="bridge-it")
        descriptor = ScorerDescriptor(
            "tiny-test-mlm",
            ScorerKind.EXTERNAL,
            command=(sys.executable, "-m", "mlm_bridge", "serve", "--model", tiny_model_dir,
                     "--scorer-id", "tiny-test-mlm"),
        )
        cache = ScoreCache(tmp_path / "cache")
        records = score_batch(descriptor, dataset, cache, timeout_s=120.0)
        assert [r.item_id for r in records] == ["g1", "n1"]
        for record in records:
            assert 0.0 <= record.p_wrong <= 1.0
            assert 0.0 <= record.p_correct <= 1.0
            assert record.p_correct + record.p_wrong <= 1.0 + 1e-9
        _, handshake = cache.load("tiny-test-mlm", dataset.source_hash)
        assert handshake == {"name": "tiny-test-mlm", "deterministic": True, "mask_token": "[MASK]"}
