"""Scoring backends behind one descriptor type, plus the persistent score cache.

Wire protocol (stdio subprocess and HTTP POST /score carry identical payloads,
one JSON object per line, UTF-8):

    -> {"id": "<item_id>", "text": "<template with {MASK}>", "candidates": ["<correct>", "<wrong>"]}
    <- {"id": "<item_id>", "logprobs": [<lp_correct>, <lp_wrong>]}
    <- {"id": "<item_id>", "error": {"kind": "oov" | "internal", "detail": "..."}}

The first exchange on stdio is the handshake:

    -> {"op": "hello"}
    <- {"name": "<scorer_id>", "deterministic": true, "mask_token": "[MASK]"}

Responses may arrive out of order and are matched by id. Wire values are
natural-log probabilities; they are converted to probabilities exactly once,
here at the boundary.
"""

from __future__ import annotations

import hashlib
import json
import math
import queue
import re
import subprocess
import threading
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

from .dataset import Dataset, StimulusItem, serialize_items

PROB_SUM_TOLERANCE = 1e-9
LOGPROB_TOLERANCE = 1e-9
DEFAULT_TIMEOUT_S = 120.0
DEFAULT_MAX_INFLIGHT = 8


class ScorerError(Exception):
    """Base class for scoring failures."""


class TransportError(ScorerError):
    """The backend process or endpoint could not be reached or stopped responding."""


class OutOfVocabularyError(ScorerError):
    """The backend refused a candidate form that is not a single vocabulary entry."""


class BackendResponseError(ScorerError):
    """The backend answered, but with something the protocol does not allow."""


class ScorerKind(str, Enum):
    UNIFORM = "uniform"
    TABLE = "table"
    FREQUENCY = "frequency"
    EXTERNAL = "external"


@dataclass(frozen=True)
class ScorerDescriptor:
    """Identity and transport of a scorer backend.

    Built-in kinds (uniform, table, frequency) are configured entirely through
    ``params``; external backends carry exactly one transport, either a
    ``command`` line to spawn or an HTTP ``endpoint``.
    """

    scorer_id: str
    kind: ScorerKind
    command: Optional[tuple[str, ...]] = None
    endpoint: Optional[str] = None
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.scorer_id:
            raise ValueError("scorer_id must be non-empty")
        if self.command is not None:
            object.__setattr__(self, "command", tuple(self.command))
        transports = sum(x is not None for x in (self.command, self.endpoint))
        if self.kind is ScorerKind.EXTERNAL:
            if transports != 1:
                raise ValueError("external scorer needs exactly one of command or endpoint")
        elif transports:
            raise ValueError(f"{self.kind.value} scorer takes no transport")

    def to_dict(self) -> dict:
        out: dict = {"scorer_id": self.scorer_id, "kind": self.kind.value}
        if self.command is not None:
            out["command"] = list(self.command)
        if self.endpoint is not None:
            out["endpoint"] = self.endpoint
        if self.params:
            out["params"] = dict(self.params)
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "ScorerDescriptor":
        try:
            kind = ScorerKind(data["kind"])
        except (KeyError, ValueError):
            raise ValueError(f"unknown scorer kind in {data!r}") from None
        command = data.get("command")
        return cls(
            scorer_id=str(data.get("scorer_id", "")),
            kind=kind,
            command=tuple(command) if command is not None else None,
            endpoint=data.get("endpoint"),
            params=dict(data.get("params", {})),
        )


@dataclass(frozen=True)
class ScoreRecord:
    """The backend's probabilities for one item's correct and wrong forms."""

    item_id: str
    scorer_id: str
    p_correct: float
    p_wrong: float
    meta: Optional[Mapping[str, object]] = None

    def __post_init__(self) -> None:
        for label, p in (("p_correct", self.p_correct), ("p_wrong", self.p_wrong)):
            if not math.isfinite(p) or not 0.0 <= p <= 1.0:
                raise ValueError(f"{label} out of range: {p!r}")
        if self.p_correct + self.p_wrong > 1.0 + PROB_SUM_TOLERANCE:
            raise ValueError(
                f"probabilities sum to {self.p_correct + self.p_wrong!r} > 1; "
                "both must come from one distribution"
            )

    def to_dict(self) -> dict:
        out: dict = {
            "item_id": self.item_id,
            "scorer_id": self.scorer_id,
            "p_correct": self.p_correct,
            "p_wrong": self.p_wrong,
        }
        if self.meta is not None:
            out["meta"] = dict(self.meta)
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "ScoreRecord":
        return cls(
            item_id=data["item_id"],
            scorer_id=data["scorer_id"],
            p_correct=data["p_correct"],
            p_wrong=data["p_wrong"],
            meta=data.get("meta"),
        )


# --- persistent cache --------------------------------------------------------


def _slug(text: str, limit: int = 40) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "-", text)[:limit].strip("-") or "scorer"


class ScoreCache:
    """Append-only JSON-lines shards keyed by (scorer_id, dataset source_hash).

    Each shard holds one optional handshake header plus one line per stored
    record; the shard filename embeds a digest of the full key pair, so keys
    never collide across scorers or dataset versions. Last write wins per
    item, readers may run concurrently, and writers are serialized.
    """

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def shard_path(self, scorer_id: str, source_hash: str) -> Path:
        digest = hashlib.sha256(f"{scorer_id}\x00{source_hash}".encode("utf-8")).hexdigest()
        return self.root / f"{_slug(scorer_id)}__{source_hash[:12]}__{digest[:16]}.jsonl"

    def load(self, scorer_id: str, source_hash: str) -> tuple[dict[str, ScoreRecord], Optional[dict]]:
        """Return (records by item_id, handshake info or None) for one shard."""
        path = self.shard_path(scorer_id, source_hash)
        records: dict[str, ScoreRecord] = {}
        handshake: Optional[dict] = None
        if not path.exists():
            return records, handshake
        with path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                if "__handshake__" in obj:
                    handshake = obj["__handshake__"]
                else:
                    record = ScoreRecord.from_dict(obj)
                    records[record.item_id] = record
        return records, handshake

    def put(self, scorer_id: str, source_hash: str, record: ScoreRecord) -> None:
        self._append(scorer_id, source_hash, record.to_dict())

    def put_handshake(self, scorer_id: str, source_hash: str, info: Mapping) -> None:
        self._append(scorer_id, source_hash, {"__handshake__": dict(info)})

    def _append(self, scorer_id: str, source_hash: str, obj: dict) -> None:
        path = self.shard_path(scorer_id, source_hash)
        line = json.dumps(obj, sort_keys=True, ensure_ascii=False) + "\n"
        with self._lock:
            with path.open("a", encoding="utf-8") as fh:
                fh.write(line)


# --- response decoding (shared by both transports) ----------------------------


def _record_from_response(resp: Mapping, item: StimulusItem, scorer_id: str) -> ScoreRecord:
    if not isinstance(resp, Mapping):
        raise BackendResponseError(f"response for {item.id!r} is not an object")
    err = resp.get("error")
    if err is not None:
        kind = err.get("kind") if isinstance(err, Mapping) else None
        detail = err.get("detail", "") if isinstance(err, Mapping) else str(err)
        if kind == "oov":
            raise OutOfVocabularyError(f"item {item.id!r}: {detail or 'out-of-vocabulary candidate'}")
        raise BackendResponseError(f"item {item.id!r}: backend error: {detail or kind}")
    logprobs = resp.get("logprobs")
    if (
        not isinstance(logprobs, (list, tuple))
        or len(logprobs) != 2
        or not all(isinstance(lp, (int, float)) for lp in logprobs)
    ):
        raise BackendResponseError(f"item {item.id!r}: malformed logprobs {logprobs!r}")
    probs = []
    for lp in logprobs:
        if not math.isfinite(lp) or lp > LOGPROB_TOLERANCE:
            raise BackendResponseError(f"item {item.id!r}: logprob {lp!r} is not a log probability")
        probs.append(min(1.0, math.exp(lp)))
    try:
        return ScoreRecord(
            item_id=item.id,
            scorer_id=scorer_id,
            p_correct=probs[0],
            p_wrong=probs[1],
            meta={"logprobs": [float(logprobs[0]), float(logprobs[1])]},
        )
    except ValueError as exc:
        raise BackendResponseError(f"item {item.id!r}: {exc}") from None


def _request_payload(item: StimulusItem) -> dict:
    return {
        "id": item.id,
        "text": item.sentence_template,
        "candidates": [item.correct_form, item.wrong_form],
    }


OnRecord = Optional[Callable[[ScoreRecord], None]]


def _wrap_oov(exc: OutOfVocabularyError, item: StimulusItem, scorer_id: str, policy: str) -> ScoreRecord:
    if policy == "raise":
        raise exc
    # Degenerate (0, 0) marks an unusable pair; metric_rows rejects and tallies it.
    return ScoreRecord(
        item_id=item.id,
        scorer_id=scorer_id,
        p_correct=0.0,
        p_wrong=0.0,
        meta={"reject": "oov", "detail": str(exc)},
    )


# --- built-in backends --------------------------------------------------------


class _BuiltinBackend:
    deterministic = True

    def __init__(self, descriptor: ScorerDescriptor):
        self.descriptor = descriptor
        self.scorer_id = descriptor.scorer_id

    def handshake_info(self) -> dict:
        return {"name": self.scorer_id, "deterministic": True, "mask_token": None}

    def score(self, item: StimulusItem) -> ScoreRecord:
        raise NotImplementedError

    def score_many(
        self,
        items: Sequence[StimulusItem],
        on_record: OnRecord = None,
        oov_policy: str = "raise",
    ) -> list[ScoreRecord]:
        records = []
        for item in items:
            try:
                record = self.score(item)
            except OutOfVocabularyError as exc:
                record = _wrap_oov(exc, item, self.scorer_id, oov_policy)
            if on_record:
                on_record(record)
            records.append(record)
        return records

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


class UniformBackend(_BuiltinBackend):
    """Context-free baseline: every form gets 1 / vocabulary size."""

    def __init__(self, descriptor: ScorerDescriptor):
        super().__init__(descriptor)
        params = descriptor.params
        if "vocab" in params:
            size = len(params["vocab"])  # type: ignore[arg-type]
        else:
            size = int(params.get("vocab_size", 0))
        if size < 2:
            raise ScorerError("uniform scorer needs vocab_size >= 2 (or a vocab list)")
        self._p = 1.0 / size

    def score(self, item: StimulusItem) -> ScoreRecord:
        return ScoreRecord(item.id, self.scorer_id, self._p, self._p)


class TableBackend(_BuiltinBackend):
    """Preloaded (p_correct, p_wrong) per item id, with an optional default pair.

    For checkpoint sweeps the params may hold ``by_steps``, a map from the
    step count (as a string) to the scores/default block to use; the sweep
    runner injects ``params["steps"]`` when it instantiates each step.
    """

    def __init__(self, descriptor: ScorerDescriptor):
        super().__init__(descriptor)
        params: Mapping = descriptor.params
        if "by_steps" in params:
            steps = params.get("steps")
            if steps is None:
                raise ScorerError("table scorer with by_steps needs params['steps']")
            table = params["by_steps"].get(str(steps))  # type: ignore[union-attr]
            if table is None:
                raise ScorerError(f"table scorer has no entry for steps {steps!r}")
            params = table
        self._scores = {
            str(item_id): (float(pair[0]), float(pair[1]))
            for item_id, pair in dict(params.get("scores", {})).items()
        }
        default = params.get("default")
        self._default = (float(default[0]), float(default[1])) if default is not None else None

    def score(self, item: StimulusItem) -> ScoreRecord:
        pair = self._scores.get(item.id, self._default)
        if pair is None:
            raise ScorerError(f"table scorer {self.scorer_id!r} has no entry for item {item.id!r}")
        return ScoreRecord(item.id, self.scorer_id, pair[0], pair[1])


class FrequencyBackend(_BuiltinBackend):
    """Context-free unigram baseline: p(w) = count(w) / sum of counts."""

    def __init__(self, descriptor: ScorerDescriptor):
        super().__init__(descriptor)
        counts = dict(descriptor.params.get("counts", {}))
        if not counts:
            raise ScorerError("frequency scorer needs non-empty counts")
        total = 0
        for word, count in counts.items():
            count = int(count)
            if count < 0:
                raise ScorerError(f"negative count for {word!r}")
            total += count
        if total == 0:
            raise ScorerError("frequency scorer counts are all zero")
        self._counts = {str(w): int(c) for w, c in counts.items()}
        self._total = total

    def _prob(self, form: str) -> float:
        count = self._counts.get(form)
        if count is None:
            raise OutOfVocabularyError(f"form {form!r} not in frequency table")
        return count / self._total

    def score(self, item: StimulusItem) -> ScoreRecord:
        return ScoreRecord(
            item.id, self.scorer_id, self._prob(item.correct_form), self._prob(item.wrong_form)
        )


def frequency_scorer_from_counts(
    counts: Mapping[str, int], scorer_id: str = "frequency"
) -> ScorerDescriptor:
    """Descriptor for a context-free scorer with p(w) proportional to count(w)."""
    if not counts:
        raise ScorerError("counts must be non-empty")
    if all(int(c) == 0 for c in counts.values()):
        raise ScorerError("counts are all zero")
    descriptor = ScorerDescriptor(
        scorer_id=scorer_id, kind=ScorerKind.FREQUENCY, params={"counts": dict(counts)}
    )
    FrequencyBackend(descriptor)  # fail fast on malformed counts
    return descriptor


# --- external transports --------------------------------------------------------


class StdioBackend:
    """JSON-lines subprocess transport with pipelined, id-matched requests."""

    def __init__(
        self,
        descriptor: ScorerDescriptor,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        max_inflight: int = DEFAULT_MAX_INFLIGHT,
    ):
        self.descriptor = descriptor
        self.scorer_id = descriptor.scorer_id
        self.timeout_s = timeout_s
        self.max_inflight = max(1, max_inflight)
        self._proc: Optional[subprocess.Popen] = None
        self._queue: "queue.Queue[object]" = queue.Queue()
        self._hello: Optional[dict] = None
        self._start()

    @property
    def deterministic(self) -> bool:
        return bool(self._hello and self._hello.get("deterministic"))

    def handshake_info(self) -> dict:
        assert self._hello is not None
        return {
            "name": self._hello.get("name"),
            "deterministic": bool(self._hello.get("deterministic")),
            "mask_token": self._hello.get("mask_token"),
        }

    def _start(self) -> None:
        assert self.descriptor.command is not None
        try:
            self._proc = subprocess.Popen(
                list(self.descriptor.command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise TransportError(f"cannot spawn {self.descriptor.command!r}: {exc}") from None
        self._queue = queue.Queue()
        reader = threading.Thread(target=self._read_loop, args=(self._proc,), daemon=True)
        reader.start()
        self._send({"op": "hello"})
        hello = self._recv()
        if not isinstance(hello, dict) or "name" not in hello:
            raise BackendResponseError(f"bad handshake from {self.scorer_id!r}: {hello!r}")
        self._hello = hello

    def _read_loop(self, proc: subprocess.Popen) -> None:
        assert proc.stdout is not None
        for line in proc.stdout:
            line = line.strip()
            if not line:
                continue
            try:
                self._queue.put(json.loads(line))
            except json.JSONDecodeError:
                self._queue.put(BackendResponseError(f"backend emitted non-JSON line: {line[:200]!r}"))
                return
        self._queue.put(TransportError(f"backend {self.scorer_id!r} closed its output"))

    def _send(self, obj: dict) -> None:
        assert self._proc is not None and self._proc.stdin is not None
        try:
            self._proc.stdin.write(json.dumps(obj, ensure_ascii=False) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise TransportError(f"backend {self.scorer_id!r} pipe closed: {exc}") from None

    def _recv(self) -> dict:
        try:
            got = self._queue.get(timeout=self.timeout_s)
        except queue.Empty:
            raise TransportError(
                f"backend {self.scorer_id!r} timed out after {self.timeout_s}s"
            ) from None
        if isinstance(got, Exception):
            raise got
        return got  # type: ignore[return-value]

    def _restart(self) -> None:
        self.close()
        self._start()

    def score_many(
        self,
        items: Sequence[StimulusItem],
        on_record: OnRecord = None,
        oov_policy: str = "raise",
    ) -> list[ScoreRecord]:
        """Score items with at most ``max_inflight`` outstanding requests.

        A timed-out window is retried once against a fresh process before the
        transport error propagates; records already delivered stay delivered.
        """
        done: dict[str, ScoreRecord] = {}
        for attempt in (1, 2):
            remaining = [it for it in items if it.id not in done]
            try:
                self._score_window(remaining, done, on_record, oov_policy)
                break
            except TransportError:
                if attempt == 2:
                    raise
                self._restart()
        return [done[item.id] for item in items]

    def _score_window(
        self,
        items: Sequence[StimulusItem],
        done: dict[str, ScoreRecord],
        on_record: OnRecord,
        oov_policy: str,
    ) -> None:
        pending: dict[str, StimulusItem] = {}
        queue_pos = 0
        while queue_pos < len(items) or pending:
            while queue_pos < len(items) and len(pending) < self.max_inflight:
                item = items[queue_pos]
                self._send(_request_payload(item))
                pending[item.id] = item
                queue_pos += 1
            resp = self._recv()
            resp_id = resp.get("id") if isinstance(resp, dict) else None
            item = pending.pop(resp_id, None) if resp_id is not None else None
            if item is None:
                raise BackendResponseError(
                    f"backend {self.scorer_id!r} answered unknown id {resp_id!r}"
                )
            try:
                record = _record_from_response(resp, item, self.scorer_id)
            except OutOfVocabularyError as exc:
                record = _wrap_oov(exc, item, self.scorer_id, oov_policy)
            done[item.id] = record
            if on_record:
                on_record(record)

    def score(self, item: StimulusItem) -> ScoreRecord:
        return self.score_many([item])[0]

    def close(self) -> None:
        proc, self._proc = self._proc, None
        if proc is None:
            return
        try:
            if proc.stdin:
                proc.stdin.close()
            proc.wait(timeout=5)
        except Exception:
            proc.kill()
            proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


class HttpBackend:
    """HTTP transport: one POST to /score per item, parallel up to max_inflight."""

    def __init__(
        self,
        descriptor: ScorerDescriptor,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        max_inflight: int = DEFAULT_MAX_INFLIGHT,
    ):
        self.descriptor = descriptor
        self.scorer_id = descriptor.scorer_id
        self.timeout_s = timeout_s
        self.max_inflight = max(1, max_inflight)
        assert descriptor.endpoint is not None
        base = descriptor.endpoint.rstrip("/")
        self.url = base if base.endswith("/score") else base + "/score"
        self.deterministic = bool(descriptor.params.get("deterministic", False))

    def handshake_info(self) -> dict:
        return {
            "name": self.scorer_id,
            "deterministic": self.deterministic,
            "mask_token": self.descriptor.params.get("mask_token"),
        }

    def _post(self, item: StimulusItem, oov_policy: str) -> ScoreRecord:
        import requests

        payload = _request_payload(item)
        last_exc: Optional[Exception] = None
        for _ in range(2):  # one retry after a timeout or connection failure
            try:
                resp = requests.post(self.url, json=payload, timeout=self.timeout_s)
                break
            except requests.exceptions.RequestException as exc:
                last_exc = exc
        else:
            raise TransportError(f"POST {self.url} failed: {last_exc}") from None
        if resp.status_code != 200:
            raise TransportError(f"POST {self.url} returned {resp.status_code}")
        try:
            data = resp.json()
        except ValueError:
            raise BackendResponseError(f"non-JSON response for item {item.id!r}") from None
        if data.get("id") != item.id:
            raise BackendResponseError(f"response id {data.get('id')!r} != request id {item.id!r}")
        try:
            return _record_from_response(data, item, self.scorer_id)
        except OutOfVocabularyError as exc:
            return _wrap_oov(exc, item, self.scorer_id, oov_policy)

    def score(self, item: StimulusItem) -> ScoreRecord:
        return self._post(item, "raise")

    def score_many(
        self,
        items: Sequence[StimulusItem],
        on_record: OnRecord = None,
        oov_policy: str = "raise",
    ) -> list[ScoreRecord]:
        if not items:
            return []
        results: list[Optional[ScoreRecord]] = [None] * len(items)
        with ThreadPoolExecutor(max_workers=self.max_inflight) as pool:
            futures = {pool.submit(self._post, item, oov_policy): i for i, item in enumerate(items)}
            done, not_done = wait(futures, return_when=FIRST_EXCEPTION)
            first_error: Optional[Exception] = None
            for future in done:
                try:
                    record = future.result()
                except Exception as exc:  # propagate after cancelling the rest
                    first_error = first_error or exc
                    continue
                results[futures[future]] = record
                if on_record:
                    on_record(record)
            for future in not_done:
                future.cancel()
            if first_error is not None:
                raise first_error
        return [record for record in results if record is not None]

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


Backend = Union[_BuiltinBackend, StdioBackend, HttpBackend]

_BUILTIN_BACKENDS = {
    ScorerKind.UNIFORM: UniformBackend,
    ScorerKind.TABLE: TableBackend,
    ScorerKind.FREQUENCY: FrequencyBackend,
}


def open_backend(
    descriptor: ScorerDescriptor,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    max_inflight: int = DEFAULT_MAX_INFLIGHT,
) -> Backend:
    """Instantiate the backend for a descriptor (spawns/handshakes external ones)."""
    if descriptor.kind is ScorerKind.EXTERNAL:
        if descriptor.command is not None:
            return StdioBackend(descriptor, timeout_s=timeout_s, max_inflight=max_inflight)
        return HttpBackend(descriptor, timeout_s=timeout_s, max_inflight=max_inflight)
    return _BUILTIN_BACKENDS[descriptor.kind](descriptor)


def score_item(
    backend: Union[ScorerDescriptor, Backend],
    item: StimulusItem,
    timeout_s: float = DEFAULT_TIMEOUT_S,
) -> ScoreRecord:
    """Score a single item; opens and closes the backend when given a descriptor."""
    if isinstance(backend, ScorerDescriptor):
        opened = open_backend(backend, timeout_s=timeout_s)
        try:
            return opened.score(item)
        finally:
            opened.close()
    return backend.score(item)


def _items_and_hash(items: Union[Dataset, Sequence[StimulusItem]]) -> tuple[tuple[StimulusItem, ...], str]:
    if isinstance(items, Dataset):
        return items.items, items.source_hash
    seq = tuple(items)
    return seq, hashlib.sha256(serialize_items(seq).encode("utf-8")).hexdigest()


def score_batch(
    backend: Union[ScorerDescriptor, Backend],
    items: Union[Dataset, Sequence[StimulusItem]],
    cache: Optional[ScoreCache] = None,
    oov_policy: str = "raise",
    timeout_s: float = DEFAULT_TIMEOUT_S,
    max_inflight: int = DEFAULT_MAX_INFLIGHT,
) -> list[ScoreRecord]:
    """Score a batch with caching: one record per item, in input order.

    Cache hits are never re-requested; every fresh record is appended to the
    cache as it arrives, so an interrupted batch resumes where it stopped.
    When given a descriptor, the backend is only opened if there are cache
    misses. ``oov_policy`` is either "raise" or "record" (degenerate (0, 0)
    records that downstream metrics reject and tally).
    """
    if oov_policy not in ("raise", "record"):
        raise ScorerError(f"unknown oov_policy {oov_policy!r}")
    seq, source_hash = _items_and_hash(items)
    ids = [item.id for item in seq]
    if len(set(ids)) != len(ids):
        raise ScorerError("score_batch needs items with distinct ids (one dataset)")
    if not seq:
        return []
    scorer_id = backend.scorer_id
    cached: dict[str, ScoreRecord] = {}
    stored_handshake: Optional[dict] = None
    if cache is not None:
        cached, stored_handshake = cache.load(scorer_id, source_hash)
    misses = [item for item in seq if item.id not in cached]
    if misses:
        opened: Backend
        owns_backend = isinstance(backend, ScorerDescriptor)
        opened = (
            open_backend(backend, timeout_s=timeout_s, max_inflight=max_inflight)
            if owns_backend
            else backend  # type: ignore[assignment]
        )
        try:
            if cache is not None and stored_handshake is None:
                cache.put_handshake(scorer_id, source_hash, opened.handshake_info())

            def persist(record: ScoreRecord) -> None:
                if cache is not None:
                    cache.put(scorer_id, source_hash, record)
                cached[record.item_id] = record

            opened.score_many(misses, on_record=persist, oov_policy=oov_policy)
        finally:
            if owns_backend:
                opened.close()
    return [cached[item.id] for item in seq]
