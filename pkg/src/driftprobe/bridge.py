"""Wire protocol to masked-LM backends, plus a deterministic in-process mock.

Protocol (JSON over HTTP, natural-log probabilities; field names are fixed and
mirrored in schema/wire_protocol.json):

    GET  /info       -> {"name", "vocab_size", "mask_token_id", "mask_token"}
    POST /tokenize   {"text", "add_prefix_space"} -> {"token_ids": [...]}
    POST /detokenize {"token_ids": [...]} -> {"text"}
    POST /fill_mask  {"text", "top_n", "query_token_ids": [...]}
                     -> {"masks": [{"position", "top": [[id, logp], ...],
                                    "queried": {"<id>": logp, ...}}]}

The protocol carries no session state; retried requests are idempotent.
Responses are validated at the client boundary, never trusted from the wire.

The mock backend serves the same operations from a JSON fixture:

    {"header": {"name", "vocab": [token, ...], "mask_token_id"},
     "contexts": {context_string: {token: prob, ...}, ...},
     "fallback_unigram": {token: prob, ...}}

Context rows list explicit token probabilities summing to <= 1; leftover mass
is spread uniformly over unlisted vocabulary tokens, so a request with
top_n = vocab_size always returns a full normalized distribution. Context
strings match on tokenized form, so surface spacing differences never miss.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import requests

from .errors import FixtureError, ProtocolError, TransportError

logger = logging.getLogger(__name__)

LOGPROB_TOLERANCE = 1e-6
MOCK_ENDPOINT_PREFIX = "mock:"

INFO_PATH = "/info"
TOKENIZE_PATH = "/tokenize"
DETOKENIZE_PATH = "/detokenize"
FILL_MASK_PATH = "/fill_mask"


@dataclass(frozen=True)
class BackendDescriptor:
    """Identity and handshake facts of one model backend."""

    name: str
    endpoint: str
    vocab_size: int
    mask_token_id: int
    mask_token: str


@dataclass(frozen=True)
class FillMaskRequest:
    text: str
    top_n: int
    query_token_ids: tuple[int, ...] = ()

    def __post_init__(self):
        if self.top_n < 1:
            raise ValueError(f"top_n must be >= 1, got {self.top_n}")

    def digest(self) -> str:
        payload = json.dumps(
            {"text": self.text, "top_n": self.top_n, "query_token_ids": list(self.query_token_ids)},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class MaskDistribution:
    """Scored predictions for one mask position."""

    position: int
    top: list[tuple[int, float]]
    queried: dict[int, float]

    def validate(self, requested_ids: Iterable[int] = ()) -> None:
        logps = [lp for _, lp in self.top]
        if any(b > a for a, b in zip(logps, logps[1:])):
            raise ProtocolError(f"top list not sorted descending at mask {self.position}")
        for lp in logps + list(self.queried.values()):
            if lp > LOGPROB_TOLERANCE:
                raise ProtocolError(f"log-probability {lp} above 0 at mask {self.position}")
        missing = [tid for tid in requested_ids if tid not in self.queried]
        if missing:
            raise ProtocolError(f"queried log-probs missing for token ids {missing}")


# --------------------------------------------------------------------------
# Fixture tokenizer (whitespace + trailing-punctuation peeling)
# --------------------------------------------------------------------------

_PEEL_CHARS = ".,!?;:"


class FixtureTokenizer:
    """Deterministic local tokenizer over a fixed vocabulary.

    Splits on whitespace, then repeatedly peels trailing punctuation into
    single-character tokens, so sentence-final marks never glue to words.
    decode/encode round-trip exactly on canonical (single-spaced) text.
    """

    def __init__(self, vocab: Sequence[str]):
        if len(set(vocab)) != len(vocab):
            raise FixtureError("fixture vocabulary contains duplicates")
        self.vocab = list(vocab)
        self.token_to_id = {token: i for i, token in enumerate(self.vocab)}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def token_strings(self, text: str) -> list[str]:
        tokens: list[str] = []
        for chunk in text.split():
            peeled: list[str] = []
            while len(chunk) > 1 and chunk[-1] in _PEEL_CHARS:
                peeled.append(chunk[-1])
                chunk = chunk[:-1]
            tokens.append(chunk)
            tokens.extend(reversed(peeled))
        return tokens

    def encode(self, text: str, add_prefix_space: bool = False) -> list[int]:
        # add_prefix_space is accepted for wire parity; whitespace tokenization
        # is insensitive to a leading space.
        del add_prefix_space
        ids = []
        for token in self.token_strings(text):
            if token not in self.token_to_id:
                raise ProtocolError(f"token {token!r} not in fixture vocabulary")
            ids.append(self.token_to_id[token])
        return ids

    def decode(self, ids: Iterable[int]) -> str:
        words = []
        for token_id in ids:
            if not 0 <= token_id < len(self.vocab):
                raise ProtocolError(f"token id {token_id} outside fixture vocabulary")
            words.append(self.vocab[token_id])
        return " ".join(words)

    def canonical(self, text: str) -> str:
        return " ".join(self.token_strings(text))


# --------------------------------------------------------------------------
# Mock backend
# --------------------------------------------------------------------------


def _fixture_line(raw_text: str, needle: str) -> int | None:
    quoted = json.dumps(needle)
    for lineno, line in enumerate(raw_text.splitlines(), start=1):
        if quoted in line or (len(quoted) > 2 and quoted[1:-1] in line):
            return lineno
    return None


class MockBackend:
    """Fully deterministic in-process backend serving a validated fixture."""

    def __init__(self, fixture_path: str | Path):
        self.fixture_path = Path(fixture_path)
        raw_text = self.fixture_path.read_text(encoding="utf-8")
        try:
            fixture = json.loads(raw_text)
        except json.JSONDecodeError as exc:
            raise FixtureError(f"fixture is not valid JSON: {exc.msg}", line=exc.lineno) from exc
        header = fixture.get("header")
        if not isinstance(header, dict):
            raise FixtureError("fixture missing 'header' object", line=1)
        vocab = header.get("vocab")
        if not isinstance(vocab, list) or not vocab or not all(isinstance(t, str) for t in vocab):
            raise FixtureError("header.vocab must be a non-empty list of strings", line=1)
        self.tokenizer = FixtureTokenizer(vocab)
        mask_token_id = header.get("mask_token_id")
        if not isinstance(mask_token_id, int) or not 0 <= mask_token_id < len(vocab):
            raise FixtureError(f"header.mask_token_id {mask_token_id!r} outside vocabulary")
        self.name = str(header.get("name", "mock"))
        self.mask_token_id = mask_token_id
        self.mask_token = vocab[mask_token_id]
        self.contexts = self._load_rows(fixture.get("contexts", {}), raw_text, canonicalize=True)
        fallback = fixture.get("fallback_unigram")
        if not isinstance(fallback, dict) or not fallback:
            raise FixtureError("fixture missing 'fallback_unigram' distribution")
        self.fallback = self._load_row("fallback_unigram", fallback, raw_text)

    def _load_rows(self, rows: Mapping, raw_text: str, canonicalize: bool) -> dict[str, dict[int, float]]:
        if not isinstance(rows, Mapping):
            raise FixtureError("'contexts' must be an object")
        loaded: dict[str, dict[int, float]] = {}
        for context, row in rows.items():
            key = self.tokenizer.canonical(context) if canonicalize else context
            if key in loaded:
                raise FixtureError(
                    f"contexts {context!r} collide after tokenization",
                    line=_fixture_line(raw_text, context),
                )
            loaded[key] = self._load_row(context, row, raw_text)
        return loaded

    def _load_row(self, context: str, row: Mapping, raw_text: str) -> dict[int, float]:
        if not isinstance(row, Mapping) or not row:
            raise FixtureError(
                f"distribution for {context!r} must be a non-empty object",
                line=_fixture_line(raw_text, context),
            )
        line = _fixture_line(raw_text, context)
        out: dict[int, float] = {}
        for token, prob in row.items():
            if token not in self.tokenizer.token_to_id:
                raise FixtureError(f"{context!r} scores unknown token {token!r}", line=line)
            if not isinstance(prob, (int, float)) or not 0 < prob <= 1:
                raise FixtureError(f"{context!r} has probability {prob!r} outside (0, 1]", line=line)
            out[self.tokenizer.token_to_id[token]] = float(prob)
        total = sum(out.values())
        if total > 1 + 1e-9:
            raise FixtureError(f"probabilities for {context!r} sum to {total} > 1", line=line)
        return out

    def info(self) -> dict:
        return {
            "name": self.name,
            "vocab_size": self.tokenizer.vocab_size,
            "mask_token_id": self.mask_token_id,
            "mask_token": self.mask_token,
        }

    def tokenize(self, text: str, add_prefix_space: bool = False) -> list[int]:
        return self.tokenizer.encode(text, add_prefix_space)

    def detokenize(self, token_ids: Iterable[int]) -> str:
        return self.tokenizer.decode(token_ids)

    def _full_distribution(self, row: Mapping[int, float]) -> list[float]:
        leftover = 1.0 - sum(row.values())
        unlisted = self.tokenizer.vocab_size - len(row)
        if unlisted > 0 and leftover > 0:
            tail = math.log(leftover / unlisted)
        else:
            tail = -math.inf
        logps = [tail] * self.tokenizer.vocab_size
        for token_id, prob in row.items():
            logps[token_id] = math.log(prob)
        return logps

    def fill_mask(self, req: FillMaskRequest) -> list[MaskDistribution]:
        tokens = self.tokenizer.token_strings(req.text)
        mask_count = sum(1 for t in tokens if t == self.mask_token)
        if mask_count == 0:
            raise ProtocolError(f"no {self.mask_token!r} in text: {req.text!r}")
        for tid in req.query_token_ids:
            if not 0 <= tid < self.tokenizer.vocab_size:
                raise ProtocolError(f"queried token id {tid} outside vocabulary")
        key = " ".join(tokens)
        row = self.contexts.get(key, self.fallback)
        logps = self._full_distribution(row)
        order = sorted(range(self.tokenizer.vocab_size), key=lambda i: (-logps[i], i))
        top = [(i, logps[i]) for i in order[: req.top_n]]
        queried = {tid: logps[tid] for tid in req.query_token_ids}
        return [
            MaskDistribution(position=i, top=list(top), queried=dict(queried))
            for i in range(mask_count)
        ]


def mock_backend(fixture_path: str | Path) -> BackendDescriptor:
    """Descriptor for a fixture-served backend (endpoint "mock:<path>")."""
    backend = MockBackend(fixture_path)
    info = backend.info()
    return BackendDescriptor(
        name=info["name"],
        endpoint=f"{MOCK_ENDPOINT_PREFIX}{fixture_path}",
        vocab_size=info["vocab_size"],
        mask_token_id=info["mask_token_id"],
        mask_token=info["mask_token"],
    )


# --------------------------------------------------------------------------
# Client
# --------------------------------------------------------------------------


@dataclass
class CallRecord:
    kind: str
    text: str
    cache_hit: bool


class CallLog:
    """Per-client log of every logical backend call (cache hits included)."""

    def __init__(self):
        self.records: list[CallRecord] = []
        self._lock = threading.Lock()

    def add(self, kind: str, text: str, cache_hit: bool) -> None:
        with self._lock:
            self.records.append(CallRecord(kind=kind, text=text, cache_hit=cache_hit))

    def count(self, kind: str | None = None) -> int:
        with self._lock:
            return len([r for r in self.records if kind is None or r.kind == kind])

    def reset(self) -> None:
        with self._lock:
            self.records.clear()


class ResponseCache:
    """Thread-safe response cache, optionally persisted as JSON lines."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._data: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            with open(self.path, encoding="utf-8") as handle:
                for line in handle:
                    if line.strip():
                        entry = json.loads(line)
                        self._data[entry["key"]] = entry["payload"]

    def get(self, key: str) -> dict | None:
        with self._lock:
            return self._data.get(key)

    def put(self, key: str, payload: dict) -> None:
        with self._lock:
            if key in self._data:
                return
            self._data[key] = payload
            if self.path:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as handle:
                    handle.write(json.dumps({"key": key, "payload": payload}) + "\n")


class BridgeClient:
    """Client for one backend; safe for concurrent use.

    ``endpoint`` is an HTTP URL or "mock:<fixture-path>". The descriptor is
    always derived from the backend's own handshake; ``name`` overrides the
    reported name (several runs of one model under different labels).
    Concurrent callers share at most ``max_in_flight`` outstanding transport
    requests; cache hits bypass the limit.
    """

    def __init__(
        self,
        endpoint: str,
        name: str | None = None,
        cache: ResponseCache | None = None,
        timeout: float = 60.0,
        max_retries: int = 2,
        retry_wait: float = 0.5,
        max_in_flight: int = 8,
    ):
        self.endpoint = endpoint.rstrip("/") if not endpoint.startswith(MOCK_ENDPOINT_PREFIX) else endpoint
        self.cache = cache or ResponseCache()
        self.call_log = CallLog()
        self.timeout = timeout
        self.max_retries = max_retries
        self.retry_wait = retry_wait
        self._in_flight = threading.BoundedSemaphore(max_in_flight)
        self._mock: MockBackend | None = None
        self._session: requests.Session | None = None
        if endpoint.startswith(MOCK_ENDPOINT_PREFIX):
            self._mock = MockBackend(endpoint[len(MOCK_ENDPOINT_PREFIX) :])
            info = self._mock.info()
        else:
            self._session = requests.Session()
            info = self._get(INFO_PATH)
        for key in ("name", "vocab_size", "mask_token_id", "mask_token"):
            if key not in info:
                raise ProtocolError(f"/info response missing {key!r}: {info}")
        self.descriptor = BackendDescriptor(
            name=name or info["name"],
            endpoint=endpoint,
            vocab_size=int(info["vocab_size"]),
            mask_token_id=int(info["mask_token_id"]),
            mask_token=str(info["mask_token"]),
        )

    # -- transport ---------------------------------------------------------

    def _get(self, path: str) -> dict:
        return self._transport("GET", path, None)

    def _post(self, path: str, payload: dict) -> dict:
        return self._transport("POST", path, payload)

    def _transport(self, method: str, path: str, payload: dict | None) -> dict:
        assert self._session is not None
        url = self.endpoint + path
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                with self._in_flight:
                    response = self._session.request(
                        method, url, json=payload, timeout=self.timeout
                    )
            except requests.RequestException as exc:
                last_error = exc
                if attempt < self.max_retries:
                    time.sleep(self.retry_wait * (attempt + 1))
                continue
            if response.status_code >= 500:
                last_error = TransportError(f"{url} returned {response.status_code}")
                if attempt < self.max_retries:
                    time.sleep(self.retry_wait * (attempt + 1))
                continue
            if response.status_code >= 400:
                raise ProtocolError(f"{url} rejected request ({response.status_code}): {response.text}")
            return response.json()
        raise TransportError(f"backend unreachable at {url}: {last_error}") from last_error

    # -- operations ----------------------------------------------------------

    def fill_mask(self, req: FillMaskRequest) -> list[MaskDistribution]:
        """One MaskDistribution per mask, in textual order; deterministic."""
        cache_key = f"{self.descriptor.name}:fill_mask:{req.digest()}"
        cached = self.cache.get(cache_key)
        self.call_log.add("fill_mask", req.text, cache_hit=cached is not None)
        if cached is not None:
            masks = self._decode_masks(cached)
        elif self._mock is not None:
            masks = self._mock.fill_mask(req)
            self.cache.put(cache_key, self._encode_masks(masks))
        else:
            payload = {
                "text": req.text,
                "top_n": req.top_n,
                "query_token_ids": list(req.query_token_ids),
            }
            raw = self._post(FILL_MASK_PATH, payload)
            if "masks" not in raw:
                raise ProtocolError(f"fill_mask response missing 'masks': {raw}")
            masks = self._decode_masks(raw["masks"])
            self.cache.put(cache_key, self._encode_masks(masks))
        self._validate_masks(req, masks)
        return masks

    def tokenize(self, text: str, add_prefix_space: bool = False) -> list[int]:
        cache_key = f"{self.descriptor.name}:tokenize:{int(add_prefix_space)}:{text}"
        cached = self.cache.get(cache_key)
        self.call_log.add("tokenize", text, cache_hit=cached is not None)
        if cached is not None:
            return list(cached["token_ids"])
        if self._mock is not None:
            ids = self._mock.tokenize(text, add_prefix_space)
        else:
            raw = self._post(TOKENIZE_PATH, {"text": text, "add_prefix_space": add_prefix_space})
            if "token_ids" not in raw:
                raise ProtocolError(f"tokenize response missing 'token_ids': {raw}")
            ids = [int(i) for i in raw["token_ids"]]
        self.cache.put(cache_key, {"token_ids": list(ids)})
        return ids

    def detokenize(self, token_ids: Sequence[int]) -> str:
        key_ids = ",".join(str(i) for i in token_ids)
        cache_key = f"{self.descriptor.name}:detokenize:{key_ids}"
        cached = self.cache.get(cache_key)
        self.call_log.add("detokenize", key_ids, cache_hit=cached is not None)
        if cached is not None:
            return cached["text"]
        if self._mock is not None:
            text = self._mock.detokenize(token_ids)
        else:
            raw = self._post(DETOKENIZE_PATH, {"token_ids": list(token_ids)})
            if "text" not in raw:
                raise ProtocolError(f"detokenize response missing 'text': {raw}")
            text = raw["text"]
        self.cache.put(cache_key, {"text": text})
        return text

    # -- response plumbing ---------------------------------------------------

    @staticmethod
    def _encode_masks(masks: list[MaskDistribution]) -> dict:
        return {
            "masks": [
                {
                    "position": m.position,
                    "top": [[tid, lp] for tid, lp in m.top],
                    "queried": {str(tid): lp for tid, lp in m.queried.items()},
                }
                for m in masks
            ]
        }

    @staticmethod
    def _decode_masks(raw) -> list[MaskDistribution]:
        entries = raw["masks"] if isinstance(raw, dict) else raw
        masks = []
        for entry in entries:
            masks.append(
                MaskDistribution(
                    position=int(entry["position"]),
                    top=[(int(tid), float(lp)) for tid, lp in entry["top"]],
                    queried={int(tid): float(lp) for tid, lp in entry["queried"].items()},
                )
            )
        return masks

    def _validate_masks(self, req: FillMaskRequest, masks: list[MaskDistribution]) -> None:
        expected = req.text.count(self.descriptor.mask_token)
        if len(masks) != expected:
            raise ProtocolError(
                f"mask-count disagreement: text has {expected} placeholders, "
                f"backend returned {len(masks)} distributions"
            )
        for i, mask in enumerate(masks):
            if mask.position != i:
                raise ProtocolError(f"mask positions out of order: {[m.position for m in masks]}")
            mask.validate(req.query_token_ids)
