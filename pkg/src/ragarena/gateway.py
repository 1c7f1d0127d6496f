"""Uniform access to chat-completion and embedding providers.

One gateway fronts every model call in the pipeline: it owns the on-disk
response cache, the retry policy, the bounded-concurrency batch executor,
and the instrumentation counters used to prove that offline runs never
touch the network. The deterministic mock provider answers from an ordered
rule script, so a whole pipeline run can be replayed byte-identically.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import requests

from .corpus import normalize
from .errors import (
    InvalidDataError,
    InvalidInputError,
    MissingEmbeddingError,
    NoMockResponseError,
    ProviderError,
    ProviderTimeoutError,
)
from .io import read_jsonl

VALID_ROLES = ("system", "user", "assistant")

DEFAULT_BACKOFF_BASE_S = 0.5


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int | None = None
    tag: str = ""

    def __post_init__(self):
        if not self.messages:
            raise InvalidInputError("a chat request needs at least one message")
        for m in self.messages:
            if m.role not in VALID_ROLES:
                raise InvalidInputError(f"invalid message role {m.role!r}")
        if self.temperature < 0:
            raise InvalidInputError("temperature must be >= 0")

    def rendered_prompt(self) -> str:
        """Concatenated message contents; what mock rules match against."""
        return "\n".join(m.content for m in self.messages)


def chat_request(model: str, prompt: str, *, system: str | None = None,
                 temperature: float = 0.0, max_tokens: int | None = None,
                 tag: str = "") -> ChatRequest:
    messages = []
    if system:
        messages.append(ChatMessage("system", system))
    messages.append(ChatMessage("user", prompt))
    return ChatRequest(model=model, messages=tuple(messages),
                       temperature=temperature, max_tokens=max_tokens, tag=tag)


def canonical_request(request: ChatRequest) -> dict:
    """Cache identity of a request; the log-only tag is excluded."""
    return {
        "model": request.model,
        "messages": [{"role": m.role, "content": m.content} for m in request.messages],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    }


def cache_key(request: ChatRequest) -> str:
    payload = json.dumps(canonical_request(request), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ProviderConfig:
    base_url: str = ""
    api_key_env: str = ""
    timeout_ms: int = 60_000
    max_retries: int = 3
    max_in_flight: int = 4
    cache_dir: str | None = None

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise InvalidInputError("timeout_ms must be > 0")
        if self.max_retries < 0:
            raise InvalidInputError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise InvalidInputError("max_in_flight must be >= 1")


class GatewayStats:
    """Thread-safe counters; network_calls stays 0 under mock providers."""

    def __init__(self):
        self._lock = threading.Lock()
        self.network_calls = 0
        self.cache_hits = 0
        self.completions = 0
        self.embeddings = 0
        self.peak_in_flight = 0
        self._in_flight = 0

    def count_network(self):
        with self._lock:
            self.network_calls += 1

    def count_cache_hit(self):
        with self._lock:
            self.cache_hits += 1

    def count_completion(self):
        with self._lock:
            self.completions += 1

    def count_embedding(self):
        with self._lock:
            self.embeddings += 1

    def enter(self):
        with self._lock:
            self._in_flight += 1
            self.peak_in_flight = max(self.peak_in_flight, self._in_flight)

    def leave(self):
        with self._lock:
            self._in_flight -= 1


# --- chat providers -------------------------------------------------------


@dataclass(frozen=True)
class MockRule:
    matcher: str
    response: str
    regex: bool = False

    def matches(self, prompt: str) -> bool:
        if self.regex:
            return re.search(self.matcher, prompt, re.DOTALL) is not None
        return self.matcher in prompt


@dataclass
class MockScript:
    """Ordered rules over the rendered prompt; first match wins."""

    rules: list[MockRule]
    default: str | None = None

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "MockScript":
        rules: list[MockRule] = []
        default = None
        for rec in read_jsonl(path):
            if rec.get("matcher") is None:
                default = rec["response"]
                continue
            rules.append(
                MockRule(
                    matcher=rec["matcher"],
                    response=rec["response"],
                    regex=bool(rec.get("regex", False)),
                )
            )
        return cls(rules=rules, default=default)

    def respond(self, prompt: str) -> str:
        for rule in self.rules:
            if rule.matches(prompt):
                return rule.response
        if self.default is not None:
            return self.default
        head = prompt[:160].replace("\n", " ")
        raise NoMockResponseError(f"no mock rule matched prompt starting: {head!r}")


class MockChatProvider:
    """Deterministic scripted chat provider for offline runs."""

    def __init__(self, script: MockScript):
        self.script = script
        self.stats: GatewayStats | None = None

    def complete(self, request: ChatRequest) -> str:
        return self.script.respond(request.rendered_prompt())


class HttpChatProvider:
    """JSON chat-completion client: POST {base_url}/chat/completions.

    Retries 5xx/429/timeouts with geometric backoff: after failed attempt i
    (1-based, i <= max_retries) it sleeps backoff_base * 2**(i-1) seconds.
    Total attempts never exceed max_retries + 1.
    """

    def __init__(self, config: ProviderConfig, *, session=None,
                 sleep: Callable[[float], None] = time.sleep,
                 backoff_base_s: float = DEFAULT_BACKOFF_BASE_S):
        self.config = config
        self.session = session or requests.Session()
        self.sleep = sleep
        self.backoff_base_s = backoff_base_s
        self.stats: GatewayStats | None = None

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key_env:
            key = os.environ.get(self.config.api_key_env, "")
            if not key:
                raise ProviderError(
                    f"API key env var {self.config.api_key_env!r} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, url: str, payload: dict) -> dict:
        attempts = 0
        last_status = None
        while True:
            attempts += 1
            if self.stats:
                self.stats.count_network()
            try:
                resp = self.session.post(
                    url, json=payload, headers=self._headers(),
                    timeout=self.config.timeout_ms / 1000.0,
                )
            except requests.Timeout:
                if attempts > self.config.max_retries:
                    raise ProviderTimeoutError(
                        f"timed out after {attempts} attempt(s)", attempts=attempts
                    ) from None
                self.sleep(self.backoff_base_s * 2 ** (attempts - 1))
                continue
            if resp.status_code in (429,) or resp.status_code >= 500:
                last_status = resp.status_code
                if attempts > self.config.max_retries:
                    break
                self.sleep(self.backoff_base_s * 2 ** (attempts - 1))
                continue
            if resp.status_code != 200:
                raise ProviderError(
                    f"provider returned {resp.status_code}", status=resp.status_code,
                    attempts=attempts,
                )
            return resp.json()
        raise ProviderError(
            f"provider failed with {last_status} after {attempts} attempt(s)",
            status=last_status, attempts=attempts,
        )

    def complete(self, request: ChatRequest) -> str:
        payload = canonical_request(request)
        if payload["max_tokens"] is None:
            del payload["max_tokens"]
        data = self._post(self.config.base_url.rstrip("/") + "/chat/completions", payload)
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise InvalidDataError(f"malformed chat completion response: {exc}") from exc


# --- embedding providers --------------------------------------------------


class FileEmbeddingProvider:
    """Precomputed embeddings from a JSONL of {"pid", "embedding"} rows.

    Lookup is by key: passage pids for corpus embedding, raw query text for
    query embedding. All vectors must share one dimensionality.
    """

    def __init__(self, path: str | Path):
        self.vectors: dict[str, list[float]] = {}
        dims = set()
        for rec in read_jsonl(path):
            vec = [float(x) for x in rec["embedding"]]
            self.vectors[rec["pid"]] = vec
            dims.add(len(vec))
        if len(dims) > 1:
            raise InvalidDataError(f"mixed embedding dimensions in {path}: {sorted(dims)}")
        self.dim = dims.pop() if dims else 0
        self.stats: GatewayStats | None = None

    def embed(self, texts: Sequence[str], keys: Sequence[str] | None = None) -> list[list[float]]:
        lookup = keys if keys is not None else texts
        out = []
        for key in lookup:
            if key not in self.vectors:
                raise MissingEmbeddingError(f"no precomputed embedding for key {key!r}")
            out.append(normalize(self.vectors[key]))
        return out


class HttpEmbeddingProvider:
    """JSON embedding client: POST {base_url}/embeddings with a text batch."""

    def __init__(self, config: ProviderConfig, model: str, *, session=None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.model = model
        self._chat = HttpChatProvider(config, session=session, sleep=sleep)
        self.stats: GatewayStats | None = None

    def embed(self, texts: Sequence[str], keys: Sequence[str] | None = None) -> list[list[float]]:
        if not texts:
            return []
        self._chat.stats = self.stats
        data = self._chat._post(
            self.config.base_url.rstrip("/") + "/embeddings",
            {"model": self.model, "input": list(texts)},
        )
        try:
            vectors = [[float(x) for x in item["embedding"]] for item in data["data"]]
        except (KeyError, TypeError) as exc:
            raise InvalidDataError(f"malformed embedding response: {exc}") from exc
        if len(vectors) != len(texts):
            raise InvalidDataError(
                f"embedding response count {len(vectors)} != input count {len(texts)}"
            )
        dims = {len(v) for v in vectors}
        if len(dims) > 1:
            raise InvalidDataError(f"mixed dimensions in embedding response: {sorted(dims)}")
        return [normalize(v) for v in vectors]


# --- the gateway ----------------------------------------------------------


class Gateway:
    """Shared front door for completions and embeddings.

    Completions are cached on disk, keyed by a hash of the canonicalized
    request; batches run with at most max_in_flight outstanding requests
    and return results aligned with their inputs.
    """

    def __init__(self, chat_provider=None, embedding_provider=None,
                 cache_dir: str | Path | None = None, max_in_flight: int = 4):
        if max_in_flight < 1:
            raise InvalidInputError("max_in_flight must be >= 1")
        self.chat_provider = chat_provider
        self.embedding_provider = embedding_provider
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.max_in_flight = max_in_flight
        self.stats = GatewayStats()
        self._cache_lock = threading.Lock()
        for provider in (chat_provider, embedding_provider):
            if provider is not None:
                provider.stats = self.stats

    # cache ---------------------------------------------------------------

    def _cache_path(self, key: str) -> Path:
        return self.cache_dir / f"{key}.json"

    def _cache_read(self, request: ChatRequest) -> str | None:
        if self.cache_dir is None:
            return None
        path = self._cache_path(cache_key(request))
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)["response"]

    def _cache_write(self, request: ChatRequest, response: str) -> None:
        if self.cache_dir is None:
            return
        with self._cache_lock:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            path = self._cache_path(cache_key(request))
            payload = {
                "request": canonical_request(request),
                "response": response,
                "timestamp": datetime.now(timezone.utc).isoformat(),
            }
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")
            os.replace(tmp, path)

    # completions ----------------------------------------------------------

    def complete(self, request: ChatRequest, use_cache: bool = True) -> str:
        if self.chat_provider is None:
            raise InvalidInputError("no chat provider configured")
        if use_cache:
            cached = self._cache_read(request)
            if cached is not None:
                self.stats.count_cache_hit()
                return cached
        self.stats.enter()
        try:
            response = self.chat_provider.complete(request)
        finally:
            self.stats.leave()
        self.stats.count_completion()
        self._cache_write(request, response)
        return response

    def complete_batch(
        self, requests_: Sequence[ChatRequest], use_cache: bool = True
    ) -> list[str | Exception]:
        """Run requests with bounded concurrency; results align with inputs.

        Failed items come back as exception instances at their index.
        """
        if not requests_:
            return []

        def one(req: ChatRequest):
            try:
                return self.complete(req, use_cache=use_cache)
            except Exception as exc:  # noqa: BLE001 - per-item error collection
                return exc

        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            return list(pool.map(one, requests_))

    # embeddings -----------------------------------------------------------

    def embed(self, texts: Sequence[str], keys: Sequence[str] | None = None) -> list[list[float]]:
        """One unit-norm vector per text, all of one dimensionality."""
        if self.embedding_provider is None:
            raise InvalidInputError("no embedding provider configured")
        if not texts:
            return []
        vectors = self.embedding_provider.embed(texts, keys=keys)
        self.stats.count_embedding()
        return vectors

    def embed_or_errors(
        self, texts: Sequence[str], keys: Sequence[str] | None = None
    ) -> tuple[list[list[float]], list[tuple[int, Exception]]]:
        """Per-item embedding with an index-tagged error list.

        Used by corpus embedding so one bad passage reports itself without
        hiding the others.
        """
        if self.embedding_provider is None:
            raise InvalidInputError("no embedding provider configured")
        vectors: list[list[float]] = []
        failures: list[tuple[int, Exception]] = []
        try:
            return self.embedding_provider.embed(texts, keys=keys), []
        except MissingEmbeddingError:
            pass  # fall through to per-item lookup to name every offender
        except ProviderError as exc:
            # the whole batch failed after retries; charge every item
            return [[] for _ in texts], [(i, exc) for i in range(len(texts))]
        for i, text in enumerate(texts):
            key = [keys[i]] if keys is not None else None
            try:
                vectors.append(self.embedding_provider.embed([text], keys=key)[0])
            except Exception as exc:  # noqa: BLE001
                vectors.append([])
                failures.append((i, exc))
        if not failures:
            self.stats.count_embedding()
        return vectors, failures
