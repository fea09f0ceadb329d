"""Text generation, embedding and pair scoring backends.

Everything that talks to a model goes through one of three small protocols:
:class:`Generator`, :class:`Embedder` and :class:`PairScorer`.  Two
implementations are provided:

* :class:`MockProvider` replays a script of canned responses and embeds with a
  deterministic feature-hashing embedder.  It never touches the network.
* :class:`RemoteProvider` speaks the OpenAI-style ``/chat/completions`` and
  ``/embeddings`` endpoints plus a ``/rerank`` endpoint, over ``httpx``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import httpx
import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyInput,
    ProviderError,
    RateLimited,
    ScriptExhausted,
    ScriptMismatch,
    TransportError,
)

logger = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "DERIVARE_API_KEY"
WILDCARD = "*"


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    system: str | None = None
    temperature: float = 0.0
    max_output_chars: int = 8000

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError(f"temperature must be in [0, 1], got {self.temperature}")
        if self.max_output_chars <= 0:
            raise ValueError("max_output_chars must be positive")


class Generator(Protocol):
    def complete(self, req: GenerationRequest) -> str: ...


class Embedder(Protocol):
    def embed(self, texts: Sequence[str], role: str = "passage") -> np.ndarray:
        """Return an ``(len(texts), dim)`` float array; ``role`` is "query" or "passage"."""
        ...


class PairScorer(Protocol):
    def score_pairs(self, query: str, candidates: Sequence[str]) -> list[float]: ...


def _check_texts(texts: Sequence[str]) -> None:
    if isinstance(texts, str):
        raise TypeError("embed() takes a sequence of strings, not a single string")
    if len(texts) == 0:
        raise EmptyInput("embed() needs at least one text")


# -- offline implementations ----------------------------------------------


_TOKEN = re.compile(r"\w+", re.UNICODE)


class HashingEmbedder:
    """Feature-hashing bag-of-words embedder with unit-norm output.

    Tokens are lower-cased word characters hashed with BLAKE2b, so vectors are
    identical across processes and platforms.
    """

    def __init__(self, dim: int = 256) -> None:
        if dim < 2:
            raise ValueError("dim must be at least 2")
        self.dim = dim

    def _features(self, text: str) -> list[str]:
        return _TOKEN.findall(text.lower())

    def _vector(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for feat in self._features(text):
            h = int.from_bytes(hashlib.blake2b(feat.encode("utf-8"), digest_size=8).digest(), "big")
            vec[h % self.dim] += 1.0 if (h >> 63) & 1 else -1.0
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            # no tokens, or they cancelled out: fall back to one feature for the raw string
            h = int.from_bytes(hashlib.blake2b(b"\x00" + text.encode("utf-8"), digest_size=8).digest(), "big")
            vec[h % self.dim] = 1.0
            norm = 1.0
        return vec / norm

    def embed(self, texts: Sequence[str], role: str = "passage") -> np.ndarray:
        _check_texts(texts)
        return np.stack([self._vector(t) for t in texts])

    def score_pairs(self, query: str, candidates: Sequence[str]) -> list[float]:
        """Cosine between hashed query and candidate vectors (a stand-in cross-encoder)."""
        if len(candidates) == 0:
            raise EmptyInput("score_pairs() needs at least one candidate")
        q = self._vector(query)
        return [float(self._vector(c) @ q) for c in candidates]


@dataclass(frozen=True)
class ScriptEntry:
    """``match`` is a substring, or a tuple of substrings that must all occur."""

    match: str | tuple[str, ...]
    response: str

    def __post_init__(self) -> None:
        if not isinstance(self.match, str):
            object.__setattr__(self, "match", tuple(self.match))

    def matches(self, req: GenerationRequest) -> bool:
        if self.match == WILDCARD:
            return True
        text = req.prompt if req.system is None else f"{req.system}\n{req.prompt}"
        needles = (self.match,) if isinstance(self.match, str) else self.match
        return all(n in text for n in needles)


class MockProvider:
    """Scripted generator plus hashing embedder, for offline runs and tests.

    Each :meth:`complete` call is served by the earliest unused script entry
    whose ``match`` occurs in the prompt or system text (``"*"`` matches
    anything; a list of substrings must all occur).
    Served requests are appended to :attr:`call_log`.

    ``scores`` scripts :meth:`score_pairs`: one number is consumed per
    candidate.  Without it, pairs are scored by hashed cosine similarity.
    """

    def __init__(
        self,
        script: Iterable[tuple[str, str] | ScriptEntry] = (),
        scores: Iterable[float] | None = None,
        embedder: HashingEmbedder | None = None,
    ) -> None:
        self._entries = [e if isinstance(e, ScriptEntry) else ScriptEntry(*e) for e in script]
        self._used = [False] * len(self._entries)
        self._scores = deque(scores) if scores is not None else None
        self.embedder = embedder or HashingEmbedder()
        self.call_log: list[GenerationRequest] = []
        self.score_log: list[tuple[str, tuple[str, ...]]] = []
        self._lock = threading.Lock()

    @classmethod
    def from_json(cls, path: str | Path, **kwargs) -> MockProvider:
        """Load a script file: ``[{"match": str | [str], "response": str}, ...]``."""
        rows = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls([ScriptEntry(r["match"], r["response"]) for r in rows], **kwargs)

    @property
    def remaining(self) -> int:
        return self._used.count(False)

    def complete(self, req: GenerationRequest) -> str:
        with self._lock:
            if all(self._used):
                raise ScriptExhausted(f"mock script exhausted after {len(self.call_log)} call(s)")
            for i, entry in enumerate(self._entries):
                if not self._used[i] and entry.matches(req):
                    self._used[i] = True
                    self.call_log.append(req)
                    return entry.response[: req.max_output_chars]
            pending = [e.match for e, used in zip(self._entries, self._used) if not used]
            raise ScriptMismatch(f"no remaining script entry matches the prompt (pending matchers: {pending!r})")

    def embed(self, texts: Sequence[str], role: str = "passage") -> np.ndarray:
        return self.embedder.embed(texts, role)

    def score_pairs(self, query: str, candidates: Sequence[str]) -> list[float]:
        if len(candidates) == 0:
            raise EmptyInput("score_pairs() needs at least one candidate")
        with self._lock:
            self.score_log.append((query, tuple(candidates)))
            if self._scores is None:
                return self.embedder.score_pairs(query, candidates)
            if len(self._scores) < len(candidates):
                raise ScriptExhausted(
                    f"{len(candidates)} candidates but only {len(self._scores)} scripted scores left"
                )
            return [float(self._scores.popleft()) for _ in candidates]


# -- remote implementation ------------------------------------------------


class RemoteProvider:
    """HTTP client for an OpenAI-compatible API with a ``/rerank`` extension.

    The API key is read from the environment variable named by
    ``api_key_env``.  ``query_prefix`` / ``passage_prefix`` are prepended to
    texts before embedding, for models trained with such markers.
    Rate limits and transport failures are retried ``max_attempts`` times with
    exponential backoff.
    """

    def __init__(
        self,
        endpoint: str,
        chat_model: str,
        embedding_model: str | None = None,
        rerank_model: str | None = None,
        *,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        query_prefix: str = "",
        passage_prefix: str = "",
        timeout: float = 120.0,
        max_attempts: int = 3,
        backoff: float = 1.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.chat_model = chat_model
        self.embedding_model = embedding_model
        self.rerank_model = rerank_model
        self.query_prefix = query_prefix
        self.passage_prefix = passage_prefix
        self.max_attempts = max_attempts
        self.backoff = backoff
        self._sleep = sleep
        headers = {}
        key = os.environ.get(api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def close(self) -> None:
        self._client.close()

    def _post(self, path: str, payload: dict) -> dict:
        url = f"{self.endpoint}/{path.lstrip('/')}"
        last: ProviderError | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client.post(url, json=payload)
            except httpx.HTTPError as exc:
                last = TransportError(f"POST {url} failed: {exc}")
                logger.warning("attempt %d/%d: %s", attempt + 1, self.max_attempts, last)
                continue
            if resp.status_code == 429:
                last = RateLimited(f"POST {url}: rate limited")
            elif resp.status_code >= 500:
                last = TransportError(f"POST {url}: HTTP {resp.status_code}")
            elif resp.status_code >= 400:
                raise ProviderError(f"POST {url}: HTTP {resp.status_code}: {resp.text[:200]}")
            else:
                try:
                    return resp.json()
                except ValueError as exc:
                    raise TransportError(f"POST {url}: response is not JSON") from exc
            logger.warning("attempt %d/%d: %s", attempt + 1, self.max_attempts, last)
        assert last is not None
        raise last

    def complete(self, req: GenerationRequest) -> str:
        messages = []
        if req.system:
            messages.append({"role": "system", "content": req.system})
        messages.append({"role": "user", "content": req.prompt})
        data = self._post(
            "chat/completions",
            {"model": self.chat_model, "messages": messages, "temperature": req.temperature},
        )
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError("malformed chat completion response") from exc
        return (text or "")[: req.max_output_chars]

    def embed(self, texts: Sequence[str], role: str = "passage") -> np.ndarray:
        _check_texts(texts)
        if not self.embedding_model:
            raise ProviderError("no embedding model configured")
        prefix = self.query_prefix if role == "query" else self.passage_prefix
        data = self._post("embeddings", {"model": self.embedding_model, "input": [prefix + t for t in texts]})
        try:
            rows = sorted(data["data"], key=lambda r: r.get("index", 0))
            vectors = [r["embedding"] for r in rows]
        except (KeyError, TypeError) as exc:
            raise TransportError("malformed embeddings response") from exc
        if len(vectors) != len(texts):
            raise TransportError(f"asked for {len(texts)} embeddings, got {len(vectors)}")
        dims = {len(v) for v in vectors}
        if len(dims) != 1:
            raise DimensionMismatch(f"backend returned vectors of dims {sorted(dims)}")
        return np.asarray(vectors, dtype=float)

    def score_pairs(self, query: str, candidates: Sequence[str]) -> list[float]:
        if len(candidates) == 0:
            raise EmptyInput("score_pairs() needs at least one candidate")
        if not self.rerank_model:
            raise ProviderError("no rerank model configured")
        data = self._post(
            "rerank", {"model": self.rerank_model, "query": query, "documents": list(candidates)}
        )
        scores = [None] * len(candidates)
        try:
            for r in data["results"]:
                scores[r["index"]] = float(r["relevance_score"])
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError("malformed rerank response") from exc
        if any(s is None for s in scores):
            raise TransportError("rerank response is missing scores")
        return scores
