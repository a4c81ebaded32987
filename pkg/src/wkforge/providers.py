from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
import unicodedata
import urllib.error
import urllib.request
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Dict, List, Optional, Protocol, TypeVar, runtime_checkable

import numpy as np

from .errors import InvalidInput, MalformedResponse, ProviderUnavailable
from .models import EmbeddingVector, ProviderConfig


LOGGER = logging.getLogger(__name__)

NGRAM_SIZE = 3
RETRIES = 1
BACKOFF_SECONDS = 0.5
UNIT_NORM_TOLERANCE = 1e-9

SWKG_BLOCK_START = "### Work knowledge"
SWKG_BLOCK_END = "### Output format"

T = TypeVar("T")


class Transport(Protocol):
    def post_json(
        self,
        url: str,
        payload: Dict[str, Any],
        headers: Dict[str, str],
        timeout: float,
    ) -> Dict[str, Any]:  # pragma: no cover - interface
        ...


@runtime_checkable
class EmbeddingProvider(Protocol):
    dimension: int

    def embed(self, text: str) -> EmbeddingVector:  # pragma: no cover - interface
        ...


@runtime_checkable
class GenerationProvider(Protocol):
    def complete(self, prompt: str) -> str:  # pragma: no cover - interface
        ...


@runtime_checkable
class JudgeProvider(Protocol):
    def judge(self, generated: str, reference: str) -> float:  # pragma: no cover - interface
        ...


class UrllibTransport:
    def post_json(
        self,
        url: str,
        payload: Dict[str, Any],
        headers: Dict[str, str],
        timeout: float,
    ) -> Dict[str, Any]:
        body = json.dumps(payload).encode("utf-8")
        request = urllib.request.Request(
            url,
            data=body,
            headers={"Content-Type": "application/json", **headers},
            method="POST",
        )
        try:
            with urllib.request.urlopen(request, timeout=timeout) as response:
                raw = response.read()
        except (urllib.error.URLError, TimeoutError, OSError) as exc:
            raise ProviderUnavailable(f"POST {url} failed: {exc}") from exc
        try:
            data = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedResponse(f"POST {url} returned invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise MalformedResponse(f"POST {url} returned {type(data).__name__}, expected an object")
        return data


def l2_normalize(vector: np.ndarray) -> EmbeddingVector:
    values = np.asarray(vector, dtype=float)
    norm = float(np.linalg.norm(values))
    if norm == 0.0:
        raise InvalidInput("cannot normalize a zero vector")
    return values / norm


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    va = np.asarray(a, dtype=float)
    vb = np.asarray(b, dtype=float)
    denom = float(np.linalg.norm(va) * np.linalg.norm(vb))
    if denom == 0.0:
        return 0.0
    return float(np.dot(va, vb) / denom)


def _require_text(text: str, label: str) -> str:
    if not isinstance(text, str) or not text.strip():
        raise InvalidInput(f"{label} must be a non-empty string")
    return text


def _with_retry(action: Callable[[], T], what: str) -> T:
    for attempt in range(RETRIES + 1):
        try:
            return action()
        except ProviderUnavailable as exc:
            if attempt >= RETRIES:
                raise
            delay = BACKOFF_SECONDS * (2 ** attempt)
            LOGGER.debug("%s unavailable (%s); retrying in %.2fs", what, exc, delay)
            time.sleep(delay)
    raise AssertionError("unreachable")  # pragma: no cover


class HashingEmbedder:
    def __init__(self, dimension: int = 256, seed: int = 0, ngram: int = NGRAM_SIZE) -> None:
        self.dimension = dimension
        self.seed = seed
        self.ngram = ngram
        self._key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")

    def _bucket(self, gram: str) -> int:
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=self._key).digest()
        return int.from_bytes(digest, "little") % self.dimension

    def embed(self, text: str) -> EmbeddingVector:
        _require_text(text, "text")
        clean = " ".join(unicodedata.normalize("NFKC", text).lower().split())
        padded = f" {clean} "
        # Unsigned counts, so cosines between two embeddings are never negative.
        counts = np.zeros(self.dimension, dtype=float)
        for start in range(max(1, len(padded) - self.ngram + 1)):
            counts[self._bucket(padded[start:start + self.ngram])] += 1.0
        return l2_normalize(counts)


class TemplateGenerator:
    """Answers with one ``title :: description`` line per SWKG task, in prompt order."""

    def __init__(self, seed: int = 0) -> None:
        self.seed = seed

    def complete(self, prompt: str) -> str:
        _require_text(prompt, "prompt")
        lines: List[str] = []
        inside = False
        for raw in prompt.splitlines():
            stripped = raw.strip()
            if stripped.startswith(SWKG_BLOCK_START):
                inside = True
                continue
            if stripped.startswith(SWKG_BLOCK_END):
                inside = False
                continue
            if not inside or not stripped:
                continue
            parts = [part.strip() for part in stripped.split(" | ", 2)]
            if len(parts) < 3 or not parts[1]:
                continue
            lines.append(f"{parts[1]} :: {parts[2]}")
        return "\n".join(lines)


class EmbeddingJudge:
    def __init__(self, embedder: EmbeddingProvider) -> None:
        self.embedder = embedder

    def judge(self, generated: str, reference: str) -> float:
        _require_text(generated, "generated task text")
        _require_text(reference, "reference task text")
        similarity = cosine_similarity(self.embedder.embed(generated), self.embedder.embed(reference))
        return min(1.0, max(0.0, (1.0 + similarity) / 2.0))


class _HttpClient:
    def __init__(self, cfg: ProviderConfig, transport: Transport, route: str) -> None:
        self.cfg = cfg
        self.transport = transport
        self.url = cfg.endpoint_url.rstrip("/") + "/" + route
        self._slots = threading.BoundedSemaphore(cfg.max_in_flight)

    def _headers(self) -> Dict[str, str]:
        key = os.environ.get(self.cfg.api_key_env)
        return {"Authorization": f"Bearer {key}"} if key else {}

    def _post(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        def attempt() -> Dict[str, Any]:
            with self._slots:
                return self.transport.post_json(self.url, payload, self._headers(), self.cfg.timeout)

        return _with_retry(attempt, self.url)


class HttpEmbedder(_HttpClient):
    def __init__(self, cfg: ProviderConfig, transport: Transport) -> None:
        super().__init__(cfg, transport, "embed")
        self.dimension = cfg.dimension

    def embed(self, text: str) -> EmbeddingVector:
        _require_text(text, "text")
        data = self._post({"text": text})
        vector = data.get("vector")
        if not isinstance(vector, list) or len(vector) != self.dimension:
            raise MalformedResponse(f"embedding response must carry a {self.dimension}-dimensional vector")
        try:
            return l2_normalize(np.asarray(vector, dtype=float))
        except (TypeError, ValueError) as exc:
            raise MalformedResponse(f"embedding response is not numeric: {exc}") from exc


class HttpGenerator(_HttpClient):
    def __init__(self, cfg: ProviderConfig, transport: Transport) -> None:
        super().__init__(cfg, transport, "complete")

    def complete(self, prompt: str) -> str:
        _require_text(prompt, "prompt")
        data = self._post({"prompt": prompt, "seed": self.cfg.seed})
        text = data.get("text")
        if not isinstance(text, str) or not text.strip():
            raise MalformedResponse("generation backend returned an empty response")
        return text


_VERDICT = re.compile(r"^\s*(1|0|yes|no|true|false)\b", re.IGNORECASE)
_PLACEHOLDER = re.compile(r"\{(generated|reference)\}")


class LLMJudge:
    def __init__(self, cfg: ProviderConfig, generator: GenerationProvider) -> None:
        self.prompt = cfg.judge_prompt
        self.generator = generator

    def judge(self, generated: str, reference: str) -> float:
        _require_text(generated, "generated task text")
        _require_text(reference, "reference task text")
        values = {"generated": generated, "reference": reference}
        prompt = _PLACEHOLDER.sub(lambda match: values[match.group(1)], self.prompt)
        reply = self.generator.complete(prompt)
        match = _VERDICT.match(reply)
        if match is None:
            raise MalformedResponse(f"unparsable judge reply: {reply[:80]!r}")
        return 1.0 if match.group(1).lower() in {"1", "yes", "true"} else 0.0


@dataclass(frozen=True)
class ProviderSuite:
    embedder: EmbeddingProvider
    generator: GenerationProvider
    judge: JudgeProvider


def build_providers(cfg: ProviderConfig, transport: Optional[Transport] = None) -> ProviderSuite:
    if cfg.offline_mode:
        embedder = HashingEmbedder(cfg.dimension, cfg.seed)
        return ProviderSuite(embedder, TemplateGenerator(cfg.seed), EmbeddingJudge(embedder))
    channel = transport if transport is not None else UrllibTransport()
    generator = HttpGenerator(cfg, channel)
    return ProviderSuite(HttpEmbedder(cfg, channel), generator, LLMJudge(cfg, generator))


@lru_cache(maxsize=16)
def get_providers(cfg: ProviderConfig) -> ProviderSuite:
    return build_providers(cfg)


def embed_text(text: str, cfg: ProviderConfig, suite: Optional[ProviderSuite] = None) -> EmbeddingVector:
    return (suite or get_providers(cfg)).embedder.embed(text)


def complete(prompt: str, cfg: ProviderConfig, suite: Optional[ProviderSuite] = None) -> str:
    _require_text(prompt, "prompt")
    text = (suite or get_providers(cfg)).generator.complete(prompt)
    if not text.strip():
        raise MalformedResponse("generation backend returned an empty response")
    return text


def judge_match(
    generated: str,
    reference: str,
    cfg: ProviderConfig,
    suite: Optional[ProviderSuite] = None,
) -> float:
    return (suite or get_providers(cfg)).judge.judge(generated, reference)
