"""LLM backends: OpenAI-compatible HTTP, record/replay, and offline stand-ins."""

from __future__ import annotations

import hashlib
import logging
import os
import re
import threading
import time
from collections import defaultdict, deque
from collections.abc import Callable, Iterable, Sequence
from pathlib import Path
from typing import Any, Protocol, runtime_checkable

import httpx
import numpy as np

from cmoforge.llm.ledger import Exchange, load_ledger, prompt_hash

logger = logging.getLogger(__name__)

API_KEY_ENV = "CMOFORGE_API_KEY"
ENDPOINT_ENV = "CMOFORGE_ENDPOINT"
DEFAULT_ENDPOINT = "https://api.openai.com/v1"
DEFAULT_MODEL = "gpt-3.5-turbo"


class TransportError(RuntimeError):
    """The backend could not produce a response."""


class ReplayMiss(LookupError):
    """No recorded response is available for a prompt."""


class SurrogateRefusal(ValueError):
    """The surrogate could not read solutions from the prompt."""


class ConfigurationError(RuntimeError):
    pass


@runtime_checkable
class LLMBackend(Protocol):
    def complete(self, prompt: str) -> str: ...

    @property
    def identity(self) -> dict[str, Any]: ...


def render_vector(values: Iterable[float], precision: int | None = None) -> str:
    if precision is None:
        body = ", ".join(repr(float(v)) for v in values)
    else:
        body = ", ".join(f"{float(v):.{precision}g}" for v in values)
    return f"<start>{body}<end>"


_LINE = re.compile(r"^decs: \[(?P<decs>[^\]]*)\], objs: \[(?P<objs>[^\]]*)\], CV: (?P<cv>\S+)\s*$")


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def read_pool(prompt: str) -> list[tuple[list[float], list[float], float]]:
    """Solution lines of a rendered prompt as ``(decs, objs, cv)`` triples."""
    pool = []
    for line in prompt.splitlines():
        if not line.startswith("decs:"):
            continue
        match = _LINE.match(line)
        if match is None:
            raise SurrogateRefusal(f"malformed solution line: {line!r}")
        pool.append((_floats(match["decs"]), _floats(match["objs"]), float(match["cv"])))
    if not pool:
        raise SurrogateRefusal("prompt lists no solutions")
    return pool


class SurrogateBackend:
    """Deterministic offline stand-in for the LLM.

    Ranks the prompt's solutions by CV, then by objective sum, and answers with
    ``alpha * best + (1 - alpha) * second``. ``alpha`` is either fixed or
    derived from a hash of ``(seed, prompt)`` into [0.4, 0.6].
    """

    concurrent_safe = True

    def __init__(self, seed: int = 0, alpha: float | None = None, precision: int = 12):
        if alpha is not None and not 0.0 <= alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        self.seed = seed
        self.alpha = alpha
        self.precision = precision

    def blend_weight(self, prompt: str) -> float:
        if self.alpha is not None:
            return self.alpha
        digest = hashlib.sha256(f"{self.seed}\x00{prompt}".encode()).digest()
        return 0.4 + 0.2 * int.from_bytes(digest[:8], "big") / 2**64

    def complete(self, prompt: str) -> str:
        pool = read_pool(prompt)
        ranked = sorted(pool, key=lambda item: (item[2], sum(item[1])))
        best = np.array(ranked[0][0])
        second = np.array(ranked[1][0]) if len(ranked) > 1 else best
        if best.shape != second.shape:
            raise SurrogateRefusal("solutions of different dimension in prompt")
        alpha = self.blend_weight(prompt)
        return render_vector(alpha * best + (1.0 - alpha) * second, self.precision)

    @property
    def identity(self) -> dict[str, Any]:
        return {"kind": "surrogate", "seed": self.seed, "alpha": self.alpha}


class OracleBackend:
    """Always answers with one fixed decision vector."""

    concurrent_safe = True

    def __init__(self, vector: Sequence[float]):
        self.vector = [float(v) for v in vector]

    def complete(self, prompt: str) -> str:
        return render_vector(self.vector)

    @property
    def identity(self) -> dict[str, Any]:
        return {"kind": "oracle", "vector": self.vector}


class ReplayBackend:
    """Answers prompts from recorded exchanges.

    Responses are keyed by prompt hash and served in recorded order, so a
    prompt asked five times gets the five recorded answers in sequence. When
    ``fallback`` is set (record mode) a miss is forwarded to it; otherwise a
    miss raises :class:`ReplayMiss`. Recorded transport failures replay as
    :class:`TransportError`.
    """

    concurrent_safe = False

    def __init__(self, exchanges: Iterable[Exchange] | str | Path, fallback: LLMBackend | None = None):
        if isinstance(exchanges, (str, Path)):
            self.source = str(exchanges)
            exchanges = load_ledger(exchanges)
        else:
            self.source = None
        self._queues: dict[str, deque[Exchange]] = defaultdict(deque)
        for ex in exchanges:
            self._queues[ex.prompt_hash].append(ex)
        self.fallback = fallback
        self.live_calls = 0
        self._lock = threading.Lock()

    def complete(self, prompt: str) -> str:
        key = prompt_hash(prompt)
        with self._lock:
            queue = self._queues.get(key)
            record = queue.popleft() if queue else None
        if record is None:
            if self.fallback is None:
                raise ReplayMiss(f"no recorded response for prompt {key[:12]}")
            self.live_calls += 1
            return self.fallback.complete(prompt)
        if record.response is None:
            raise TransportError(f"recorded transport failure for prompt {key[:12]}")
        return record.response

    @property
    def last_usage(self) -> dict | None:
        return getattr(self.fallback, "last_usage", None) if self.fallback is not None else None

    @property
    def identity(self) -> dict[str, Any]:
        ident: dict[str, Any] = {"kind": "replay" if self.fallback is None else "record", "ledger": self.source}
        if self.fallback is not None:
            ident["inner"] = self.fallback.identity
        return ident


class FailingBackend:
    """Test double that answers with a fixed string or raises ``TransportError``."""

    concurrent_safe = True

    def __init__(self, response: str | None = "I cannot help with that."):
        self.response = response
        self.calls = 0

    def complete(self, prompt: str) -> str:
        self.calls += 1
        if self.response is None:
            raise TransportError("simulated transport failure")
        return self.response

    @property
    def identity(self) -> dict[str, Any]:
        return {"kind": "failing", "response": self.response}


class LiveBackend:
    """OpenAI-compatible ``/chat/completions`` client.

    Retries connection errors, HTTP 429 and 5xx with exponential backoff and
    raises :class:`TransportError` once attempts are exhausted.
    """

    concurrent_safe = True

    def __init__(
        self,
        api_key: str,
        endpoint: str = DEFAULT_ENDPOINT,
        model: str = DEFAULT_MODEL,
        temperature: float = 1.0,
        max_tokens: int = 256,
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff: float = 1.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not api_key:
            raise ConfigurationError(f"live backend needs an API key ({API_KEY_ENV})")
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.max_retries = max_retries
        self.backoff = backoff
        self._sleep = sleep
        self._client = httpx.Client(
            timeout=timeout,
            transport=transport,
            headers={"Authorization": f"Bearer {api_key}"},
        )
        self.last_usage: dict | None = None
        self.requests = 0

    @classmethod
    def from_env(cls, **kwargs: Any) -> LiveBackend:
        api_key = os.environ.get(API_KEY_ENV, "").strip()
        if not api_key:
            raise ConfigurationError(f"environment variable {API_KEY_ENV} is not set")
        kwargs.setdefault("endpoint", os.environ.get(ENDPOINT_ENV, "").strip() or DEFAULT_ENDPOINT)
        return cls(api_key=api_key, **kwargs)

    def payload(self, prompt: str) -> dict[str, Any]:
        return {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }

    def complete(self, prompt: str) -> str:
        url = f"{self.endpoint}/chat/completions"
        last_error = "no attempt made"
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            self.requests += 1
            try:
                resp = self._client.post(url, json=self.payload(prompt))
            except httpx.HTTPError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                logger.warning("LLM request failed (attempt %d): %s", attempt + 1, last_error)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                logger.warning("LLM request failed (attempt %d): %s", attempt + 1, last_error)
                continue
            if resp.status_code >= 400:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                data = resp.json()
                content = data["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise TransportError(f"unexpected response body: {exc}") from exc
            self.last_usage = data.get("usage")
            return content or ""
        raise TransportError(f"giving up after {self.max_retries + 1} attempts: {last_error}")

    def close(self) -> None:
        self._client.close()

    @property
    def identity(self) -> dict[str, Any]:
        return {
            "kind": "live",
            "endpoint": self.endpoint,
            "model": self.model,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }
