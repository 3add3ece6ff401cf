"""Paraphrase providers: a deterministic mock and an HTTP chat-completion client.

A provider receives the rendered prompt together with the source unit and the
attempt number. The HTTP provider only forwards the prompt; the mock needs the
unit so it can substitute synonyms strictly outside entity surfaces and keep
every entity verbatim. Transport-level retries (429/timeout) live in
``call_with_retries`` with exponential backoff; a shared token bucket caps the
request rate across workers.
"""

from __future__ import annotations

import hashlib
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Protocol

import requests

from .textproc import SentenceUnit, tokenize

DEFAULT_TIMEOUT_S = 30.0
BACKOFF_BASE_S = 0.5
BACKOFF_CAP_S = 30.0


class ProviderError(Exception):
    kind = "provider_error"


class RateLimited(ProviderError):
    kind = "rate_limited"

    def __init__(self, retry_after: float | None = None):
        super().__init__(f"rate limited (retry after {retry_after})")
        self.retry_after = retry_after


class Timeout(ProviderError):
    kind = "timeout"


class ProviderRejection(ProviderError):
    kind = "rejection"

    def __init__(self, message: str):
        super().__init__(message)


class MalformedResponse(ProviderError):
    kind = "malformed_response"


class ParaphraseProvider(Protocol):
    name: str

    def paraphrase(self, prompt: str, *, unit: SentenceUnit, attempt: int = 1) -> str: ...


_SYNONYMS = {
    "daily": "every day",
    "nightly": "every night",
    "weekly": "once a week",
    "patient": "individual",
    "shows": "lists",
    "include": "comprise",
    "reports": "describes",
    "using": "taking",
    "mention": "record",
}

_FRAMES = (
    "Per the clinical note, {core}",
    "According to the record, {core}",
    "The note documents the following: {core}",
    "As charted, {core}",
    "{core} This is documented in the chart.",
)


class MockProvider:
    """Rule-based paraphraser: synonym substitution outside entity surfaces plus a
    clause frame chosen by a hash of the prompt and attempt. Pure function of its
    inputs, so augmentation runs are bit-identical across runs and worker counts."""

    name = "mock"

    def paraphrase(self, prompt: str, *, unit: SentenceUnit, attempt: int = 1) -> str:
        digest = hashlib.sha256(f"{prompt}\x00{attempt}".encode("utf-8")).digest()
        key = int.from_bytes(digest[:8], "big")

        entity_ranges = [(m.start, m.end) for m in unit.mentions]
        entity_words = {
            w.lower() for m in unit.mentions for w in m.surface.split()
        }

        def in_entity(start: int, end: int) -> bool:
            return any(start < e and end > s for s, e in entity_ranges)

        pieces: list[str] = []
        last = 0
        for token in tokenize(unit.text):
            pieces.append(unit.text[last:token.start])
            word = token.surface
            lowered = word.lower()
            if (
                not in_entity(token.start, token.end)
                and lowered not in entity_words
                and lowered in _SYNONYMS
            ):
                replacement = _SYNONYMS[lowered]
                if word[0].isupper():
                    replacement = replacement[0].upper() + replacement[1:]
                pieces.append(replacement)
            else:
                pieces.append(word)
            last = token.end
        pieces.append(unit.text[last:])
        core = "".join(pieces)
        return _FRAMES[key % len(_FRAMES)].format(core=core)


class HttpProvider:
    """Chat-completion-style client: POST {model, messages, temperature} to the
    endpoint with a bearer token read from the named environment variable."""

    name = "http"

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str,
        temperature: float = 0.7,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        post: Callable = requests.post,
    ):
        key = os.environ.get(api_key_env)
        if not key:
            raise ValueError(f"environment variable {api_key_env!r} is not set")
        self._endpoint = endpoint
        self._model = model
        self._key = key
        self._temperature = temperature
        self._timeout_s = timeout_s
        self._post = post

    def paraphrase(self, prompt: str, *, unit: SentenceUnit, attempt: int = 1) -> str:
        del unit, attempt  # the remote model sees only the prompt
        payload = {
            "model": self._model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self._temperature,
        }
        headers = {"Authorization": f"Bearer {self._key}"}
        try:
            response = self._post(
                self._endpoint, json=payload, headers=headers, timeout=self._timeout_s
            )
        except requests.Timeout as err:
            raise Timeout(str(err)) from err
        except requests.RequestException as err:
            raise ProviderRejection(str(err)) from err
        if response.status_code == 429:
            header = response.headers.get("Retry-After")
            raise RateLimited(float(header) if header else None)
        if response.status_code >= 400:
            raise ProviderRejection(f"HTTP {response.status_code}: {response.text[:200]}")
        try:
            body = response.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as err:
            raise MalformedResponse(str(err)) from err
        if not isinstance(text, str) or not text.strip():
            raise MalformedResponse("empty completion text")
        return text


class TokenBucket:
    """Blocking rate limiter shared across provider workers."""

    def __init__(self, rate_per_sec: float, capacity: float | None = None):
        if rate_per_sec <= 0:
            raise ValueError("rate must be positive")
        self._rate = rate_per_sec
        self._capacity = capacity if capacity is not None else max(1.0, rate_per_sec)
        self._tokens = self._capacity
        self._stamp = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self._capacity, self._tokens + (now - self._stamp) * self._rate)
                self._stamp = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self._rate
            time.sleep(wait)


def call_with_retries(
    provider: ParaphraseProvider,
    prompt: str,
    *,
    unit: SentenceUnit,
    attempt: int = 1,
    max_retries: int = 3,
    bucket: TokenBucket | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    """Issue one paraphrase call, retrying RateLimited/Timeout with exponential backoff."""
    tries = 0
    while True:
        if bucket is not None:
            bucket.acquire()
        try:
            return provider.paraphrase(prompt, unit=unit, attempt=attempt)
        except (RateLimited, Timeout) as err:
            tries += 1
            if tries > max_retries:
                raise
            delay = min(BACKOFF_CAP_S, BACKOFF_BASE_S * (2 ** (tries - 1)))
            if isinstance(err, RateLimited) and err.retry_after is not None:
                delay = max(delay, err.retry_after)
            sleep(delay)
