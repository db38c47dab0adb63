"""LLM transport with a content-addressed record/replay cache.

The cache key covers (model, temperature, prompt), so replay can never serve
a response recorded under different request parameters. REPLAY mode performs
no network activity at all and fails fast on a miss.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Protocol

from .errors import CacheMiss, ClientError

log = logging.getLogger(__name__)

API_KEY_ENV_VAR = "MATHSYNTH_API_KEY"
API_BASE_ENV_VAR = "MATHSYNTH_API_BASE"


class CacheMode(Enum):
    RECORD = "record"
    REPLAY = "replay"
    OFF = "off"


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def cache_key(model: str, temperature: float, prompt: str) -> str:
    material = f"{model}\x00{temperature!r}\x00{prompt}"
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


class ResponseCache:
    """Append-only JSONL store of responses keyed by cache_key."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, str] = {}
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    entry = json.loads(line)
                    self._entries[entry["key"]] = entry["response"]

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> str:
        try:
            return self._entries[key]
        except KeyError:
            raise CacheMiss(key) from None

    def put(self, key: str, model: str, prompt: str, response: str):
        entry = {
            "key": key,
            "model": model,
            "prompt_digest": prompt_digest(prompt),
            "response": response,
            "timestamp": time.time(),
        }
        with self._lock:
            self._entries[key] = response
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
                fh.flush()


class LLMClient(Protocol):
    def complete(self, prompt: str, model: str, temperature: float, timeout_s: float) -> str: ...


class HttpLLMClient:
    """Chat-completions client. Credentials come from MATHSYNTH_API_KEY.

    The key value is read once and never logged; only its presence is
    reported.
    """

    def __init__(self, base_url: Optional[str] = None, api_key: Optional[str] = None):
        import requests  # deferred so replay-only installs never need it

        self._requests = requests
        self.base_url = (
            base_url or os.environ.get(API_BASE_ENV_VAR) or "https://api.openai.com/v1"
        ).rstrip("/")
        self._api_key = api_key or os.environ.get(API_KEY_ENV_VAR)
        if not self._api_key:
            raise ClientError("CLIENT_ERROR", f"{API_KEY_ENV_VAR} is not set")
        log.info("http client ready (base=%s, key present)", self.base_url)

    def complete(self, prompt: str, model: str, temperature: float, timeout_s: float) -> str:
        try:
            resp = self._requests.post(
                f"{self.base_url}/chat/completions",
                headers={"Authorization": f"Bearer {self._api_key}"},
                json={
                    "model": model,
                    "temperature": temperature,
                    "messages": [{"role": "user", "content": prompt}],
                },
                timeout=timeout_s,
            )
        except self._requests.RequestException as exc:
            raise ClientError("CLIENT_ERROR", f"transport failure: {exc}") from exc
        if resp.status_code != 200:
            raise ClientError(
                "CLIENT_ERROR", f"HTTP {resp.status_code}", body=resp.text[:200]
            )
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise ClientError("CLIENT_ERROR", f"malformed response body: {exc}") from exc


@dataclass
class Completer:
    """Applies cache mode and retry policy around a client.

    REPLAY needs no client and never touches the network; RECORD serves
    cache hits without a request and persists every new response; OFF is a
    plain passthrough.
    """

    mode: CacheMode
    cache: Optional[ResponseCache] = None
    client: Optional[LLMClient] = None
    retries: int = 3
    backoff_s: float = 0.5

    def __post_init__(self):
        if self.mode in (CacheMode.RECORD, CacheMode.REPLAY) and self.cache is None:
            raise ValueError(f"{self.mode.value} mode requires a cache")
        if self.mode in (CacheMode.RECORD, CacheMode.OFF) and self.client is None:
            raise ValueError(f"{self.mode.value} mode requires a client")

    def complete(self, prompt: str, model: str, temperature: float, timeout_s: float) -> str:
        key = cache_key(model, temperature, prompt)
        if self.mode is CacheMode.REPLAY:
            return self.cache.get(key)
        if self.mode is CacheMode.RECORD and key in self.cache:
            return self.cache.get(key)
        response = self._complete_with_retries(prompt, model, temperature, timeout_s)
        if self.mode is CacheMode.RECORD:
            self.cache.put(key, model, prompt, response)
        return response

    def _complete_with_retries(
        self, prompt: str, model: str, temperature: float, timeout_s: float
    ) -> str:
        delay = self.backoff_s
        last: Optional[ClientError] = None
        for attempt in range(self.retries + 1):
            try:
                return self.client.complete(prompt, model, temperature, timeout_s)
            except ClientError as exc:
                last = exc
                if attempt < self.retries:
                    log.warning("client error (attempt %d): %s", attempt + 1, exc)
                    time.sleep(delay)
                    delay *= 2
        raise last
