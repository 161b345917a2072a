"""Single-turn chat-completion clients: HTTP and a recording mock."""

from __future__ import annotations

import hashlib
import logging
import os
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import httpx

from .errors import TransportError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChatClientConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-3.5-turbo"
    api_key_env: str = "OPENAI_API_KEY"  # name of the variable, never the key
    timeout: float = 60.0
    max_retries: int = 3
    temperature: float = 1.0
    backoff: float = 1.0

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def chat_request(prompt: str, cfg: ChatClientConfig) -> dict:
    """Request body: one user message and nothing else, so every trial starts fresh."""
    return {
        "model": cfg.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": cfg.temperature,
    }


class HttpChatClient:
    def __init__(self, cfg: ChatClientConfig, http: httpx.Client | None = None, sleep=time.sleep):
        self.cfg = cfg
        self._http = http or httpx.Client(timeout=cfg.timeout)
        self._sleep = sleep

    @property
    def model_id(self) -> str:
        return self.cfg.model

    def complete(self, prompt: str) -> str:
        headers = {}
        key = os.environ.get(self.cfg.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = chat_request(prompt, self.cfg)
        last = None
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                self._sleep(self.cfg.backoff * 2 ** (attempt - 1))
            try:
                resp = self._http.post(self.cfg.endpoint, json=body, headers=headers)
            except httpx.HTTPError as exc:
                last = f"{type(exc).__name__}: {exc}"
                log.warning("chat request failed (attempt %d): %s", attempt + 1, last)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                log.warning("chat request failed (attempt %d): %s", attempt + 1, last)
                continue
            if resp.status_code != 200:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise TransportError(f"unexpected response shape: {exc}") from exc
        raise TransportError(f"gave up after {self.cfg.max_retries + 1} attempts: {last}")


class MockChatClient:
    """Offline client serving canned responses.

    With a sequence of responses, the reply is picked by a hash of the prompt
    text, so the answer never depends on call order or thread interleaving.
    Every request body is kept in ``requests``.
    """

    def __init__(self, responses: Sequence[str] | Callable[[str], str], cfg: ChatClientConfig | None = None):
        if not callable(responses) and not responses:
            raise ValueError("mock client needs at least one response")
        self.responses = responses
        self.cfg = cfg or ChatClientConfig(model="mock")
        self.requests: list[dict] = []
        self._lock = threading.Lock()

    @property
    def model_id(self) -> str:
        return f"mock:{self.cfg.model}"

    @classmethod
    def from_directory(cls, path: str | Path) -> "MockChatClient":
        files = sorted(Path(path).glob("*.md"))
        if not files:
            raise FileNotFoundError(f"no *.md responses in {path}")
        return cls([f.read_text(encoding="utf-8") for f in files])

    def complete(self, prompt: str) -> str:
        body = chat_request(prompt, self.cfg)
        with self._lock:
            self.requests.append(body)
        if callable(self.responses):
            return self.responses(prompt)
        digest = hashlib.sha256(prompt.encode("utf-8")).digest()
        return self.responses[int.from_bytes(digest[:8], "big") % len(self.responses)]
