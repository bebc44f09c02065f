"""Chat backends for the prompt agents.

ScriptedBackend replays canned responses for tests and offline runs.
OpenAIChatBackend speaks the common chat-completion wire format over
HTTP; the credential comes from an environment variable so configs stay
shareable. One client instance may serve many sessions concurrently.
"""
from __future__ import annotations

import json
import os
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import httpx

from .errors import BackendError

RETRY_STATUS = (429, 500, 502, 503, 504)


@dataclass(frozen=True)
class SamplingConfig:
    temperature: float = 0.3
    top_p: float = 1.0
    max_tokens: int = 512


class ChatBackend(ABC):
    """Single-turn text-in text-out completion."""

    @abstractmethod
    def complete(self, prompt: str) -> str:
        raise NotImplementedError


class ScriptedBackend(ChatBackend):
    """Replays a fixed response list in order; raises once exhausted."""

    def __init__(self, responses: list[str]):
        self._responses = list(responses)
        self._cursor = 0
        self.prompts: list[str] = []

    @classmethod
    def from_json(cls, path) -> "ScriptedBackend":
        data = json.loads(Path(path).read_text())
        if not isinstance(data, list) or not all(isinstance(r, str) for r in data):
            raise BackendError(f"{path}: script must be a JSON array of strings")
        return cls(data)

    @property
    def calls(self) -> int:
        return self._cursor

    @property
    def remaining(self) -> int:
        return len(self._responses) - self._cursor

    def complete(self, prompt: str) -> str:
        self.prompts.append(prompt)
        if self._cursor >= len(self._responses):
            raise BackendError(f"script exhausted after {self._cursor} calls")
        response = self._responses[self._cursor]
        self._cursor += 1
        return response


class OpenAIChatBackend(ChatBackend):
    """Chat-completion endpoint client with bounded retries.

    Retries timeouts, connection errors and 429/5xx responses with
    exponential backoff; anything else fails fast as a BackendError.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "SUBJECTCUT_API_KEY",
        sampling: SamplingConfig = SamplingConfig(),
        timeout: float = 30.0,
        max_retries: int = 2,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.sampling = sampling
        self.max_retries = max_retries
        self._client = httpx.Client(timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, prompt: str) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.sampling.temperature,
            "top_p": self.sampling.top_p,
            "max_tokens": self.sampling.max_tokens,
        }
        url = f"{self.base_url}/chat/completions"
        last_error = "no attempt made"
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(0.5 * (2 ** (attempt - 1)))
            try:
                response = self._client.post(url, json=payload, headers=self._headers())
            except httpx.HTTPError as exc:
                last_error = f"transport error: {exc}"
                continue
            if response.status_code in RETRY_STATUS:
                last_error = f"status {response.status_code}"
                continue
            if response.status_code != 200:
                raise BackendError(
                    f"chat endpoint returned {response.status_code}: {response.text[:200]}"
                )
            try:
                return response.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
                raise BackendError(f"unexpected completion payload: {exc}") from exc
        raise BackendError(f"chat endpoint unreachable after {self.max_retries + 1} attempts ({last_error})")
