"""OpenAI-compatible chat-completions client with retries and a result cache."""

from __future__ import annotations

import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Any, Optional

import httpx

from .prompts import PromptPayload

log = logging.getLogger(__name__)

RETRYABLE_STATUS = {408, 409, 429}
FINGERPRINT_HEADER = "X-Altgen-Fingerprint"


class BackendError(RuntimeError):
    """The backend did not produce a reply; ``attempts`` holds one line per try."""

    def __init__(self, message: str, attempts: Optional[list[str]] = None):
        self.attempts = list(attempts or [])
        detail = "; ".join(self.attempts)
        super().__init__(f"{message} [{detail}]" if detail else message)


@dataclass(frozen=True)
class BackendConfig:
    endpoint: str = "https://api.openai.com/v1"
    model: str = "gpt-4o-2024-08-06"
    api_key_env: str = "ALTGEN_API_KEY"
    max_tokens: int = 32
    temperature: float = 0.0
    timeout: float = 30.0
    max_attempts: int = 3
    backoff: float = 0.5
    max_in_flight: int = 4
    # USD per million tokens
    price_prompt: Decimal = Decimal("2.50")
    price_completion: Decimal = Decimal("10.00")

    def __post_init__(self):
        object.__setattr__(self, "price_prompt", Decimal(str(self.price_prompt)))
        object.__setattr__(self, "price_completion", Decimal(str(self.price_completion)))
        if self.price_prompt < 0 or self.price_completion < 0:
            raise ValueError("prices must be >= 0")
        if self.max_attempts < 1 or self.max_in_flight < 1:
            raise ValueError("max_attempts and max_in_flight must be >= 1")

    def cost(self, prompt_tokens: int, completion_tokens: int) -> Decimal:
        return (prompt_tokens * self.price_prompt + completion_tokens * self.price_completion) / Decimal(1_000_000)


@dataclass(frozen=True)
class ChatReply:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    attempts: int = 1


class ChatClient:
    """Blocking client; safe to share between threads (at most ``max_in_flight`` requests at once)."""

    def __init__(self, config: BackendConfig = BackendConfig(), transport: Optional[httpx.BaseTransport] = None):
        self.config = config
        self._http = httpx.Client(timeout=config.timeout, transport=transport)
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self._lock = threading.Lock()
        self.requests_sent = 0

    def close(self):
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _headers(self, payload: PromptPayload) -> dict[str, str]:
        headers = {"Content-Type": "application/json", FINGERPRINT_HEADER: payload.fingerprint}
        key = os.environ.get(self.config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, payload: PromptPayload, max_tokens: Optional[int] = None) -> ChatReply:
        cfg = self.config
        body = {
            "model": cfg.model,
            "messages": payload.messages(),
            "max_tokens": max_tokens or cfg.max_tokens,
            "temperature": cfg.temperature,
        }
        url = cfg.endpoint.rstrip("/") + "/chat/completions"
        attempts: list[str] = []
        for attempt in range(1, cfg.max_attempts + 1):
            try:
                with self._slots:
                    with self._lock:
                        self.requests_sent += 1
                    resp = self._http.post(url, json=body, headers=self._headers(payload))
                if resp.status_code == 200:
                    return self._parse(resp.json(), attempt)
                attempts.append(f"#{attempt}: HTTP {resp.status_code}")
                if resp.status_code not in RETRYABLE_STATUS and resp.status_code < 500:
                    break
            except httpx.TimeoutException as exc:
                attempts.append(f"#{attempt}: timeout ({exc})")
            except httpx.TransportError as exc:
                attempts.append(f"#{attempt}: {type(exc).__name__} ({exc})")
            except (ValueError, KeyError, IndexError) as exc:
                attempts.append(f"#{attempt}: malformed reply ({exc})")
            if attempt < cfg.max_attempts:
                time.sleep(cfg.backoff * 2 ** (attempt - 1))
        raise BackendError(f"chat request failed after {len(attempts)} attempt(s)", attempts)

    @staticmethod
    def _parse(data: dict[str, Any], attempt: int) -> ChatReply:
        content = data["choices"][0]["message"]["content"]
        if isinstance(content, list):
            content = "".join(part.get("text", "") for part in content)
        usage = data.get("usage") or {}
        return ChatReply(content or "", int(usage.get("prompt_tokens", 0)),
                         int(usage.get("completion_tokens", 0)), attempt)


@dataclass
class ResultCache:
    """Content-addressed store: ``<root>/<fp[:2]>/<fp>.json``; memory only when ``root`` is None."""

    root: Optional[Path] = None
    _memory: dict[str, dict] = field(default_factory=dict, repr=False)
    _write_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _key_locks: dict[str, threading.Lock] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.root is not None:
            self.root = Path(self.root)

    def path_for(self, fp: str) -> Path:
        assert self.root is not None
        return self.root / fp[:2] / f"{fp}.json"

    def claim(self, fp: str) -> threading.Lock:
        """Per-fingerprint lock so concurrent identical requests hit the backend once."""
        with self._write_lock:
            return self._key_locks.setdefault(fp, threading.Lock())

    def get(self, fp: str) -> Optional[dict]:
        if fp in self._memory:
            return self._memory[fp]
        if self.root is None:
            return None
        try:
            value = json.loads(self.path_for(fp).read_text(encoding="utf-8"))
        except (OSError, ValueError):
            return None
        self._memory[fp] = value
        return value

    def put(self, fp: str, value: dict) -> None:
        with self._write_lock:
            self._memory[fp] = value
            if self.root is None:
                return
            target = self.path_for(fp)
            target.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=target.parent, suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(value, fh, ensure_ascii=False, indent=2, sort_keys=True)
            os.replace(tmp, target)
