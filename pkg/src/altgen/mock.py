"""A local chat-completions server driven by a fixture file, for offline runs and tests.

Fixture format (JSON)::

    {
      "rules": [
        {"pattern": "rewind", "reply": "go back 15 seconds",
         "usage": {"prompt_tokens": 150, "completion_tokens": 4}},
        {"fingerprint": "<sha256>", "reply": "delete"},
        {"pattern": "broken_button", "status": 500}
      ],
      "default": {"reply": "icon"}
    }

Rules are tried in order; ``pattern`` is a regular expression searched in
the request's text parts, ``fingerprint`` matches the client's fingerprint
header. Without a ``default`` an unmatched request gets a 404.
"""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Optional, Union

from .genai.client import FINGERPRINT_HEADER

DEFAULT_USAGE = {"prompt_tokens": 0, "completion_tokens": 0}


def load_fixture(source: Union[str, Path, dict, None]) -> dict[str, Any]:
    if source is None:
        return {"rules": []}
    if isinstance(source, dict):
        return source
    return json.loads(Path(source).read_text(encoding="utf-8"))


def request_text(body: dict[str, Any]) -> str:
    parts = []
    for msg in body.get("messages", []):
        content = msg.get("content")
        if isinstance(content, str):
            parts.append(content)
        elif isinstance(content, list):
            parts.extend(p.get("text", "") for p in content if p.get("type") == "text")
    return "\n".join(parts)


def has_image(body: dict[str, Any]) -> bool:
    return any(isinstance(m.get("content"), list) and any(p.get("type") == "image_url" for p in m["content"])
               for m in body.get("messages", []))


class MockBackend:
    def __init__(self, fixture=None, host: str = "127.0.0.1", port: int = 0):
        self.fixture = load_fixture(fixture)
        self._compiled = [(re.compile(r["pattern"], re.DOTALL) if "pattern" in r else None, r)
                          for r in self.fixture.get("rules", [])]
        self.requests: list[dict[str, Any]] = []
        self._lock = threading.Lock()
        self._server = ThreadingHTTPServer((host, port), self._handler_class())
        self._server.daemon_threads = True
        self._thread: Optional[threading.Thread] = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1"

    def start(self) -> "MockBackend":
        self._thread = threading.Thread(target=self._server.serve_forever, name="mock-backend", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def match(self, body: dict[str, Any], fingerprint: str) -> Optional[dict[str, Any]]:
        text = request_text(body)
        for regex, rule in self._compiled:
            if regex is not None and regex.search(text):
                return rule
            if regex is None and rule.get("fingerprint") == fingerprint:
                return rule
        return self.fixture.get("default")

    def _handler_class(self):
        backend = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _send(self, status: int, payload: Any):
                data = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def do_GET(self):
                if self.path.rstrip("/").endswith("__log"):
                    with backend._lock:
                        self._send(200, list(backend.requests))
                else:
                    self._send(404, {"error": "not found"})

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                try:
                    body = json.loads(self.rfile.read(length) or b"{}")
                except ValueError:
                    self._send(400, {"error": "bad json"})
                    return
                fp = self.headers.get(FINGERPRINT_HEADER, "")
                rule = backend.match(body, fp)
                entry = {"fingerprint": fp, "model": body.get("model"), "text": request_text(body),
                         "has_image": has_image(body), "status": 200, "reply": None}
                if rule is None:
                    entry["status"] = 404
                elif rule.get("status", 200) != 200:
                    entry["status"] = int(rule["status"])
                else:
                    entry["reply"] = rule.get("reply", "")
                with backend._lock:
                    backend.requests.append(entry)
                if entry["status"] != 200:
                    self._send(entry["status"], {"error": {"message": "mock: no reply"}})
                    return
                usage = dict(DEFAULT_USAGE, **(rule.get("usage") or {}))
                usage["total_tokens"] = usage["prompt_tokens"] + usage["completion_tokens"]
                self._send(200, {
                    "id": f"mock-{len(backend.requests)}",
                    "object": "chat.completion",
                    "model": body.get("model"),
                    "choices": [{"index": 0, "finish_reason": "stop",
                                 "message": {"role": "assistant", "content": entry["reply"]}}],
                    "usage": usage,
                })

        return Handler


def serve(fixture, host: str = "127.0.0.1", port: int = 8765) -> MockBackend:
    return MockBackend(fixture, host, port).start()
