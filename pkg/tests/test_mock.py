import json

import httpx
import pytest

from altgen.extract import detect_icons, extract_context
from altgen.genai.client import BackendError, ResultCache
from altgen.genai.generate import generate_alt_text
from altgen.mock import MockBackend
from altgen.model import MMT_I, TEXTT

from conftest import icon_png

REWIND = {"rules": [{"pattern": ".*rewind.*", "reply": "go back 15 seconds",
                     "usage": {"prompt_tokens": 150, "completion_tokens": 4}}]}


def post(server, text, fingerprint="fp"):
    body = {"model": "m", "messages": [{"role": "user", "content": text}]}
    return httpx.post(server.url + "/chat/completions", json=body, headers={"X-Altgen-Fingerprint": fingerprint})


def test_pattern_rule(mock_factory):
    server = mock_factory(REWIND)
    resp = post(server, "the rewind_button icon")
    assert resp.status_code == 200
    data = resp.json()
    assert data["choices"][0]["message"]["content"] == "go back 15 seconds"
    assert data["usage"] == {"prompt_tokens": 150, "completion_tokens": 4, "total_tokens": 154}


def test_default_and_unmatched(mock_factory):
    assert post(mock_factory(dict(REWIND, default={"reply": "icon"})), "x").json()["choices"][0]["message"][
        "content"] == "icon"
    assert post(mock_factory(REWIND), "play button").status_code == 404


def test_fingerprint_and_status_rules(mock_factory):
    server = mock_factory({"rules": [{"fingerprint": "abc", "reply": "delete"}, {"pattern": "boom", "status": 500}]})
    assert post(server, "anything", "abc").json()["choices"][0]["message"]["content"] == "delete"
    assert post(server, "boom").status_code == 500
    assert [r["status"] for r in server.requests] == [200, 500]


def test_log_endpoint_and_image_flag(mock_factory):
    server = mock_factory({"default": {"reply": "ok"}})
    body = {"messages": [{"role": "user", "content": [{"type": "text", "text": "hi"},
                                                      {"type": "image_url", "image_url": {"url": "data:,"}}]}]}
    httpx.post(server.url + "/chat/completions", json=body)
    log = httpx.get(server.url + "/__log").json()
    assert len(log) == 1 and log[0]["has_image"] and log[0]["text"] == "hi"


def test_fixture_file(tmp_path):
    (tmp_path / "f.json").write_text(json.dumps(REWIND))
    with MockBackend(tmp_path / "f.json") as server:
        assert post(server, "rewind").status_code == 200


def test_unmatched_is_not_retried(mock_factory, client_for, rewind_screen):
    server = mock_factory({"rules": []})
    ctx = extract_context(rewind_screen, detect_icons(rewind_screen)[1])
    with pytest.raises(BackendError):
        generate_alt_text(ctx, icon_png(), MMT_I, client=client_for(server))
    assert len(server.requests) == 1


def test_requests_equal_uncached_calls(mock_factory, client_for, rewind_screen, tmp_path):
    server = mock_factory(dict(REWIND, default={"reply": "tap"}))
    client = client_for(server)
    cache = ResultCache(tmp_path / "c")
    icons = detect_icons(rewind_screen)
    contexts = [extract_context(rewind_screen, c).with_label("x") for c in icons]
    first = [generate_alt_text(ctx, None, TEXTT, client=client, cache=cache) for ctx in contexts]
    again = [generate_alt_text(ctx, None, TEXTT, client=client, cache=cache) for ctx in contexts]
    assert len(server.requests) == len(contexts) == sum(not r.cached for r in first + again)
    assert all(r.cached for r in again)
    assert [r.alt_text for r in first] == [r.alt_text for r in again]
    assert "go back 15 seconds" in [r.alt_text for r in first]
