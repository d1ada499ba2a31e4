import json
import logging
import threading
import time
from decimal import Decimal

import httpx
import jsonschema
import pytest
from hypothesis import given, settings, strategies as st

from altgen.extract import detect_icons, extract_context
from altgen.genai.client import BackendConfig, BackendError, ChatClient, ResultCache
from altgen.genai.costs import account_costs, finetune_cost
from altgen.genai.finetune import (FinetuneValidationError, TrainingExample, chat_schema, export_finetune_dataset,
                                   make_record, validate_finetune_file)
from altgen.genai.generate import EmptyGenerationError, classify_icon, clean_alt_text, generate_alt_text
from altgen.genai.prompts import (BUILTIN, ImagePart, MissingIconLabelError, build_prompt,
                                  render_context)
from altgen.model import (FULL_INPUT, MMT_C, MMT_I, TEXTT, AblationConfig, AltTextResult, IconContext, NodeProps)

from conftest import GOLDEN, icon_png

PNG = ImagePart(b"\x89PNG fake bytes")


def reply(text, prompt_tokens=10, completion_tokens=3, status=200):
    return httpx.Response(status, json={"choices": [{"message": {"role": "assistant", "content": text}}],
                                        "usage": {"prompt_tokens": prompt_tokens,
                                                  "completion_tokens": completion_tokens}})


def scripted_client(handler, **cfg):
    calls = []

    def wrapped(request):
        calls.append(json.loads(request.content))
        return handler(request, len(calls))

    client = ChatClient(BackendConfig(endpoint="http://backend.test/v1", backoff=0.0, **cfg),
                        transport=httpx.MockTransport(wrapped))
    return client, calls


@pytest.fixture
def rewind_ctx(rewind_screen):
    return extract_context(rewind_screen, detect_icons(rewind_screen)[1])


class TestPrompts:
    def test_textt_golden(self, rewind_ctx):
        text = build_prompt(rewind_ctx.with_label("rewind"), TEXTT).text
        assert text == (GOLDEN / "prompt_textt_rewind.txt").read_text(encoding="utf-8")

    def test_mmt_golden(self, rewind_ctx):
        text = build_prompt(rewind_ctx, MMT_I, image=PNG).text
        assert text == (GOLDEN / "prompt_mmt_rewind.txt").read_text(encoding="utf-8")
        assert "{icon-only label}" not in text and "'rewind'" not in text

    def test_instructions_always_present(self, rewind_ctx):
        for mode in (TEXTT, MMT_I, MMT_C):
            for ab in (FULL_INPUT, AblationConfig(True, True, True)):
                text = build_prompt(rewind_ctx, mode, ab, label_fallback="x").text
                assert "short (within 2-7 words)" in text
                assert "Avoid generic words like 'button', 'image', 'icon' etc." in text

    def test_label_stays_out_of_context_block(self, rewind_ctx):
        block = render_context(rewind_ctx.with_label("rewind"))
        assert "icon_label" not in block and "rewind_button" in block

    def test_missing_label(self, rewind_ctx):
        with pytest.raises(MissingIconLabelError):
            build_prompt(rewind_ctx, TEXTT)
        assert "tag 'unknown'" in build_prompt(rewind_ctx, TEXTT, label_fallback="unknown").text

    def test_determinism(self, rewind_ctx):
        a = build_prompt(rewind_ctx, MMT_I, image=PNG, model="m")
        b = build_prompt(rewind_ctx, MMT_I, image=PNG, model="m")
        assert a.text == b.text and a.fingerprint == b.fingerprint
        assert build_prompt(rewind_ctx, MMT_I, image=PNG, model="other").fingerprint != a.fingerprint
        assert build_prompt(rewind_ctx, MMT_I, image=ImagePart(b"x"), model="m").fingerprint != a.fingerprint

    def test_textt_never_carries_image(self, rewind_ctx):
        with pytest.raises(ValueError):
            build_prompt(rewind_ctx.with_label("x"), TEXTT, image=PNG)

    def test_messages_shape(self, rewind_ctx):
        mmt = build_prompt(rewind_ctx, MMT_I, image=PNG).messages()
        assert len(mmt) == 1 and mmt[0]["role"] == "user"
        kinds = [p["type"] for p in mmt[0]["content"]]
        assert kinds == ["text", "image_url"]
        assert mmt[0]["content"][1]["image_url"]["url"].startswith("data:image/png;base64,")
        textt = build_prompt(rewind_ctx.with_label("x"), TEXTT).messages()
        assert isinstance(textt[0]["content"], str)

    def test_override_changes_version(self, tmp_path):
        f = tmp_path / "t.txt"
        f.write_text("Describe {icon context}")
        t = BUILTIN.override(mmt=f)
        assert t.mmt == "Describe {icon context}" and t.version.startswith("override-")
        assert BUILTIN.override() is BUILTIN


SENTINELS = dict(ocr="SENTINELOCR", rid="SENTINELRID", parent="SENTINELPARENT", sibling="SENTINELSIBLING")


def sentinel_ctx():
    return IconContext("a.Main", NodeProps("ImageButton", SENTINELS["rid"], "Play"),
                       NodeProps("LinearLayout", SENTINELS["parent"]),
                       (NodeProps("TextView", SENTINELS["sibling"]),), (SENTINELS["ocr"],), "play")


@pytest.mark.parametrize("mode", [TEXTT, MMT_I])
@pytest.mark.parametrize("flag,removed", [("ocr", ["ocr"]), ("resource-id", ["rid"]),
                                          ("parent-sibling", ["parent", "sibling"])])
def test_ablation_removes_exactly_its_component(mode, flag, removed):
    image = PNG if mode is MMT_I else None
    full = build_prompt(sentinel_ctx(), mode, image=image).text
    cut = build_prompt(sentinel_ctx(), mode, AblationConfig.from_flags([flag]), image=image).text
    for key, token in SENTINELS.items():
        assert token in full
        assert (token not in cut) == (key in removed), (flag, key)


class TestClient:
    def test_retries_then_succeeds(self, rewind_ctx):
        client, calls = scripted_client(lambda r, n: reply("", status=503) if n < 3 else reply("rewind"))
        assert client.complete(build_prompt(rewind_ctx, MMT_I, image=PNG)).attempts == 3
        assert len(calls) == 3

    def test_exhausted_carries_attempt_log(self, rewind_ctx):
        client, calls = scripted_client(lambda r, n: reply("", status=500), max_attempts=2)
        with pytest.raises(BackendError) as err:
            client.complete(build_prompt(rewind_ctx, MMT_I, image=PNG))
        assert err.value.attempts == ["#1: HTTP 500", "#2: HTTP 500"]

    def test_client_errors_not_retried(self, rewind_ctx):
        client, calls = scripted_client(lambda r, n: reply("", status=400))
        with pytest.raises(BackendError):
            client.complete(build_prompt(rewind_ctx, MMT_I, image=PNG))
        assert len(calls) == 1

    def test_timeout_retried(self, rewind_ctx):
        def handler(request, n):
            if n == 1:
                raise httpx.ReadTimeout("slow", request=request)
            return reply("ok")

        client, calls = scripted_client(handler)
        assert client.complete(build_prompt(rewind_ctx, MMT_I, image=PNG)).text == "ok"

    def test_headers_and_body(self, rewind_ctx, monkeypatch):
        seen = {}

        def handler(request):
            seen.update(request.headers)
            seen["body"] = json.loads(request.content)
            return reply("x")

        monkeypatch.setenv("ALTGEN_API_KEY", "sk-test")
        client = ChatClient(BackendConfig(endpoint="http://b.test/v1"), transport=httpx.MockTransport(handler))
        payload = build_prompt(rewind_ctx, MMT_I, image=PNG, model=client.config.model)
        client.complete(payload)
        assert seen["authorization"] == "Bearer sk-test"
        assert seen["x-altgen-fingerprint"] == payload.fingerprint
        assert seen["body"]["temperature"] == 0 and seen["body"]["max_tokens"] == 32

    def test_in_flight_bound(self, rewind_ctx):
        active, peak, lock = [0], [0], threading.Lock()

        def handler(request):
            with lock:
                active[0] += 1
                peak[0] = max(peak[0], active[0])
            time.sleep(0.02)
            with lock:
                active[0] -= 1
            return reply("x")

        client = ChatClient(BackendConfig(endpoint="http://b.test/v1", max_in_flight=2),
                            transport=httpx.MockTransport(handler))
        payload = build_prompt(rewind_ctx, MMT_I, image=PNG)
        threads = [threading.Thread(target=client.complete, args=(payload,)) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert peak[0] == 2

    def test_config_validation(self):
        with pytest.raises(ValueError):
            BackendConfig(price_prompt=Decimal("-1"))
        assert BackendConfig().cost(1_000_000, 1_000_000) == Decimal("12.5")


class TestClassify:
    @pytest.mark.parametrize("answer,label", [("play button", "play button"), ("  delete \n", "delete")])
    def test_trim(self, answer, label):
        client, _ = scripted_client(lambda r, n: reply(answer))
        assert classify_icon(icon_png(), client) == label

    def test_long_answer_truncated(self, caplog):
        client, _ = scripted_client(lambda r, n: reply("This looks like a circular arrow pointing backwards"))
        with caplog.at_level(logging.WARNING):
            assert classify_icon(icon_png(), client) == "This looks"
        assert "8 words" in caplog.text

    def test_sends_classifier_prompt_with_image(self):
        client, calls = scripted_client(lambda r, n: reply("rewind"))
        classify_icon(icon_png(), client)
        parts = calls[0]["messages"][0]["content"]
        assert parts[0]["text"] == ("You are an image classifier. What is the class of this UI icon? "
                                    "Only provide the class as response.")
        assert parts[1]["type"] == "image_url"

    def test_cached(self, cache):
        client, calls = scripted_client(lambda r, n: reply("rewind"))
        assert classify_icon(icon_png(), client, cache) == classify_icon(icon_png(), client, cache) == "rewind"
        assert len(calls) == 1


class TestGenerate:
    def test_rewind_example_and_cache(self, rewind_ctx, cache):
        client, calls = scripted_client(lambda r, n: reply("go back 15 seconds", 150, 4))
        first = generate_alt_text(rewind_ctx, icon_png(), MMT_I, client=client, cache=cache, icon_ref="rw")
        second = generate_alt_text(rewind_ctx, icon_png(), MMT_I, client=client, cache=cache, icon_ref="rw")
        assert first.alt_text == second.alt_text == "go back 15 seconds"
        assert (first.cached, second.cached) == (False, True)
        assert first.cost_usd == Decimal("0.000415") and second.cost_usd == 0
        assert first.token_usage == (150, 4) and len(calls) == 1
        path = cache.path_for(first.prompt_fingerprint)
        assert path.parent.name == first.prompt_fingerprint[:2] and path.exists()

    def test_cache_persists_across_instances(self, rewind_ctx, tmp_path):
        client, calls = scripted_client(lambda r, n: reply("rewind"))
        generate_alt_text(rewind_ctx, PNG, MMT_I, client=client, cache=ResultCache(tmp_path / "c"))
        again = generate_alt_text(rewind_ctx, PNG, MMT_I, client=client, cache=ResultCache(tmp_path / "c"))
        assert again.cached and len(calls) == 1

    @pytest.mark.parametrize("raw,clean", [('"delete"', "delete"), ("Go back.", "Go back"),
                                           ("'Share photo'.\nExtra line", "Share photo"), ("“Play”", "Play")])
    def test_reply_cleanup(self, raw, clean):
        assert clean_alt_text(raw) == clean

    def test_empty_generation(self, rewind_ctx):
        client, _ = scripted_client(lambda r, n: reply(' "" '))
        with pytest.raises(EmptyGenerationError):
            generate_alt_text(rewind_ctx, PNG, MMT_I, client=client)

    def test_mmt_needs_image(self, rewind_ctx):
        client, _ = scripted_client(lambda r, n: reply("x"))
        with pytest.raises(ValueError):
            generate_alt_text(rewind_ctx, None, MMT_I, client=client)

    def test_textt_sends_text_only(self, rewind_ctx):
        client, calls = scripted_client(lambda r, n: reply("go back"))
        r = generate_alt_text(rewind_ctx.with_label("rewind"), None, TEXTT, client=client)
        assert r.alt_text == "go back" and isinstance(calls[0]["messages"][0]["content"], str)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=1, max_size=20), st.booleans())
def test_cache_soundness(sequence, threaded):
    client, calls = scripted_client(lambda r, n: reply("alt text"))
    cache = ResultCache()
    ctxs = [IconContext("a.Main", NodeProps("ImageButton", f"b{i}")) for i in range(6)]

    def run(i):
        generate_alt_text(ctxs[i], PNG, MMT_I, client=client, cache=cache)

    if threaded:
        threads = [threading.Thread(target=run, args=(i,)) for i in sequence]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    else:
        for i in sequence:
            run(i)
    assert len(calls) == len(set(sequence))


class TestCosts:
    def _result(self, cost, cached=False, mode=MMT_I, usage=(0, 0)):
        return AltTextResult("i", "x", mode, "f", usage, Decimal(cost) if not cached else Decimal(0), cached)

    def test_empty(self):
        assert account_costs([]).total_usd == 0

    def test_sum(self):
        s = account_costs([self._result("0.5"), self._result("0.25", mode=TEXTT), self._result(0, cached=True)])
        assert s.inference_usd == Decimal("0.75")
        assert s.by_mode == {"MMT_i": Decimal("0.5"), "TextT": Decimal("0.25")}
        assert (s.calls, s.cached) == (2, 1)

    def test_zero_shot_calibration(self):
        # 1,635 icon-only requests of ~150 prompt and ~4 completion tokens at list prices
        cfg = BackendConfig()
        results = [self._result(cfg.cost(150, 4)) for _ in range(1635)]
        total = account_costs(results).inference_usd
        assert total == Decimal("0.678525")
        assert abs(total - Decimal("0.68")) / Decimal("0.68") < Decimal("0.10")

    @given(st.lists(st.decimals(0, 5, places=6), max_size=10), st.decimals(0, 5, places=6))
    def test_monotone(self, existing, extra):
        base = account_costs([self._result(c) for c in existing]).total_usd
        more = account_costs([self._result(c) for c in existing] + [self._result(extra)]).total_usd
        assert more >= base

    def test_finetune_cost(self):
        assert finetune_cost(1_000_000, 3) == Decimal("75")
        summary = account_costs([], finetune_estimate_usd=Decimal("75"))
        assert summary.total_usd == Decimal("75") and summary.to_dict()["total_usd"] == "75"


class TestFinetune:
    def _examples(self, n, cls="play", image=None):
        return [TrainingExample(IconContext("a.Main", NodeProps("ImageButton", f"b{i}")), f"label {i}", image,
                                cls, f"s:{i}") for i in range(n)]

    def test_textt_lines(self, tmp_path):
        out = tmp_path / "ft.jsonl"
        examples = [TrainingExample(e.context.with_label("play"), e.label, None, e.icon_class, e.icon_ref)
                    for e in self._examples(2)]
        sidecar = export_finetune_dataset(examples, TEXTT, out)
        lines = out.read_text().splitlines()
        assert len(lines) == 2 and validate_finetune_file(out) == 2
        for line in lines:
            roles = [m["role"] for m in json.loads(line)["messages"]]
            assert roles == ["user", "assistant"]
        config = json.loads(sidecar.read_text())
        assert config["epochs"] == 3 and config["records"] == 2 and config["class_counts"] == {"play": 2}

    def test_mmt_single_image(self, tmp_path):
        out = tmp_path / "ft.jsonl"
        export_finetune_dataset(self._examples(1, image=PNG), MMT_I, out)
        line = out.read_text()
        assert line.count('"image_url"') == 2  # the part type and its payload key
        msg = json.loads(line)["messages"][0]["content"]
        assert [p["type"] for p in msg] == ["text", "image_url"]
        assert validate_finetune_file(out) == 1

    def test_mmt_without_image(self):
        with pytest.raises(FinetuneValidationError):
            make_record(self._examples(1)[0], MMT_I)

    def test_cap_enforced(self, tmp_path):
        with pytest.raises(FinetuneValidationError):
            export_finetune_dataset(self._examples(16, image=PNG), MMT_I, tmp_path / "x.jsonl")
        assert not (tmp_path / "x.jsonl").exists()

    def test_schema_rejects_bad_line(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text(json.dumps({"messages": [{"role": "user", "content": "hi"}]}) + "\n")
        with pytest.raises(FinetuneValidationError):
            validate_finetune_file(bad)
        jsonschema.Draft202012Validator.check_schema(chat_schema())
